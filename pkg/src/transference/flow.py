"""Successive minima of the lattice attached to Theta along the diagonal flow.

The lattice is Lambda = {(x, y - Theta x) : (x, y) in Z^m + Z^n}; its basis
matrix is [[E_m, 0], [-Theta, E_n]]. Along the standard path the box B(s)
has half-sides e^s on the first m coordinates and e^{-ms/n} on the last n.
Vectors are always carried as integer coordinates z = (x, y); their images
are evaluated from exact integer residuals.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .problem import ApproximationProblem
from .reduction import (
    EnumerationError,
    ScaledBasis,
    canonical_sign,
    extend_flag,
    lll,
    minimise_outside,
)

logger = logging.getLogger(__name__)

EPS = 1e-12
# float exponent range guard for e^{tau}
MAX_EXPONENT = 700.0


class FlowError(RuntimeError):
    """A flow computation failed; ``s`` records the offending flow time."""

    def __init__(self, message: str, s: float | None = None):
        super().__init__(message if s is None else f"{message} (s={s!r})")
        self.s = s


class PrecisionError(FlowError):
    """The stored precision of Theta cannot resolve the requested minima."""


@dataclass(frozen=True)
class Lattice:
    """Unimodular lattice given by an exact basis matrix (columns are basis vectors)."""

    basis: tuple[tuple[Fraction, ...], ...]

    @property
    def dimension(self) -> int:
        return len(self.basis)

    @property
    def determinant(self) -> Fraction:
        return _det([list(r) for r in self.basis])

    def image(self, z: Sequence[int]) -> tuple[Fraction, ...]:
        return tuple(sum(row[j] * z[j] for j in range(len(z))) for row in self.basis)


def _det(a: list[list[Fraction]]) -> Fraction:
    n = len(a)
    a = [[Fraction(v) for v in row] for row in a]
    det = Fraction(1)
    for i in range(n):
        piv = next((r for r in range(i, n) if a[r][i] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != i:
            a[i], a[piv] = a[piv], a[i]
            det = -det
        det *= a[i][i]
        for r in range(i + 1, n):
            f = a[r][i] / a[i][i]
            if f:
                for c in range(i, n):
                    a[r][c] -= f * a[i][c]
    return det


def build_lattice(problem: ApproximationProblem, transposed: bool = False) -> Lattice:
    """Basis [[E_m, 0], [-Theta, E_n]] of Lambda (for the transpose when asked)."""
    if transposed:
        problem = problem.transposed()
    m, d = problem.m, problem.d
    rows = []
    for i in range(d):
        row = []
        for j in range(d):
            if i < m:
                row.append(Fraction(int(i == j)))
            elif j < m:
                row.append(-problem.theta[i - m][j])
            else:
                row.append(Fraction(int(i == j)))
        rows.append(tuple(row))
    return Lattice(tuple(rows))


@dataclass(frozen=True)
class PathSpec:
    """Linear ray tau(s) = s * slopes with zero slope sum."""

    slopes: tuple[float, ...]

    def __post_init__(self):
        if abs(math.fsum(self.slopes)) > 1e-12 * max(1.0, max(abs(v) for v in self.slopes)):
            raise ValueError("path slopes must sum to zero")

    @classmethod
    def standard(cls, n: int, m: int) -> "PathSpec":
        return cls((1.0,) * m + (-m / n,) * n)

    def tau(self, s: float) -> np.ndarray:
        return np.array(self.slopes) * s


def box_shape(path: PathSpec, s: float) -> np.ndarray:
    """Half-side lengths e^{tau_i(s)} of B(s); their product is 1."""
    if s < 0:
        raise FlowError("flow time must be nonnegative", s)
    tau = path.tau(s)
    if np.abs(tau).max(initial=0.0) > MAX_EXPONENT:
        raise FlowError(
            "box half-sides leave the floating exponent range; "
            "shorten the flow or rescale the path",
            s,
        )
    return np.exp(tau)


def make_evaluator(problem: ApproximationProblem, half_sides: Sequence[float]):
    """z = (x, y) -> image of z in the frame where the box is the unit cube."""
    n, m = problem.n, problem.m
    q = problem.denominator
    nums = problem.numerators
    inv = [1.0 / float(a) for a in half_sides]

    def evaluate(z: Sequence[int]) -> np.ndarray:
        x = z[:m]
        out = np.empty(m + n)
        for i in range(m):
            out[i] = x[i] * inv[i]
        for j in range(n):
            r = q * z[m + j] - sum(a * b for a, b in zip(nums[j], x))
            out[m + j] = (r / q) * inv[m + j]
        return out

    return evaluate


def _precision_check(problem: ApproximationProblem, z: Sequence[int], half_sides, value: float, s) -> None:
    if problem.exact:
        return
    m = problem.m
    scale = max((abs(v) for row in problem.theta for v in row), default=Fraction(0)) + 1
    xnorm = sum(abs(v) for v in z[:m])
    err = float(xnorm * scale) * 2.0 ** (-problem.bits) / float(min(half_sides[m:]))
    if err > 1e-2 * EPS * value:
        raise PrecisionError(
            f"Theta stored with {problem.bits} bits cannot resolve lambda={value:.3e}; "
            "increase the precision",
            s,
        )


@dataclass(frozen=True)
class FlowSample:
    s: float
    lambdas: tuple[float, ...]
    witnesses: tuple[tuple[int, ...], ...]

    @property
    def d(self) -> int:
        return len(self.lambdas)

    @property
    def log_lambdas(self) -> tuple[float, ...]:
        return tuple(math.log(v) for v in self.lambdas)

    @property
    def psis(self) -> tuple[float, ...]:
        return tuple(math.log(v) / self.s for v in self.lambdas)

    @property
    def Psis(self) -> tuple[float, ...]:
        out, acc = [], 0.0
        for v in self.log_lambdas:
            acc += v
            out.append(acc / self.s)
        return tuple(out)


@dataclass
class MinimaResult:
    lambdas: tuple[float, ...]
    witnesses: tuple[tuple[int, ...], ...]
    basis: list[list[int]] = field(repr=False)


def _reduced_basis(problem, path, s, warm: Sequence[Sequence[int]] | None) -> ScaledBasis:
    d = problem.d
    if warm is not None:
        basis = ScaledBasis(warm, make_evaluator(problem, box_shape(path, s)))
        lll(basis)
        return basis
    # cold start: follow the flow in unit steps so that each reduction is mild
    steps = max(1, math.ceil(s))
    cols = [[int(i == j) for i in range(d)] for j in range(d)]
    basis = None
    for k in range(1, steps + 1):
        sk = s * k / steps
        basis = ScaledBasis(cols, make_evaluator(problem, box_shape(path, sk)))
        lll(basis)
        cols = basis.G
    return basis


def successive_minima(
    problem: ApproximationProblem,
    s: float,
    path: PathSpec | None = None,
    warm_basis: Sequence[Sequence[int]] | None = None,
    half_sides: Sequence[float] | None = None,
) -> MinimaResult:
    """lambda_1 <= ... <= lambda_d of the box B(s) (or of explicit half-sides).

    Minima are found greedily: lambda_p is the smallest norm of a lattice
    vector outside the span of the first p-1 witnesses, searched on a basis
    adapted to that span.
    """
    path = path or PathSpec.standard(problem.n, problem.m)
    d = problem.d
    try:
        if half_sides is None:
            half_sides = box_shape(path, s)
            basis = _reduced_basis(problem, path, s, warm_basis)
        else:
            half_sides = np.asarray(half_sides, dtype=float)
            start = warm_basis if warm_basis is not None else _reduced_basis(problem, path, s, None).G
            basis = ScaledBasis(start, make_evaluator(problem, half_sides))
            lll(basis)
        reduced = [list(c) for c in basis.G]
        evaluate = basis.evaluate
        lambdas, witnesses = [], []
        for p in range(d):
            _, z, coeffs = minimise_outside(basis, p)
            value = float(np.abs(evaluate(z)).max())
            _precision_check(problem, z, half_sides, value, s)
            if lambdas and value < lambdas[-1]:
                if value < lambdas[-1] * (1 - 1e-9):
                    raise FlowError("successive minima came out of order", s)
                value = lambdas[-1]
            lambdas.append(value)
            witnesses.append(tuple(canonical_sign(z)))
            extend_flag(basis, p, coeffs)
            if p + 1 < d:
                lll(basis, 0, p + 1)
                lll(basis, p + 1, d)
    except EnumerationError as exc:
        raise FlowError(str(exc), s) from exc
    return MinimaResult(tuple(lambdas), tuple(witnesses), reduced)


def psi_profile(
    problem: ApproximationProblem,
    s_grid: Iterable[float],
    path: PathSpec | None = None,
) -> list[FlowSample]:
    """One FlowSample per grid point, reusing each reduced basis for the next point."""
    grid = list(s_grid)
    if any(s <= 0 for s in grid):
        raise FlowError("flow times must be positive")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise FlowError("flow grid must be increasing")
    warm = None
    out = []
    for s in grid:
        res = successive_minima(problem, s, path, warm_basis=warm)
        warm = res.basis
        out.append(FlowSample(float(s), res.lambdas, res.witnesses))
    return out


def s_grid(s_max: float, step: float, s_min: float | None = None) -> list[float]:
    """Uniform grid from s_min (default: step) to s_max; s_max is always included."""
    start = step if s_min is None else s_min
    count = int(math.floor((s_max - start) / step + 1e-9)) + 1
    grid = [round(start + k * step, 12) for k in range(count)]
    if s_max - grid[-1] > 1e-9:
        grid.append(float(s_max))
    return grid


def exact_grid(n: int, u_min: int = 2, u_max: int = 64) -> list[float]:
    """Flow times s = n ln u, for which the box half-sides are u^n and u^{-m}."""
    return [n * math.log(u) for u in range(u_min, u_max + 1)]


# -- witness gauges ---------------------------------------------------------


@dataclass(frozen=True)
class WitnessGauges:
    mu: float
    nu: float
    lam: float

    @property
    def balanced(self) -> bool:
        return abs(self.mu - self.nu) <= 1e-9 * self.lam


def gauges(problem: ApproximationProblem, s: float, z: Sequence[int]) -> tuple[float, float]:
    """(mu_s(v), nu_s(v)) for the lattice vector v with integer coordinates z."""
    w = make_evaluator(problem, box_shape(PathSpec.standard(problem.n, problem.m), s))(z)
    m = problem.m
    return float(np.abs(w[:m]).max()), float(np.abs(w[m:]).max())


def first_minimum_gauges(sample: FlowSample, problem: ApproximationProblem) -> WitnessGauges:
    mu, nu = gauges(problem, sample.s, sample.witnesses[0])
    lam = sample.lambdas[0]
    if abs(max(mu, nu) - lam) > 1e-9 * lam:
        raise FlowError("witness gauges disagree with lambda_1", sample.s)
    return WitnessGauges(mu, nu, lam)


# -- companion parameters ---------------------------------------------------


@dataclass(frozen=True)
class CompanionPair:
    """One side of the construction: the flow time where the first two minima meet."""

    side: str
    s: float
    s_companion: float
    lam: float
    lam_companion: float
    factor: float
    witness: tuple[int, ...]
    check_lambda_1: float
    check_lambda_2: float


def _points_in_box(problem, half_sides, warm, cap: int = 200000) -> list[tuple[list[int], np.ndarray]]:
    """All nonzero lattice vectors (up to sign) in the closed box, with slack."""
    basis = ScaledBasis(warm, make_evaluator(problem, half_sides))
    lll(basis)
    B = basis.B
    d = basis.d
    R = np.linalg.qr(B, mode="r")
    rad2 = d * (1 + 1e-9) ** 2
    found = []
    c = [0] * d

    def rec(k, partial, top_zero):
        if k < 0:
            if any(c):
                w = B @ np.array(c, dtype=float)
                if np.abs(w).max() <= 1 + 1e-9:
                    found.append(basis.vector(c))
                    if len(found) > cap:
                        raise EnumerationError("box contains too many lattice points")
            return
        center = -sum(R[k, j] * c[j] for j in range(k + 1, d)) / R[k, k]
        hw = math.sqrt(max(rad2 - partial, 0.0)) / abs(R[k, k])
        lo, hi = math.ceil(center - hw), math.floor(center + hw)
        if top_zero:
            lo = max(lo, 0)
        for v in range(lo, hi + 1):
            c[k] = v
            y = R[k, k] * v + sum(R[k, j] * c[j] for j in range(k + 1, d))
            if partial + y * y <= rad2:
                rec(k - 1, partial + y * y, top_zero and v == 0)
        c[k] = 0

    rec(d - 1, 0.0, True)
    evaluate = make_evaluator(problem, half_sides)
    return [(z, evaluate(z)) for z in found]


def companion_parameters(
    problem: ApproximationProblem,
    s: float,
    side: str,
    minima: MinimaResult | None = None,
) -> CompanionPair:
    """Flow time s' (side="shrink") or s'' (side="grow") where lambda_1 = lambda_2.

    shrink needs mu_s(v_s) = lambda_1(B(s)); grow needs nu_s(v_s) = lambda_1(B(s)).
    """
    if side not in ("shrink", "grow"):
        raise ValueError("side must be 'shrink' or 'grow'")
    n, m, d = problem.n, problem.m, problem.d
    path = PathSpec.standard(n, m)
    if minima is None:
        minima = successive_minima(problem, s, path)
    lam = minima.lambdas[0]
    mu, nu = gauges(problem, s, minima.witnesses[0])
    tol = 1e-9 * lam
    if side == "shrink" and abs(mu - lam) > tol:
        raise FlowError("shrink side needs mu_s(v_s) = lambda_1", s)
    if side == "grow" and abs(nu - lam) > tol:
        raise FlowError("grow side needs nu_s(v_s) = lambda_1", s)

    ex, er = math.exp(s), math.exp(-m * s / n)
    if side == "shrink":
        limit = lam ** (-d / n)
        half = [lam * ex] * m + [lam * limit * er] * n
    else:
        limit = lam ** (-d / m)
        half = [lam * limit * ex] * m + [lam * er] * n
    points = _points_in_box(problem, half, minima.basis)
    best = None
    for z, _ in points:
        mu_z, nu_z = gauges(problem, s, z)
        if side == "shrink":
            if mu_z >= lam * (1 - 1e-9):
                continue
            factor = nu_z / lam
        else:
            if nu_z >= lam * (1 - 1e-9):
                continue
            factor = mu_z / lam
        key = (factor, tuple(canonical_sign(z)))
        if best is None or factor < best[0] * (1 - 1e-12) or (
            abs(factor - best[0]) <= 1e-12 * best[0] and key[1] < best[1]
        ):
            best = key
    if best is None:
        raise FlowError("no lattice point found within the Minkowski bracket", s)
    factor = max(best[0], 1.0)
    if side == "shrink":
        s_c = s - (n / d) * math.log(factor)
        lam_c = lam * factor ** (n / d)
    else:
        s_c = s + (n / d) * math.log(factor)
        lam_c = lam * factor ** (m / d)
    check = successive_minima(problem, s_c, path, warm_basis=minima.basis)
    l1, l2 = check.lambdas[0], check.lambdas[1]
    if abs(l1 - lam_c) > 1e-8 * lam_c or abs(l2 - lam_c) > 1e-8 * lam_c:
        raise FlowError(
            f"companion check failed: lambda_1={l1!r}, lambda_2={l2!r}, expected {lam_c!r}", s
        )
    return CompanionPair(side, s, s_c, lam, lam_c, factor, best[1], l1, l2)


# -- local minima of psi_1 --------------------------------------------------


def _corner(problem: ApproximationProblem, z: Sequence[int]) -> float | None:
    """Flow time where mu_s(v) = nu_s(v) for the vector with coordinates z."""
    m, n = problem.m, problem.n
    x = max(abs(v) for v in z[:m])
    r = max(abs(v) for v in problem.residuals(z[:m], z[m:]))
    if x == 0 or r == 0:
        return None
    return (math.log(x) - math.log(float(r))) / (1 + m / n)


def local_minima_of_psi1(
    samples: Sequence[FlowSample], problem: ApproximationProblem
) -> list[float]:
    """Flow times of the local minima of psi_1 detected on a sampled trace.

    Each discrete minimum is refined to the exact corner of the witness
    norm, where mu_s(v_s) = nu_s(v_s) = lambda_1.
    """
    psi = [smp.psis[0] for smp in samples]
    out = []
    for i in range(1, len(samples) - 1):
        if not (psi[i - 1] > psi[i] <= psi[i + 1]):
            continue
        lo, hi = samples[i - 1].s, samples[i + 1].s
        found = None
        for j in (i, i - 1, i + 1):
            sc = _corner(problem, samples[j].witnesses[0])
            if sc is None or not lo <= sc <= hi:
                continue
            res = successive_minima(problem, sc)
            mu, nu = gauges(problem, sc, samples[j].witnesses[0])
            if abs(max(mu, nu) - res.lambdas[0]) <= 1e-9 * res.lambdas[0] and abs(mu - nu) <= 1e-9 * res.lambdas[0]:
                found = sc
                break
        if found is not None and (not out or found > out[-1] + 1e-12):
            out.append(found)
    return out


# -- export -----------------------------------------------------------------


def trace_header(d: int) -> list[str]:
    return (
        ["s"]
        + [f"lambda_{i}" for i in range(1, d + 1)]
        + [f"psi_{i}" for i in range(1, d + 1)]
        + [f"Psi_{i}" for i in range(1, d + 1)]
    )


def _fmt(v: float, digits: int) -> str:
    return format(v, f".{digits}g")


def trace_to_csv(samples: Sequence[FlowSample], digits: int = 15) -> str:
    if not samples:
        raise FlowError("empty trace")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(trace_header(samples[0].d))
    for smp in samples:
        row = [smp.s, *smp.lambdas, *smp.psis, *smp.Psis]
        writer.writerow([_fmt(v, digits) for v in row])
    return buf.getvalue()


def witnesses_to_json(samples: Sequence[FlowSample], digits: int = 15) -> str:
    payload = {_fmt(smp.s, digits): [list(w) for w in smp.witnesses] for smp in samples}
    return json.dumps(payload, indent=1)


def trace_from_csv(text: str) -> list[dict[str, float]]:
    return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(io.StringIO(text))]
