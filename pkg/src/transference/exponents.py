"""Diophantine and Schmidt exponent estimators.

Three independent routes are provided:

* the flow route reads tail-window extrema of Psi_p(s) from a flow trace and
  converts them with (1 + beta_p)(kappa_p + Psi_lower_p) = d/n;
* the classical route searches x exhaustively for the best approximation
  error err(t) = min_{0 < |x| <= t} |Theta x - y|;
* the grade-p route evaluates the wedge-product constraint system on a pool
  of integer p-vectors.

Infinite exponents are carried as ``math.inf`` and serialised as "inf".
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from typing import Iterable, Sequence

import numpy as np

from .exterior import (
    MultiVector,
    _wedge_table,
    enumerate_integer_multivectors,
    subsets,
    wedge,
    wedge_all,
)
from .flow import FlowSample, psi_profile, s_grid
from .problem import ApproximationProblem

logger = logging.getLogger(__name__)

INF = math.inf
# slack when validating Schmidt estimates against [-kappa_p, 0]
RANGE_SLACK = 1e-9


class EstimationError(ValueError):
    """An estimator was called with inputs it cannot use."""


def kappa(p: int, n: int, m: int) -> float:
    d = n + m
    if not 1 <= p <= d - 1:
        raise EstimationError(f"grade {p} outside [1, {d - 1}]")
    return min(float(p), m / n * (d - p))


def kappa_star(p: int, n: int, m: int) -> float:
    """kappa_p for the transposed problem: min(p, (n/m)(d - p))."""
    return kappa(p, m, n)


def ext_json(value):
    """JSON-safe extended real: infinities become strings, NaN becomes null."""
    if value is None:
        return None
    if isinstance(value, float):
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
    return value


def ext_from_json(value):
    if value is None:
        return math.nan
    if value == "inf":
        return INF
    if value == "-inf":
        return -INF
    return float(value)


# -- conversions ------------------------------------------------------------


def diophantine_from_schmidt(
    p: int, psi_lower: float, psi_upper: float, n: int, m: int, starred: bool = False
) -> tuple[float, float]:
    """(beta_p, alpha_p) from (Psi_lower_p, Psi_upper_p).

    With ``starred`` the arguments are the exponents of the transpose and
    the normalisation d/m with kappa*_p is used.
    """
    d = n + m
    k = kappa_star(p, n, m) if starred else kappa(p, n, m)
    scale = m if starred else n
    out = []
    for psi in (psi_lower, psi_upper):
        if not -k - RANGE_SLACK <= psi <= RANGE_SLACK:
            raise EstimationError(f"Schmidt exponent {psi!r} outside [-{k}, 0]")
        den = scale * (k + psi)
        out.append(INF if den <= 0 else d / den - 1)
    return out[0], out[1]


def schmidt_from_diophantine(
    p: int, beta: float, alpha: float, n: int, m: int, starred: bool = False
) -> tuple[float, float]:
    """Inverse of :func:`diophantine_from_schmidt`."""
    d = n + m
    k = kappa_star(p, n, m) if starred else kappa(p, n, m)
    scale = m if starred else n
    out = []
    for e in (beta, alpha):
        out.append(-k if math.isinf(e) else d / (scale * (1 + e)) - k)
    return out[0], out[1]


# -- reports ----------------------------------------------------------------


@dataclass
class ExponentReport:
    """Estimated exponents of one grade by one method."""

    p: int
    method: str
    beta: float
    alpha: float
    psi_lower: float | None = None
    psi_upper: float | None = None
    window: tuple[float, float] | None = None
    transposed: bool = False
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "p": self.p,
            "method": self.method,
            "transposed": self.transposed,
            "beta": ext_json(self.beta),
            "alpha": ext_json(self.alpha),
            "psi_lower": ext_json(self.psi_lower),
            "psi_upper": ext_json(self.psi_upper),
            "window": None if self.window is None else [ext_json(float(w)) for w in self.window],
            "diagnostics": _json_clean(self.diagnostics),
        }

    @classmethod
    def from_json(cls, data: dict) -> "ExponentReport":
        window = data.get("window")
        return cls(
            p=data["p"],
            method=data["method"],
            beta=ext_from_json(data["beta"]),
            alpha=ext_from_json(data["alpha"]),
            psi_lower=None if data.get("psi_lower") is None else ext_from_json(data["psi_lower"]),
            psi_upper=None if data.get("psi_upper") is None else ext_from_json(data["psi_upper"]),
            window=None if window is None else tuple(ext_from_json(w) for w in window),
            transposed=data.get("transposed", False),
            diagnostics=data.get("diagnostics", {}),
        )


def _json_clean(obj):
    if isinstance(obj, dict):
        return {str(k): _json_clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return ext_json(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, Fraction):
        return str(obj)
    return obj


# -- flow route ---------------------------------------------------------------


@dataclass(frozen=True)
class SchmidtEstimate:
    p: int
    lower: float
    upper: float
    window: tuple[float, float]
    raw_lower: float
    raw_upper: float
    clamped: bool
    samples: int
    rational: bool = False

    @property
    def oscillation(self) -> float:
        return self.raw_upper - self.raw_lower


def default_window(trace: Sequence[FlowSample]) -> tuple[float, float]:
    """The last half [s_max / 2, s_max] of a trace."""
    if not trace:
        raise EstimationError("empty flow trace")
    s_max = trace[-1].s
    return s_max / 2, s_max


def schmidt_estimate(
    trace: Sequence[FlowSample],
    p: int,
    n: int,
    m: int,
    window: tuple[float, float] | None = None,
    rational: bool = False,
) -> SchmidtEstimate:
    """Tail-window extrema of Psi_p(s), clamped to [-kappa_p, 0].

    For an exact rational matrix the solution lattice has full rank m: the
    first m minima eventually equal e^{-s} times fixed constants and the
    other n equal e^{ms/n} times the minima of the residual lattice. Then
    Psi_p(s) = -kappa_p + O(1/s) and the limits are exactly -kappa_p, which a
    finite window only approaches; ``rational=True`` reports the limit.
    """
    if not trace:
        raise EstimationError("empty flow trace")
    lo, hi = window or default_window(trace)
    if trace[0].s > lo + 1e-9:
        raise EstimationError(
            f"trace starts at s={trace[0].s} but the window starts at {lo}; "
            "a trace covering [s_min, s_max] needs s_max >= 2 s_min"
        )
    if trace[-1].s < hi - 1e-9:
        raise EstimationError(f"trace ends at s={trace[-1].s} before the window end {hi}")
    values = [smp.Psis[p - 1] for smp in trace if lo - 1e-9 <= smp.s <= hi + 1e-9]
    if len(values) < 2:
        raise EstimationError("fewer than two samples in the estimation window")
    k = kappa(p, n, m)
    raw_lo, raw_hi = min(values), max(values)
    lower, upper = min(max(raw_lo, -k), 0.0), min(max(raw_hi, -k), 0.0)
    clamped = (lower, upper) != (raw_lo, raw_hi)
    if clamped:
        logger.info("Psi_%d window extrema (%g, %g) clamped to [-%g, 0]", p, raw_lo, raw_hi, k)
    if rational:
        lower = upper = -k
    return SchmidtEstimate(p, lower, upper, (lo, hi), raw_lo, raw_hi, clamped, len(values), rational)


def schmidt_route_report(
    trace: Sequence[FlowSample],
    p: int,
    n: int,
    m: int,
    window: tuple[float, float] | None = None,
    rational: bool = False,
    transposed: bool = False,
) -> ExponentReport:
    """Flow-route report; for a transposed trace pass the transposed shape (n, m)."""
    est = schmidt_estimate(trace, p, n, m, window, rational)
    beta, alpha = diophantine_from_schmidt(p, est.lower, est.upper, n, m)
    return ExponentReport(
        p=p,
        method="schmidt-route",
        beta=beta,
        alpha=alpha,
        psi_lower=est.lower,
        psi_upper=est.upper,
        window=est.window,
        transposed=transposed,
        diagnostics={
            "raw_psi_lower": est.raw_lower,
            "raw_psi_upper": est.raw_upper,
            "oscillation": est.oscillation,
            "clamped": est.clamped,
            "samples": est.samples,
            "rational_limit": est.rational,
        },
    )


# -- classical route ------------------------------------------------------------


@dataclass(frozen=True)
class BestApproximation:
    """A record of the envelope: err(t) drops to ``error`` at t = ``height``."""

    height: int
    x: tuple[int, ...]
    y: tuple[int, ...]
    error: Fraction


@dataclass
class ClassicalEstimate:
    beta: float
    alpha: float
    window: tuple[int, int]
    records: list[BestApproximation]
    truncated: bool
    t_max: int
    witness: tuple[tuple[int, ...], tuple[int, ...]] | None = None

    def error_at(self, t: int) -> float:
        """err(t) from the records (inf before the first record)."""
        best = INF
        for r in self.records:
            if r.height > t:
                break
            best = float(r.error)
        return best

    def gamma_at(self, t: int) -> float:
        err = self.error_at(t)
        if err == 0:
            return INF
        return -math.log(err) / math.log(t)


def _exact_error(problem: ApproximationProblem, x: Sequence[int]) -> tuple[Fraction, tuple[int, ...]]:
    """min over y of |Theta x - y| (sup norm) with the nearest y."""
    q = problem.denominator
    y, worst = [], 0
    for row in problem.numerators:
        num = sum(a * b for a, b in zip(row, x))
        yi = (2 * num + q) // (2 * q)
        y.append(yi)
        worst = max(worst, abs(q * yi - num))
    return Fraction(worst, q), tuple(y)


def _float_rows(problem: ApproximationProblem) -> np.ndarray:
    return np.array([[float(v) for v in row] for row in problem.theta])


def _dist(v: np.ndarray) -> np.ndarray:
    return np.abs(v - np.rint(v))


def _shell_points(m: int, t: int) -> np.ndarray:
    """Integer x with max |x_i| = t, one per sign class."""
    chunks = []
    for j in range(m):
        before = [np.arange(-t + 1, t)] * j
        after = [np.arange(-t, t + 1)] * (m - j - 1)
        grids = np.meshgrid(*before, np.array([t]), *after, indexing="ij")
        chunks.append(np.stack([g.ravel() for g in grids], axis=1))
    return np.concatenate(chunks, axis=0)


def _shell_minima(theta: np.ndarray, t_max: int, budget: int) -> np.ndarray:
    """Float screen: smallest error among x with max |x_i| = t, for t = 0..t_max."""
    n, m = theta.shape
    shell = np.full(t_max + 1, np.inf)
    if m == 1:
        step = 1 << 20
        for start in range(1, t_max + 1, step):
            x = np.arange(start, min(t_max, start + step - 1) + 1, dtype=np.float64)
            err = np.zeros_like(x)
            for i in range(n):
                err = np.maximum(err, _dist(x * theta[i, 0]))
            shell[start:start + len(x)] = err
        return shell
    # remaining coordinates on a grid, grouped by their own sup norm
    axes = [np.arange(-t_max, t_max + 1)] * (m - 1)
    grids = np.meshgrid(*axes, indexing="ij")
    rest = np.stack([g.ravel() for g in grids], axis=1)
    rest_shell = np.abs(rest).max(axis=1)
    order = np.argsort(rest_shell, kind="stable")
    rest = rest[order]
    rest_shell = rest_shell[order]
    starts = np.searchsorted(rest_shell, np.arange(t_max + 1))
    partial = rest.astype(np.float64) @ theta[:, 1:].T
    zero_col = int(np.flatnonzero(rest_shell == 0)[0])
    width = rest.shape[0]
    block = max(1, budget // max(width, 1))
    ts = np.arange(t_max + 1)
    for r0 in range(0, t_max + 1, block):
        rows = np.arange(r0, min(t_max + 1, r0 + block))
        err = np.zeros((len(rows), width))
        for i in range(n):
            err = np.maximum(err, _dist(rows[:, None] * theta[i, 0] + partial[None, :, i]))
        if r0 == 0:
            err[0, zero_col] = np.inf
        g = np.minimum.reduceat(err, starts, axis=1)
        later = ts[None, :] > rows[:, None]
        shell = np.minimum(shell, np.where(later, g, np.inf).min(axis=0))
        own = np.where(later, np.inf, g).min(axis=1)
        shell[rows] = np.minimum(shell[rows], own)
    return shell


def _refine_shell(problem: ApproximationProblem, theta: np.ndarray, t: int):
    """Exact best approximation on the shell max |x| = t."""
    pts = _shell_points(problem.m, t)
    err = np.zeros(len(pts))
    for i in range(theta.shape[0]):
        err = np.maximum(err, _dist(pts.astype(np.float64) @ theta[i]))
    floor = err.min()
    cand = pts[err <= floor * (1 + 1e-6) + 1e-300]
    best = None
    for x in cand:
        x = tuple(int(v) for v in x)
        if next(v for v in x if v) < 0:
            x = tuple(-v for v in x)
        e, y = _exact_error(problem, x)
        if best is None or (e, x) < (best[0], best[1]):
            best = (e, x, y)
    return best


def classical_estimate(
    problem: ApproximationProblem,
    t_max: int,
    transposed: bool = False,
    tail: float = 0.5,
    max_points: int = 600_000_000,
    budget: int = 1 << 22,
) -> ClassicalEstimate:
    """Exhaustive best-approximation search for beta_1 and alpha_1.

    err(t) is screened in floating point over every nonzero x with
    |x| <= t_max and re-evaluated exactly at each new record. With
    gamma(t) = -ln err(t) / ln t over the tail t in [t_max^tail, t_max],
    beta_1 is the largest and alpha_1 the smallest value of gamma.
    """
    if transposed:
        problem = problem.transposed()
    m = problem.m
    t_max = int(t_max)
    if t_max < 4:
        raise EstimationError("t_max must be at least 4")
    truncated = False
    points = (2 * t_max + 1) ** m // 2
    if points > max_points:
        reduced = int(((2 * max_points) ** (1.0 / m) - 1) // 2)
        logger.warning("classical search truncated from t=%d to t=%d", t_max, reduced)
        t_max, truncated = reduced, True
    theta = _float_rows(problem)
    shell = _shell_minima(theta, t_max, budget)
    records: list[BestApproximation] = []
    current = np.inf
    # candidates for new records: shells whose float minimum beats the running best
    running = np.minimum.accumulate(shell[1:])
    prev = np.concatenate(([np.inf], running[:-1]))
    candidates = np.flatnonzero(shell[1:] < prev * (1 + 1e-9)) + 1
    for t in candidates:
        t = int(t)
        if m == 1:
            e, y = _exact_error(problem, (t,))
            x = (t,)
        else:
            e, x, y = _refine_shell(problem, theta, t)
        if e < current:
            current = e
            records.append(BestApproximation(t, x, y, e))
            if e == 0:
                break
    t_lo = max(2, math.ceil(t_max ** tail))
    gammas_hi, gammas_lo = [], []
    witness = None
    # value at the window start
    inside = [r for r in records if r.height <= t_lo]

    def gamma(err: Fraction, t: int) -> float:
        return INF if err == 0 else -math.log(err) / math.log(t)

    if inside:
        gammas_hi.append(gamma(inside[-1].error, t_lo))
    later = [r for r in records if t_lo < r.height <= t_max]
    prev_err = inside[-1].error if inside else None
    for r in later:
        gammas_hi.append(gamma(r.error, r.height))
        if prev_err is not None:
            gammas_lo.append(gamma(prev_err, r.height - 1))
        prev_err = r.error
    if prev_err is not None:
        gammas_lo.append(gamma(prev_err, t_max))
    if not gammas_hi or not gammas_lo:
        raise EstimationError("no approximation inside the estimation window")
    if records and records[-1].error == 0:
        witness = (records[-1].x, records[-1].y)
    return ClassicalEstimate(
        beta=max(gammas_hi),
        alpha=min(gammas_lo),
        window=(t_lo, t_max),
        records=records,
        truncated=truncated,
        t_max=t_max,
        witness=witness,
    )


def matched_flow_window(est: ClassicalEstimate, n: int, m: int) -> tuple[float, float]:
    """Flow window seeing the same approximations as the classical tail.

    The box |x| <= t, |Theta x - y| <= err(t) has the shape of the flow box
    at s = n ln(t / err(t)) / d, so the classical window [t_lo, t_max] maps
    to the flow window between the images of its ends.
    """
    d = n + m
    ends = []
    for t in est.window:
        err = est.error_at(t)
        if err == 0 or not math.isfinite(err):
            raise EstimationError(f"err({t}) = {err}; no finite matched flow time")
        ends.append(n * (math.log(t) - math.log(err)) / d)
    return ends[0], ends[1]


def classical_report(problem: ApproximationProblem, t_max: int, transposed: bool = False,
                     tail: float = 0.5) -> ExponentReport:
    est = classical_estimate(problem, t_max, transposed=transposed, tail=tail)
    diag = {
        "records": len(est.records),
        "records_in_window": sum(1 for r in est.records if r.height >= est.window[0]),
        "oscillation": est.beta - est.alpha if math.isfinite(est.beta) and math.isfinite(est.alpha) else None,
        "truncated": est.truncated,
    }
    if est.witness is not None:
        diag["witness"] = {"x": list(est.witness[0]), "y": list(est.witness[1])}
    return ExponentReport(
        p=1,
        method="classical-def1",
        beta=est.beta,
        alpha=est.alpha,
        window=(float(est.window[0]), float(est.window[1])),
        transposed=transposed,
        diagnostics=diag,
    )


# -- grade-p route ----------------------------------------------------------------


@dataclass(frozen=True)
class GradeConstraintSystem:
    """Per-k maxima M_k = max_sigma |L_sigma ^ Z| of an integer p-vector Z at threshold t.

    ``log_maxima[k]`` is ln M_k, -inf when M_k = 0, and None when k + p > d
    (the wedge vanishes identically and imposes nothing).
    """

    p: int
    t: float
    k0: int
    log_maxima: tuple[float | None, ...]

    @property
    def maxima(self) -> tuple[float | None, ...]:
        return tuple(None if v is None else math.exp(v) for v in self.log_maxima)


class SolutionSpaceWedges:
    """Scaled integer Pluecker vectors Q^k L_sigma, cached per problem."""

    def __init__(self, problem: ApproximationProblem):
        self.problem = problem
        self.d = problem.d
        self.q = problem.denominator
        self.log_q = math.log(self.q)
        cols = []
        m = problem.m
        for j in range(m):
            top = [self.q if i == j else 0 for i in range(m)]
            cols.append(MultiVector.vector(top + [row[j] for row in problem.numerators]))
        self.by_grade: dict[int, list[MultiVector]] = {}
        for k in range(m + 1):
            self.by_grade[k] = [wedge_all([cols[i] for i in sigma], self.d) for sigma in subsets(m, k)]

    def log_maxima(self, z: MultiVector) -> tuple[float | None, ...]:
        p, d = z.grade, self.d
        out = []
        for k in range(self.problem.m + 1):
            if k + p > d:
                out.append(None)
                continue
            table = _wedge_table(d, k, p)
            best = 0
            zc = z.coeffs
            for L in self.by_grade[k]:
                acc = [0] * comb(d, k + p)
                lc = L.coeffs
                for i, j, r, sign in table:
                    a, b = lc[i], zc[j]
                    if a and b:
                        acc[r] += a * b if sign > 0 else -a * b
                best = max(best, max(abs(v) for v in acc))
            out.append(-INF if best == 0 else math.log(best) - k * self.log_q)
        return tuple(out)


def grade_system(problem: ApproximationProblem, z: MultiVector, t: float,
                 wedges: SolutionSpaceWedges | None = None) -> GradeConstraintSystem:
    wedges = wedges or SolutionSpaceWedges(problem)
    k0 = max(0, problem.m - z.grade)
    return GradeConstraintSystem(z.grade, t, k0, wedges.log_maxima(z))


def gamma_feasible_interval(system: GradeConstraintSystem) -> tuple[float, float] | None:
    """Range of gamma for which Z solves the system at threshold t, or None.

    Constraint k reads ln M_k <= (1 - (k - k0)(1 + gamma)) ln t: for k > k0
    it bounds gamma from above, for k < k0 from below, and for k = k0 it
    requires M_k <= t.
    """
    t = system.t
    if t <= 1:
        raise EstimationError("threshold t must exceed 1")
    lt = math.log(t)
    lo, hi = -INF, INF
    for k, lm in enumerate(system.log_maxima):
        if lm is None or lm == -INF:
            continue
        j = k - system.k0
        if j > 0:
            hi = min(hi, (1 - lm / lt) / j - 1)
        elif j < 0:
            lo = max(lo, (lm / lt - 1) / (-j) - 1)
        elif lm > lt * (1 + 1e-15):
            return None
    if lo > hi:
        return None
    return lo, hi


def _gamma_curves(log_maxima: Sequence[float | None], k0: int, log_t: np.ndarray) -> np.ndarray:
    """Vectorised gamma_hi over thresholds, -inf where infeasible."""
    lo = np.full(log_t.shape, -np.inf)
    hi = np.full(log_t.shape, np.inf)
    ok = np.ones(log_t.shape, dtype=bool)
    for k, lm in enumerate(log_maxima):
        if lm is None or lm == -INF:
            continue
        j = k - k0
        if j > 0:
            hi = np.minimum(hi, (1 - lm / log_t) / j - 1)
        elif j < 0:
            lo = np.maximum(lo, (lm / log_t - 1) / (-j) - 1)
        else:
            ok &= lm <= log_t * (1 + 1e-15)
    ok &= lo <= hi
    return np.where(ok, hi, -np.inf)


def is_decomposable(z: MultiVector) -> bool | None:
    """Whether Z is a wedge of vectors (decided for grades 0, 1, 2, d-2, d-1, d)."""
    p, d = z.grade, z.d
    if p <= 1 or p >= d - 1:
        return True
    if p == 2:
        return wedge(z, z).is_zero()
    if p == d - 2:
        return wedge(_complement(z), _complement(z)).is_zero()
    return None


def _complement(z: MultiVector) -> MultiVector:
    """Hodge-type dual: coefficient of e_I moved to the complementary index set (with sign)."""
    d, p = z.d, z.grade
    out = [0] * comb(d, d - p)
    rank = {s: i for i, s in enumerate(subsets(d, d - p))}
    for idx, c in zip(subsets(d, p), z.coeffs):
        rest = tuple(i for i in range(d) if i not in idx)
        inversions = sum(1 for a in idx for b in rest if a > b)
        out[rank[rest]] = -c if inversions % 2 else c
    return MultiVector(d, d - p, tuple(out))


def _canonical(z: MultiVector) -> MultiVector:
    for c in z.coeffs:
        if c:
            return z if c > 0 else -z
    return z


def candidate_pool(
    problem: ApproximationProblem,
    p: int,
    trace: Sequence[FlowSample] | None,
    height: int = 1,
    cap: int = 2000,
) -> tuple[list[MultiVector], list[str], bool]:
    """Flow-witness wedges followed by bounded enumeration, deduplicated up to sign."""
    seen: dict[tuple, int] = {}
    pool, kinds = [], []
    d = problem.d
    if trace:
        for smp in trace:
            z = wedge_all([MultiVector.vector(w) for w in smp.witnesses[:p]], d)
            z = _canonical(z)
            if not z.is_zero() and z.coeffs not in seen:
                seen[z.coeffs] = len(pool)
                pool.append(z)
                kinds.append("flow")
    truncated = False
    if height > 0:
        stream = enumerate_integer_multivectors(d, p, height, cap)
        for z in stream:
            if z.coeffs not in seen:
                seen[z.coeffs] = len(pool)
                pool.append(z)
                kinds.append("enumeration")
        truncated = stream.truncated
    return pool, kinds, truncated


def direct_grade_p_estimate(
    problem: ApproximationProblem,
    p: int,
    t_max: float,
    trace: Sequence[FlowSample] | None = None,
    height: int = 1,
    cap: int = 2000,
    tail: float = 0.5,
    grid_points: int = 400,
    transposed: bool = False,
    trace_step: float = 0.05,
) -> ExponentReport:
    """Grade-p exponents from the constraint system over a candidate pool.

    g(t) is the largest feasible gamma over the pool; beta_p is its maximum
    and alpha_p its minimum over t in [t_max^tail, t_max]. Thresholds where
    no candidate is feasible leave alpha_p undetermined (NaN).

    Flow witnesses at time s span wedges of height about e^{kappa_p s}, so
    the trace should reach ln(t_max) / kappa_p; without one it is computed.
    A trace of the transposed problem is expected when ``transposed`` is set.
    """
    if transposed:
        problem = problem.transposed()
    d = problem.d
    if not 1 <= p <= d - 1:
        raise EstimationError(f"grade {p} outside [1, {d - 1}]")
    s_needed = math.log(t_max) / kappa(p, problem.n, problem.m)
    if trace is None:
        trace = psi_profile(problem, s_grid(s_needed, trace_step))
    elif trace[-1].s < s_needed - 1e-6:
        logger.warning("trace ends at s=%g; grade-%d wedges up to t=%g need s=%g", trace[-1].s, p, t_max, s_needed)
    pool, kinds, truncated = candidate_pool(problem, p, trace, height, cap)
    if not pool:
        raise EstimationError("empty candidate pool")
    wedges = SolutionSpaceWedges(problem)
    k0 = max(0, problem.m - p)
    t_lo = t_max ** tail
    log_t = np.linspace(math.log(t_lo), math.log(t_max), grid_points)
    maxima = [wedges.log_maxima(z) for z in pool]
    # admission thresholds M_{k0} inside the window sharpen the maximum
    extra = [lm[k0] for lm in maxima if lm[k0] is not None and math.log(t_lo) < lm[k0] < math.log(t_max)]
    log_t = np.unique(np.concatenate([log_t, np.array(extra, dtype=float)]))
    g = np.full(log_t.shape, -np.inf)
    arg = np.full(log_t.shape, -1)
    for idx, lm in enumerate(maxima):
        curve = _gamma_curves(lm, k0, log_t)
        better = curve > g
        g = np.where(better, curve, g)
        arg = np.where(better, idx, arg)
    covered = np.isfinite(g) | (g == np.inf)
    covered &= g > -np.inf
    beta = float(g.max())
    alpha = float(g.min()) if covered.all() else math.nan
    top = int(arg[int(np.argmax(g))])
    winner = pool[top]
    diag = {
        "pool": len(pool),
        "pool_flow": kinds.count("flow"),
        "pool_enumeration": kinds.count("enumeration"),
        "enumeration_truncated": truncated,
        "coverage": float(covered.mean()),
        "winner_kind": kinds[top] if top >= 0 else None,
        "winner_decomposable": is_decomposable(winner) if top >= 0 else None,
        "winner": winner.to_json() if top >= 0 else None,
    }
    return ExponentReport(
        p=p,
        method="direct-def2",
        beta=beta,
        alpha=alpha,
        window=(float(t_lo), float(t_max)),
        transposed=transposed,
        diagnostics=diag,
    )


# -- duality ------------------------------------------------------------------------


def duality_horizons(n: int, m: int, s_short: float = 100.0) -> tuple[float, float]:
    """Flow horizons (Theta, transpose) in the ratio 1 : m/n, the shorter one at s_short.

    Theta at time s and its transpose at time (m/n) s see dual lattices, so
    Psi_p(s) and (m/n) Psi*_{d-p} differ by O(1/s) only. The estimates of
    the two sides of the duality therefore agree to within C/s_short.
    """
    s_theta = s_short * max(1.0, n / m)
    return s_theta, s_theta * m / n


def required_bits(n: int, m: int, s_theta: float, guard: int = 64) -> int:
    """Entry precision keeping the flow of Theta (and its transpose) exact up to s_theta.

    Residuals are scaled by e^{ms/n} against coordinates of size e^s, which
    costs s d / n binary digits.
    """
    return int(math.ceil(s_theta * (n + m) / (n * math.log(2)))) + guard


def _ext_diff(a: float, b: float) -> float:
    if math.isinf(a) and math.isinf(b) and (a > 0) == (b > 0):
        return 0.0
    return a - b


def duality_reports(
    direct: Sequence[ExponentReport], transposed: Sequence[ExponentReport], n: int, m: int
) -> list[dict]:
    """Residuals of beta*_p = beta_{d-p}, alpha*_p = alpha_{d-p} and the Psi duality.

    ``direct`` holds flow-route reports of Theta indexed by p, ``transposed``
    those of the transpose.
    """
    d = n + m
    by_p = {r.p: r for r in direct}
    out = []
    for rs in sorted(transposed, key=lambda r: r.p):
        p = rs.p
        r = by_p.get(d - p)
        if r is None:
            continue
        entry = {
            "p": p,
            "beta_star": rs.beta,
            "beta_dual": r.beta,
            "alpha_star": rs.alpha,
            "alpha_dual": r.alpha,
            "beta_residual": abs(_ext_diff(rs.beta, r.beta)),
            "alpha_residual": abs(_ext_diff(rs.alpha, r.alpha)),
        }
        if rs.psi_lower is not None and r.psi_lower is not None:
            entry["psi_lower_residual"] = abs(rs.psi_lower - n / m * r.psi_lower)
            entry["psi_upper_residual"] = abs(rs.psi_upper - n / m * r.psi_upper)
        out.append(entry)
    return out


def duality_to_json(entries: Iterable[dict]) -> list[dict]:
    return [_json_clean(e) for e in entries]
