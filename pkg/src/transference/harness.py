"""Numerical verification of the transference inequalities.

Exponent-level inequalities are evaluated on flow-route estimates for Theta
and its transpose with a tolerance ``tau`` absorbing finite-window error.
Pointwise statements about a single flow trace are exact and use only the
arithmetic slack ``eps``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .exponents import (
    INF,
    ExponentReport,
    _json_clean,
    classical_estimate,
    classical_report,
    direct_grade_p_estimate,
    duality_reports,
    ext_from_json,
    ext_json,
    kappa,
    schmidt_route_report,
)
from .flow import (
    FlowError,
    FlowSample,
    companion_parameters,
    exact_grid,
    local_minima_of_psi1,
    psi_profile,
    s_grid,
    successive_minima,
)
from .problem import ApproximationProblem

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 0.05
POINTWISE_EPS = 1e-9

HOLDS = "holds"
WITHIN = "violated-within-tolerance"
VIOLATED = "violated"
VACUOUS = "vacuous"
HYPOTHESIS_FAILED = "hypothesis-failed"

# registry order of exponent-level families, then pointwise families
EXPONENT_FAMILIES = (
    "khintchine",
    "dyson",
    "bugeaud_laurent",
    "loranoyadenie_2",
    "loranoyadenie_3",
    "jarnik_eq",
    "my_cases",
    "thm1",
    "laurent_split",
    "thm2",
    "thm3",
    "thm4",
    "thm5",
    "dyson_from_thm1",
    "my_cases_from_thm3",
)
POINTWISE_FAMILIES = (
    "lambda_order",
    "minkowski_product",
    "minkowski_decay",
    "sandwich",
    "psi_sandwich",
    "psi_chain",
    "divergence",
    "companion_bounds",
    "lemma1",
)
REGISTRY = EXPONENT_FAMILIES + POINTWISE_FAMILIES


class HarnessError(ValueError):
    """Missing inputs or an unknown inequality name."""


# -- integer solutions ------------------------------------------------------------


@dataclass
class SolutionSpace:
    """Integer solutions (x, y) of Theta x = y."""

    rank: int
    basis: list[tuple[int, ...]]
    certified: bool
    caveat: str | None = None

    @property
    def hypothesis_ok(self) -> bool:
        """The solution lattice is not one-dimensional."""
        return self.rank != 1

    def to_json(self) -> dict:
        return {
            "rank": self.rank,
            "basis": [list(v) for v in self.basis],
            "certified": self.certified,
            "caveat": self.caveat,
            "hypothesis_ok": self.hypothesis_ok,
        }

    @classmethod
    def from_json(cls, data: dict) -> "SolutionSpace":
        return cls(data["rank"], [tuple(v) for v in data["basis"]], data["certified"], data.get("caveat"))


def integer_kernel(rows: Sequence[Sequence[int]]) -> list[list[int]]:
    """A basis of {v in Z^c : A v = 0} by unimodular column operations."""
    r = len(rows)
    c = len(rows[0])
    a = [list(map(int, row)) for row in rows]
    u = [[int(i == j) for j in range(c)] for i in range(c)]

    def col_axpy(target, source, q):
        for row in a:
            row[target] -= q * row[source]
        for row in u:
            row[target] -= q * row[source]

    def col_swap(i, j):
        for row in a:
            row[i], row[j] = row[j], row[i]
        for row in u:
            row[i], row[j] = row[j], row[i]

    piv = 0
    for i in range(r):
        if piv >= c:
            break
        for j in range(piv + 1, c):
            while a[i][j] != 0:
                q = a[i][piv] // a[i][j]
                col_axpy(piv, j, q)
                col_swap(piv, j)
        if a[i][piv] != 0:
            piv += 1
    return [[u[k][j] for k in range(c)] for j in range(piv, c)]


def _reduce_pairwise(vectors: list[list[int]]) -> list[list[int]]:
    """Greedy pairwise size reduction in the sup norm, for readable bases."""
    vecs = [list(v) for v in vectors]
    changed = True
    while changed:
        changed = False
        vecs.sort(key=lambda v: (max(abs(x) for x in v), v))
        for i in range(len(vecs)):
            for j in range(len(vecs)):
                if i == j:
                    continue
                for sign in (1, -1):
                    cand = [a - sign * b for a, b in zip(vecs[i], vecs[j])]
                    if max(abs(x) for x in cand) < max(abs(x) for x in vecs[i]):
                        vecs[i] = cand
                        changed = True
    out = []
    for v in vecs:
        lead = next(x for x in v if x)
        out.append(v if lead > 0 else [-x for x in v])
    return sorted(out, key=lambda v: (max(abs(x) for x in v), v))


def check_hypothesis_solution_space(problem: ApproximationProblem, search_points: int = 2_000_000) -> SolutionSpace:
    """Rank of the integer solution lattice of Theta x = y.

    Exact (rational) matrices give the exact rank and a basis. For matrices
    standing for real numbers the rank cannot be certified; an exhaustive
    search for an exact solution with small |x| is run and rank 0 is
    reported with a caveat when none exists.
    """
    n, m = problem.n, problem.m
    if problem.exact:
        q = problem.denominator
        rows = [list(problem.numerators[i]) + [-q if j == i else 0 for j in range(n)] for i in range(n)]
        basis = _reduce_pairwise(integer_kernel(rows))
        return SolutionSpace(len(basis), [tuple(v) for v in basis], True)
    bound = max(4, int(search_points ** (1.0 / m)) // 2)
    est = classical_estimate(problem, bound, tail=0.5)
    if est.witness is not None:
        x, y = est.witness
        return SolutionSpace(
            1, [tuple(x) + tuple(y)], False,
            f"exact solution found with |x| <= {bound}; rank at least 1 (not certified for a real matrix)",
        )
    return SolutionSpace(0, [], False, f"no integer solution with 0 < |x| <= {bound}; rank 0 assumed")


# -- extended reals ---------------------------------------------------------------


def ext_eval(f: Callable[..., float], *args: float) -> float:
    """Evaluate a rational expression over the extended reals.

    Infinite arguments are handled as limits by substituting growing
    finite values; a limit that does not settle, a division by zero or an
    undetermined (NaN) argument yields NaN (flagged as indeterminate).
    """
    if any(isinstance(a, float) and math.isnan(a) for a in args):
        return math.nan
    if all(math.isfinite(a) for a in args):
        try:
            return float(f(*args))
        except ZeroDivisionError:
            return math.nan
    values = []
    for big in (1e6, 1e9, 1e12):
        sub = [a if math.isfinite(a) else math.copysign(big, a) for a in args]
        try:
            values.append(float(f(*sub)))
        except ZeroDivisionError:
            return math.nan
    v1, v2, v3 = values
    if abs(v3) > 1e8 and abs(v3) > abs(v2) > abs(v1) and math.copysign(1, v3) == math.copysign(1, v2):
        return math.copysign(INF, v3)
    if abs(v3 - v2) <= 1e-6 * (1 + abs(v3)):
        return v3
    return math.nan


# -- reports ----------------------------------------------------------------------


@dataclass
class InequalityReport:
    family: str
    name: str
    relation: str
    lhs: float
    rhs: float
    margin: float
    hypothesis_ok: bool
    verdict: str
    tolerance: float
    note: str = ""

    def to_json(self) -> dict:
        return {
            "family": self.family,
            "name": self.name,
            "relation": self.relation,
            "lhs": ext_json(self.lhs),
            "rhs": ext_json(self.rhs),
            "margin": ext_json(self.margin),
            "hypothesis_ok": self.hypothesis_ok,
            "verdict": self.verdict,
            "tolerance": self.tolerance,
            "note": self.note,
        }

    @classmethod
    def from_json(cls, data: dict) -> "InequalityReport":
        return cls(
            family=data["family"],
            name=data["name"],
            relation=data["relation"],
            lhs=ext_from_json(data["lhs"]),
            rhs=ext_from_json(data["rhs"]),
            margin=ext_from_json(data["margin"]),
            hypothesis_ok=data["hypothesis_ok"],
            verdict=data["verdict"],
            tolerance=data["tolerance"],
            note=data.get("note", ""),
        )


def _margin(lhs: float, rhs: float, relation: str) -> float:
    """Signed margin, nonnegative when the relation holds."""
    if relation == ">=":
        a, b = lhs, rhs
    elif relation == "<=":
        a, b = rhs, lhs
    else:
        if math.isinf(lhs) and math.isinf(rhs) and lhs == rhs:
            return 0.0
        return -abs(lhs - rhs)
    if math.isnan(a) or math.isnan(b):
        return math.nan
    if math.isinf(a) and math.isinf(b):
        return 0.0 if a == b else (INF if a > b else -INF)
    return a - b


def make_report(
    family: str,
    name: str,
    lhs: float,
    relation: str,
    rhs: float,
    tolerance: float,
    hypothesis_ok: bool = True,
    guard: bool = True,
    trivial: float | None = None,
    note: str = "",
) -> InequalityReport:
    """Build a report and assign its verdict.

    ``guard`` is the case condition; ``trivial`` is the bound the left side
    satisfies anyway (a lower bound for ">=", an upper bound for "<="), so a
    right side strictly beyond it carries no information.
    """
    margin = _margin(lhs, rhs, relation)
    if not guard:
        verdict = VACUOUS
        note = note or "case condition not met"
    elif not hypothesis_ok:
        verdict = HYPOTHESIS_FAILED
    elif math.isnan(margin):
        verdict = VACUOUS
        note = note or "indeterminate form"
    elif trivial is not None and (
        (relation == ">=" and rhs < trivial - POINTWISE_EPS) or (relation == "<=" and rhs > trivial + POINTWISE_EPS)
    ) and margin >= 0:
        verdict = VACUOUS
        note = note or f"bound weaker than the trivial bound {trivial:g}"
    elif margin >= -POINTWISE_EPS * (1 + (abs(rhs) if math.isfinite(rhs) else 0)):
        verdict = HOLDS
    elif margin >= -tolerance:
        verdict = WITHIN
    else:
        verdict = VIOLATED
    return InequalityReport(family, name, relation, lhs, rhs, margin, hypothesis_ok, verdict, tolerance, note)


# -- exponent bundle ------------------------------------------------------------------


@dataclass
class ExponentBundle:
    """Flow-route exponents of Theta (grades 1..d-1) and of its transpose."""

    n: int
    m: int
    reports: dict[int, ExponentReport]
    star_reports: dict[int, ExponentReport]
    solutions: SolutionSpace | None = None
    star_solutions: SolutionSpace | None = None

    @property
    def d(self) -> int:
        return self.n + self.m

    def _get(self, table, p, attr, label):
        if p not in table:
            raise HarnessError(f"missing {label} report for p={p}")
        return getattr(table[p], attr)

    def beta(self, p):
        return self._get(self.reports, p, "beta", "exponent")

    def alpha(self, p):
        return self._get(self.reports, p, "alpha", "exponent")

    def psi_lower(self, p):
        return self._get(self.reports, p, "psi_lower", "exponent")

    def psi_upper(self, p):
        return self._get(self.reports, p, "psi_upper", "exponent")

    def beta_star(self, p):
        return self._get(self.star_reports, p, "beta", "transposed exponent")

    def alpha_star(self, p):
        return self._get(self.star_reports, p, "alpha", "transposed exponent")


def _trivial_exponent(p: int, n: int, m: int) -> float:
    return (n + m) / (n * kappa(p, n, m)) - 1


def _inv(x: float) -> float:
    return 1 / x


def evaluate_inequality(name: str, bundle: ExponentBundle, tolerance: float = DEFAULT_TOLERANCE) -> list[InequalityReport]:
    """All instances of one exponent-level family."""
    if name not in EXPONENT_FAMILIES:
        raise HarnessError(f"unknown inequality family {name!r}")
    n, m, d = bundle.n, bundle.m, bundle.d
    tau = tolerance
    rank_ok = bundle.solutions.hypothesis_ok if bundle.solutions else True
    no_solution = bundle.solutions.rank == 0 if bundle.solutions else True
    out: list[InequalityReport] = []
    R = make_report

    if name == "khintchine":
        b1, bs = bundle.beta(1), bundle.beta_star(1)
        out.append(R(name, "khintchine_1", bs, ">=", ext_eval(lambda b: n * b + n - 1, b1), tau,
                     guard=m == 1, note="" if m == 1 else "stated for m = 1"))
        out.append(R(name, "khintchine_2", b1, ">=", ext_eval(lambda c: c / ((n - 1) * c + n), bs), tau,
                     guard=m == 1, note="" if m == 1 else "stated for m = 1"))
    elif name == "dyson":
        b1, bs = bundle.beta(1), bundle.beta_star(1)
        rhs = ext_eval(lambda b: (n * b + n - 1) / ((m - 1) * b + m), b1)
        out.append(R(name, "dyson", bs, ">=", rhs, tau, trivial=_trivial_exponent(1, m, n)))
    elif name == "bugeaud_laurent":
        b1, a1 = bundle.beta(1), bundle.alpha(1)
        bs, as_ = bundle.beta_star(1), bundle.alpha_star(1)
        guard = m == 1
        note = "" if guard else "stated for m = 1"
        lo = ext_eval(lambda a, b: (a - 1) * b / (((n - 2) * a + 1) * b + (n - 1) * a), as_, bs)
        hi = ext_eval(lambda a, b: ((1 - a) * b - n + 2 - a) / (n - 1), a1, bs) if n > 1 else math.nan
        out.append(R(name, "bugeaud_laurent_lower", b1, ">=", lo, tau, no_solution, guard, note=note))
        out.append(R(name, "bugeaud_laurent_upper", b1, "<=", hi, tau, no_solution, guard, note=note))
    elif name == "loranoyadenie_2":
        b1, a1, bs = bundle.beta(1), bundle.alpha(1), bundle.beta_star(1)
        rhs = ext_eval(lambda b, a: ((n - 1) * (1 + b) - (1 - a)) / ((m - 1) * (1 + b) + (1 - a)), b1, a1)
        out.append(R(name, "loranoyadenie_2", bs, ">=", rhs, tau, rank_ok))
    elif name == "loranoyadenie_3":
        b1, a1, bs = bundle.beta(1), bundle.alpha(1), bundle.beta_star(1)
        rhs = ext_eval(
            lambda b, a: ((n - 1) * (1 + 1 / b) - (1 / a - 1)) / ((m - 1) * (1 + 1 / b) + (1 / a - 1)), b1, a1
        )
        out.append(R(name, "loranoyadenie_3", bs, ">=", rhs, tau, rank_ok))
    elif name == "jarnik_eq":
        guard = (n, m) == (1, 2)
        if guard:
            a1, as_ = bundle.alpha(1), bundle.alpha_star(1)
            lhs = ext_eval(lambda a, b: 1 / a + b, a1, as_)
        else:
            lhs = math.nan
        out.append(R(name, "jarnik_eq", lhs, "==", 1.0, tau, no_solution, guard,
                     note="" if guard else "stated for n = 1, m = 2"))
    elif name == "my_cases":
        a1, as_ = bundle.alpha(1), bundle.alpha_star(1)
        if a1 <= 1 or m == 1:
            rhs = ext_eval(lambda a: (n - 1) / (m - a), a1)
            label = "my_cases_alpha_le_1"
        else:
            rhs = ext_eval(lambda a: (n - 1 / a) / (m - 1), a1)
            label = "my_cases_alpha_ge_1"
        out.append(R(name, label, as_, ">=", rhs, tau, trivial=_trivial_exponent(1, m, n)))
    elif name == "thm1":
        for p in range(1, d - 1):
            for kind in ("beta", "alpha"):
                get = bundle.beta if kind == "beta" else bundle.alpha
                e_p, e_q = get(p), get(p + 1)
                if p >= m:
                    lhs = ext_eval(lambda x: (d - p - 1) * (1 + x), e_q)
                    rhs = ext_eval(lambda x: (d - p) * (1 + x), e_p)
                else:
                    lhs = ext_eval(lambda x: (d - p - 1) / (1 + x), e_p)
                    rhs = ext_eval(lambda x: (d - p) / (1 + x) - n, e_q)
                out.append(R(name, f"thm1_{kind}_p{p}", lhs, ">=", rhs, tau))
    elif name == "laurent_split":
        guard = m == 1
        for p in range(1, n):
            bp, bq = bundle.beta(p), bundle.beta(p + 1)
            rhs1 = ext_eval(lambda x: ((n - p + 1) * x + 1) / (n - p), bp)
            rhs2 = ext_eval(lambda y: p * y / (y + p + 1), bq)
            out.append(R(name, f"laurent_split_up_p{p}", bq, ">=", rhs1, tau, guard=guard))
            out.append(R(name, f"laurent_split_down_p{p}", bp, ">=", rhs2, tau, guard=guard))
        if not out:
            out.append(R(name, "laurent_split", math.nan, ">=", math.nan, tau, guard=False,
                         note="stated for m = 1"))
    elif name == "thm2":
        b1, a1, b2 = bundle.beta(1), bundle.alpha(1), bundle.beta(2)
        trivial = _trivial_exponent(2, n, m)
        if m == 1:
            rhs = ext_eval(lambda b, a: (b + a) / (1 - a), b1, a1)
            out.append(R(name, "thm2_m1", b2, ">=", rhs, tau, rank_ok, trivial=trivial))
        else:
            rhs1 = ext_eval(lambda b, a: (a - 1) / (2 + b - a), b1, a1)
            out.append(R(name, "thm2_case1", b2, ">=", rhs1, tau, rank_ok, guard=math.isfinite(a1),
                         trivial=trivial))
            rhs2 = ext_eval(lambda b, a: (1 - 1 / a) / (1 / b + 1 / a), b1, a1)
            out.append(R(name, "thm2_case2", b2, ">=", rhs2, tau, rank_ok, trivial=trivial))
    elif name == "thm3":
        a1, a2 = bundle.alpha(1), bundle.alpha(2)
        trivial = _trivial_exponent(2, n, m)
        if m == 1:
            rhs = ext_eval(lambda a: 1 / (1 - a) - (n - 2) / (n - 1), a1)
            out.append(R(name, "thm3_m1", a2, ">=", rhs, tau, trivial=trivial))
        elif a1 <= 1:
            rhs = ext_eval(lambda a: (n - 1) / (-n - (d - 2) / (1 - a)), a1) if a1 < 1 else 0.0
            out.append(R(name, "thm3_case1", a2, ">=", rhs, tau, trivial=trivial))
        else:
            rhs = ext_eval(lambda a: (m - 1) / (n + (d - 2) / (a - 1)), a1)
            out.append(R(name, "thm3_case2", a2, ">=", rhs, tau, trivial=trivial))
    elif name == "thm4":
        lo1, hi1, lo2 = bundle.psi_lower(1), bundle.psi_upper(1), bundle.psi_lower(2)
        rhs1 = ext_eval(lambda a, b: 2 * a + d * (b - a) / (n + n * b), lo1, hi1) if hi1 != -1 else math.nan
        out.append(R(name, "thm4_case1", lo2, "<=", rhs1, tau, rank_ok, guard=hi1 != -1, trivial=0.0))
        rhs2 = ext_eval(lambda a, b: 2 * a + d * (b - a) / (m - n * b), lo1, hi1)
        out.append(R(name, "thm4_case2", lo2, "<=", rhs2, tau, rank_ok, trivial=0.0))
    elif name == "thm5":
        hi1, hi2 = bundle.psi_upper(1), bundle.psi_upper(2)
        if hi1 >= (m - n) / (2 * n):
            rhs = ext_eval(lambda a: (d - 2) * a / ((n - 1) + n * a), hi1)
            label = "thm5_case1"
        else:
            rhs = ext_eval(lambda a: (d - 2) * a / ((m - 1) - n * a), hi1)
            label = "thm5_case2"
        out.append(R(name, label, hi2, "<=", rhs, tau, trivial=0.0))
    elif name == "dyson_from_thm1":
        # chaining the grade-to-grade bounds from beta_1 up to beta_{d-1}
        b1 = bundle.beta(1)
        if math.isfinite(b1):
            bound = b1
            for p in range(1, d - 1):
                if p >= m:
                    bound = (d - p) * (1 + bound) / (d - p - 1) - 1
                else:
                    bound = (d - p) / ((d - p - 1) / (1 + bound) + n) - 1
            dyson = (n * b1 + n - 1) / ((m - 1) * b1 + m)
            out.append(R(name, "dyson_from_thm1", bound, ">=", dyson, tau,
                         note="chained lower bound for beta_{d-1} = beta*_1 against the direct bound"))
        else:
            out.append(R(name, "dyson_from_thm1", math.nan, ">=", math.nan, tau, guard=False,
                         note="beta_1 infinite"))
    elif name == "my_cases_from_thm3":
        a1 = bundle.alpha(1)
        if math.isfinite(a1) and a1 != 1:
            if m == 1:
                low2 = 1 / (1 - a1) - (n - 2) / (n - 1)
                chained = (n - 1) * (1 + low2) - 1
                direct = (n - 1) / (m - a1)
            else:
                if a1 < 1:
                    low2 = (n - 1) / (-n - (d - 2) / (1 - a1))
                    direct = (n - 1) / (m - a1)
                else:
                    low2 = (m - 1) / (n + (d - 2) / (a1 - 1))
                    direct = (n - 1 / a1) / (m - 1)
                chained = (d - 2) / (1 / (1 + low2) + m - 2) - 1
            out.append(R(name, "my_cases_from_thm3", chained, ">=", direct, tau,
                         note="thm3 bound on alpha_2 carried to alpha_{d-1} = alpha*_1"))
        else:
            out.append(R(name, "my_cases_from_thm3", math.nan, ">=", math.nan, tau, guard=False,
                         note="alpha_1 infinite or equal to 1"))
    return out


# -- pointwise suite --------------------------------------------------------------------


def _worst(family: str, items: list[InequalityReport], empty_note: str = "no instances") -> InequalityReport:
    """Summarise many instances by the one with the smallest margin."""
    if not items:
        return make_report(family, family, math.nan, ">=", math.nan, POINTWISE_EPS, guard=False, note=empty_note)
    ranked = [r for r in items if r.verdict not in (VACUOUS, HYPOTHESIS_FAILED)]
    pool = ranked or items
    worst = min(pool, key=lambda r: (r.margin if not math.isnan(r.margin) else INF))
    counts = {}
    for r in items:
        counts[r.verdict] = counts.get(r.verdict, 0) + 1
    summary = ", ".join(f"{k}: {counts[k]}" for k in sorted(counts))
    return InequalityReport(
        family, worst.name, worst.relation, worst.lhs, worst.rhs, worst.margin, worst.hypothesis_ok,
        worst.verdict, worst.tolerance, f"{len(items)} instances ({summary}); worst shown"
        + (f"; {worst.note}" if worst.note else ""),
    )


def pointwise_suite(
    trace: Sequence[FlowSample],
    problem: ApproximationProblem,
    solutions: SolutionSpace | None = None,
    window: tuple[float, float] | None = None,
    estimates: dict[int, tuple[float, float]] | None = None,
    companion_limit: int = 8,
    eps: float = POINTWISE_EPS,
) -> list[InequalityReport]:
    """Exact statements checked sample by sample (and at companion pairs)."""
    d = problem.d
    out = []
    F = math.factorial(d)
    order, prod, decay, sandwich, psand = [], [], [], [], []
    for smp in trace:
        s = smp.s
        tag = f"s={s:.6g}"
        lam = smp.lambdas
        for p in range(d - 1):
            order.append(make_report("lambda_order", f"lambda_order[{tag},p={p + 1}]",
                                     lam[p + 1], ">=", lam[p], eps))
        product = math.exp(sum(smp.log_lambdas))
        prod.append(make_report("minkowski_product", f"minkowski_upper[{tag}]", product, "<=", 1.0, eps))
        prod.append(make_report("minkowski_product", f"minkowski_lower[{tag}]", product, ">=", 1 / F, eps))
        Psi, psi = smp.Psis, smp.psis
        decay.append(make_report("minkowski_decay", f"minkowski_decay[{tag}]", -Psi[-1], "<=",
                                 math.log(F) / s, eps))
        decay.append(make_report("minkowski_decay", f"minkowski_sign[{tag}]", Psi[-1], "<=", 0.0, eps))
        for p in range(1, d - 1):
            a, b = Psi[p - 1], Psi[p]
            sandwich.append(make_report("sandwich", f"sandwich_lower[{tag},p={p}]", b, ">=",
                                        (p + 1) / p * a, eps))
            sandwich.append(make_report("sandwich", f"sandwich_upper[{tag},p={p}]", b, "<=",
                                        (d - p - 1) / (d - p) * a, eps))
        psand.append(make_report("psi_sandwich", f"psi_sandwich_lower[{tag}]", psi[0], ">=",
                                 (d - 1) / (d - 2) * Psi[1], eps))
        psand.append(make_report("psi_sandwich", f"psi_sandwich_upper[{tag}]", psi[0], "<=",
                                 Psi[1] / 2, eps))
    out.append(_worst("lambda_order", order))
    out.append(_worst("minkowski_product", prod))
    out.append(_worst("minkowski_decay", decay))
    out.append(_worst("sandwich", sandwich))
    out.append(_worst("psi_sandwich", psand))

    chain = []
    if estimates:
        for p in range(1, d - 1):
            if p in estimates and p + 1 in estimates:
                for k, label in ((0, "lower"), (1, "upper")):
                    a, b = estimates[p][k], estimates[p + 1][k]
                    chain.append(make_report("psi_chain", f"psi_chain_{label}_p{p}", b / (d - p - 1), "<=",
                                             a / (d - p), eps))
    out.append(_worst("psi_chain", chain, "no window estimates supplied"))

    # s(1 + psi_1(s)) = ln(e^s lambda_1) never decreases and diverges without integer solutions
    rank0 = solutions.rank == 0 if solutions else True
    growth = [smp.s + smp.log_lambdas[0] for smp in trace]
    div = []
    for a, b, smp in zip(growth, growth[1:], trace[1:]):
        div.append(make_report("divergence", f"divergence_monotone[s={smp.s:.6g}]", b, ">=",
                               a, eps))
    if len(growth) > 2:
        half = len(growth) // 2
        div.append(make_report("divergence", "divergence_tail_growth", growth[-1], ">=", growth[half], eps,
                               hypothesis_ok=rank0,
                               note="" if rank0 else "integer solutions exist; s(1 + psi_1) stays bounded"))
    out.append(_worst("divergence", div))

    bounds, lemma = [], []
    if companion_limit > 0:
        for rep in companion_checks(trace, problem, window, companion_limit, eps):
            (bounds if rep.family == "companion_bounds" else lemma).append(rep)
    out.append(_worst("companion_bounds", bounds, "no balanced local minima in the window"))
    out.append(_worst("lemma1", lemma, "no balanced local minima in the window"))
    return out


def companion_checks(
    trace: Sequence[FlowSample],
    problem: ApproximationProblem,
    window: tuple[float, float] | None = None,
    limit: int = 8,
    eps: float = POINTWISE_EPS,
) -> list[InequalityReport]:
    """Lemma-1 inequalities at balanced local minima of psi_1 and their companion times."""
    n, m, d = problem.n, problem.m, problem.d
    lo, hi = window or (trace[0].s, trace[-1].s)
    minima = [s for s in local_minima_of_psi1(trace, problem) if lo <= s <= hi]
    if len(minima) > limit:
        step = len(minima) / limit
        minima = [minima[int(i * step)] for i in range(limit)]
    out = []
    for s in minima:
        res = successive_minima(problem, s)
        psi1, psi2 = math.log(res.lambdas[0]) / s, math.log(res.lambdas[1]) / s
        tag = f"s={s:.6g}"
        for side in ("shrink", "grow"):
            try:
                pair = companion_parameters(problem, s, side, res)
            except FlowError as exc:
                out.append(make_report("companion_bounds", f"companion_{side}[{tag}]", math.nan, ">=", math.nan,
                                       eps, guard=False, note=f"companion search failed: {exc}"))
                continue
            sc = pair.s_companion
            psi1c = math.log(pair.lam_companion) / sc
            if side == "shrink":
                out.append(make_report("companion_bounds", f"shrink_lower[{tag}]", sc, ">=",
                                       s * (1 + psi1), eps))
                out.append(make_report("companion_bounds", f"shrink_upper[{tag}]", sc, "<=", s, eps))
                guard = abs(psi1c + 1) > 1e-12
                rhs = psi1 + d * (psi1c - psi1) / (n + n * psi1c) if guard else math.nan
                out.append(make_report("lemma1", f"lemma1_shrink[{tag}]", psi2, "<=", rhs, eps, guard=guard))
            else:
                out.append(make_report("companion_bounds", f"grow_lower[{tag}]", sc, ">=", s, eps))
                out.append(make_report("companion_bounds", f"grow_upper[{tag}]", sc, "<=",
                                       s * (1 - n / m * psi1), eps))
                rhs = psi1 + d * (psi1c - psi1) / (m - n * psi1c)
                out.append(make_report("lemma1", f"lemma1_grow[{tag}]", psi2, "<=", rhs, eps))
    return out


# -- orchestration ----------------------------------------------------------------------


@dataclass
class SuiteConfig:
    s_max: float = 25.0
    s_step: float = 0.05
    t_max: int | None = None
    height: int = 1
    enumeration_cap: int = 2000
    tolerance: float = DEFAULT_TOLERANCE
    companion_limit: int = 8
    only: tuple[str, ...] = ()
    exact_grid: tuple[int, int] | None = None
    corrupt_lambda_order: bool = False


def flow_horizons(n: int, m: int, s_max: float) -> tuple[float, float]:
    """Flow horizons for Theta and its transpose with matched windows.

    The transposed flow runs at s* = (m/n) s, so both horizons stay below
    s_max.
    """
    s_theta = s_max * min(1.0, n / m)
    return s_theta, s_theta * m / n


def default_t_max(m: int, points: int = 4_000_000) -> int:
    return int(min(10**6, max(16, (points ** (1.0 / m) - 1) // 2)))


@dataclass
class SuiteResult:
    label: str
    n: int
    m: int
    exponents: list[ExponentReport]
    duality: list[dict]
    solutions: SolutionSpace
    star_solutions: SolutionSpace
    inequalities: list[InequalityReport]
    errors: list[str] = field(default_factory=list)

    @property
    def violated(self) -> bool:
        return any(r.verdict == VIOLATED for r in self.inequalities)

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "n": self.n,
            "m": self.m,
            "solutions": self.solutions.to_json(),
            "star_solutions": self.star_solutions.to_json(),
            "exponents": [r.to_json() for r in self.exponents],
            "duality": _json_clean(self.duality),
            "inequalities": {r.name: r.to_json() for r in self.inequalities},
            "errors": list(self.errors),
        }

    @classmethod
    def from_json(cls, data: dict) -> "SuiteResult":
        return cls(
            label=data["label"],
            n=data["n"],
            m=data["m"],
            exponents=[ExponentReport.from_json(r) for r in data["exponents"]],
            duality=data["duality"],
            solutions=SolutionSpace.from_json(data["solutions"]),
            star_solutions=SolutionSpace.from_json(data["star_solutions"]),
            inequalities=[InequalityReport.from_json(r) for r in data["inequalities"].values()],
            errors=list(data.get("errors", [])),
        )


def _ordered(reports: list[InequalityReport]) -> list[InequalityReport]:
    rank = {name: i for i, name in enumerate(REGISTRY)}
    return sorted(reports, key=lambda r: rank[r.family])


def _corrupt(trace: list[FlowSample]) -> list[FlowSample]:
    """Swap lambda_1 and lambda_d of the first sample (negative control)."""
    first = trace[0]
    lam = list(first.lambdas)
    lam[0], lam[-1] = lam[-1], lam[0]
    return [FlowSample(first.s, tuple(lam), first.witnesses)] + list(trace[1:])


@dataclass
class ExponentRun:
    """Traces and every exponent report for Theta and its transpose."""

    trace: list[FlowSample]
    trace_star: list[FlowSample]
    window: tuple[float, float]
    window_star: tuple[float, float]
    reports: dict[int, ExponentReport]
    star_reports: dict[int, ExponentReport]
    extra: list[ExponentReport]
    duality: list[dict]
    errors: list[str]

    @property
    def all_reports(self) -> list[ExponentReport]:
        return list(self.reports.values()) + list(self.star_reports.values()) + self.extra


def flow_grids(n: int, m: int, config: SuiteConfig) -> tuple[list[float], list[float]]:
    """Matched sampling grids for Theta and its transpose."""
    if config.exact_grid:
        u_min, u_max = config.exact_grid
        # s = n ln u and s* = m ln u keep the ratio m/n
        return exact_grid(n, u_min, u_max), exact_grid(m, u_min, u_max)
    s_theta, s_star = flow_horizons(n, m, config.s_max)
    return s_grid(s_theta, config.s_step), s_grid(s_star, config.s_step)


def estimate_exponents(problem: ApproximationProblem, config: SuiteConfig | None = None) -> ExponentRun:
    """Flow both problems and estimate exponents by every route.

    Flow errors propagate; failures of the classical and direct routes are
    collected in ``errors``.
    """
    config = config or SuiteConfig()
    n, m, d = problem.n, problem.m, problem.d
    errors: list[str] = []
    grid, grid_star = flow_grids(n, m, config)
    trace = psi_profile(problem, grid)
    trace_star = psi_profile(problem.transposed(), grid_star)
    if config.corrupt_lambda_order:
        trace = _corrupt(trace)
    s_theta, s_star = trace[-1].s, trace_star[-1].s
    window = (s_theta / 2, s_theta)
    window_star = (s_star / 2, s_star)
    reports = {p: schmidt_route_report(trace, p, n, m, window, problem.exact) for p in range(1, d)}
    star_reports = {
        p: schmidt_route_report(trace_star, p, m, n, window_star, problem.exact, transposed=True)
        for p in range(1, d)
    }
    extra = []
    t_max = config.t_max or default_t_max(m)
    t_max_star = config.t_max or default_t_max(n)
    try:
        extra.append(classical_report(problem, t_max))
        extra.append(classical_report(problem, t_max_star, transposed=True))
    except Exception as exc:  # reported, never fatal
        errors.append(f"classical: {exc}")
    for p in range(1, d):
        try:
            # wedges of flow witnesses at time s have height about e^{kappa_p s}
            t_p = math.exp(kappa(p, n, m) * s_theta)
            extra.append(direct_grade_p_estimate(
                problem, p, t_p, trace=trace, height=config.height, cap=config.enumeration_cap))
        except Exception as exc:
            errors.append(f"direct grade {p}: {exc}")
    duality = duality_reports(list(reports.values()), list(star_reports.values()), n, m)
    return ExponentRun(trace, trace_star, window, window_star, reports, star_reports, extra, duality, errors)


def _wanted_families(only: Sequence[str]) -> tuple[set[str], set[str]]:
    """Families to evaluate and the filter to apply to report names."""
    if not only:
        return set(REGISTRY), set()
    families = {name for name in only if name in REGISTRY}
    names = set(only) - families
    if names:
        # instance names such as thm2_case1 need their families evaluated
        families = set(REGISTRY)
    return families, set(only)


def run_suite(problem: ApproximationProblem, config: SuiteConfig | None = None) -> SuiteResult:
    """Flow, exponent estimation and every inequality check for Theta and its transpose."""
    config = config or SuiteConfig()
    n, m = problem.n, problem.m
    sol = check_hypothesis_solution_space(problem)
    sol_star = check_hypothesis_solution_space(problem.transposed())
    try:
        run = estimate_exponents(problem, config)
    except FlowError as exc:
        return SuiteResult(problem.label, n, m, [], [], sol, sol_star, [], [f"flow: {exc}"])
    errors = list(run.errors)
    bundle = ExponentBundle(n, m, run.reports, run.star_reports, sol, sol_star)
    families, names = _wanted_families(config.only)
    results: list[InequalityReport] = []
    for name in EXPONENT_FAMILIES:
        if name in families:
            results.extend(evaluate_inequality(name, bundle, config.tolerance))
    if families & set(POINTWISE_FAMILIES):
        estimates = {p: (r.psi_lower, r.psi_upper) for p, r in run.reports.items()}
        limit = config.companion_limit if families & {"lemma1", "companion_bounds"} else 0
        try:
            pointwise = pointwise_suite(run.trace, problem, sol, run.window, estimates, limit)
        except FlowError as exc:
            errors.append(f"pointwise: {exc}")
            pointwise = []
        results.extend(r for r in pointwise if r.family in families)
    if names:
        results = [r for r in results if r.family in names or r.name in names]
        if not results:
            raise HarnessError(f"no inequality matches {sorted(names)}")
    return SuiteResult(problem.label, n, m, run.all_reports, run.duality, sol, sol_star, _ordered(results), errors)


def suite_to_json(results: Sequence[SuiteResult]) -> str:
    payload = {
        "fixtures": [r.to_json() for r in results],
        "violated": any(r.violated for r in results),
        "errors": any(r.errors for r in results),
    }
    return json.dumps(payload, indent=1, sort_keys=False) + "\n"


def suite_table(results: Sequence[SuiteResult]) -> str:
    lines = []
    header = f"{'fixture':<28} {'inequality':<34} {'verdict':<27} {'margin':>12}"
    lines.append(header)
    lines.append("-" * len(header))
    for res in results:
        for rep in res.inequalities:
            margin = "nan" if math.isnan(rep.margin) else f"{rep.margin:.4g}"
            lines.append(f"{res.label[:28]:<28} {rep.name[:34]:<34} {rep.verdict:<27} {margin:>12}")
        for err in res.errors:
            lines.append(f"{res.label[:28]:<28} ERROR {err}")
    return "\n".join(lines) + "\n"
