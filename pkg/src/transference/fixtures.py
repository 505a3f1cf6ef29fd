"""Test matrices: seeded random, algebraic powers, Liouville-type, rational and user input."""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import mpmath

from .problem import DEFAULT_PRECISION_BITS, ApproximationProblem, ProblemError, to_fraction

KINDS = ("random-uniform", "algebraic-power", "liouville", "rational", "user")
DEFAULT_SHAPES = ((2, 1), (1, 2), (2, 2), (3, 1), (1, 3))


class FixtureError(ValueError):
    """Invalid fixture description or file."""


@dataclass(frozen=True)
class FixtureSpec:
    kind: str
    n: int
    m: int
    seed: int = 0
    bits: int = DEFAULT_PRECISION_BITS
    params: dict = field(default_factory=dict)
    label: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise FixtureError(f"unknown fixture kind {self.kind!r}")
        if self.n < 1 or self.m < 1 or self.n + self.m < 3:
            raise FixtureError("need n, m >= 1 and n + m >= 3")
        if self.bits < 64:
            raise FixtureError("precision must be at least 64 bits")

    @property
    def name(self) -> str:
        return self.label or f"{self.kind}-{self.n}x{self.m}-{self.seed}"


def _uniform(rng: random.Random, bits: int) -> Fraction:
    """Uniform dyadic in (0, 1) carrying ``bits`` random bits."""
    while True:
        k = rng.getrandbits(bits)
        if k:
            return Fraction(k, 1 << bits)


def real_root(coeffs: Sequence[int], interval: tuple[float, float], bits: int) -> mpmath.mpf:
    """The unique root of the polynomial (highest degree first) in the interval.

    The root is isolated by bisection on a sign change and polished with
    Newton steps at ``bits`` + 32 bits of working precision.
    """
    lo, hi = interval
    with mpmath.workprec(bits + 32):
        a, b = mpmath.mpf(lo), mpmath.mpf(hi)
        fa, fb = mpmath.polyval(list(coeffs), a), mpmath.polyval(list(coeffs), b)
        if fa == 0:
            return +a
        if fb == 0:
            return +b
        if fa * fb > 0:
            raise FixtureError(f"polynomial {list(coeffs)} has no sign change on [{lo}, {hi}]")
        for _ in range(60):
            mid = (a + b) / 2
            fm = mpmath.polyval(list(coeffs), mid)
            if fm == 0:
                return mid
            if fa * fm < 0:
                b, fb = mid, fm
            else:
                a, fa = mid, fm
        root = mpmath.findroot(lambda x: mpmath.polyval(list(coeffs), x), (a + b) / 2)
        if not lo <= root <= hi:
            raise FixtureError("root refinement left the isolating interval")
        return root


def liouville_value(base: int, terms: int, bits: int) -> mpmath.mpf:
    """sum_{k=1}^{terms} base^{-k!} at the given precision."""
    with mpmath.workprec(bits + 32):
        return mpmath.fsum(mpmath.power(base, -math.factorial(k)) for k in range(1, terms + 1))


def generate(spec: FixtureSpec) -> ApproximationProblem:
    n, m, bits = spec.n, spec.m, spec.bits
    params = spec.params
    rng = random.Random(spec.seed)
    if spec.kind == "random-uniform":
        rows = [[_uniform(rng, bits) for _ in range(m)] for _ in range(n)]
        return ApproximationProblem(_freeze(rows), exact=False, label=spec.name, bits=bits)
    if spec.kind == "algebraic-power":
        coeffs = params.get("poly", [1] + [0] * (n * m) + [-2])
        interval = tuple(params.get("interval", (1.0, 2.0)))
        theta = real_root(coeffs, interval, bits)
        with mpmath.workprec(bits + 32):
            powers = [theta ** (k + 1) for k in range(n * m)]
        rows = [[to_fraction(powers[i * m + j], bits) for j in range(m)] for i in range(n)]
        return ApproximationProblem(_freeze(rows), exact=False, label=spec.name, bits=bits)
    if spec.kind == "liouville":
        base, terms = int(params.get("base", 10)), int(params.get("terms", 5))
        first = to_fraction(liouville_value(base, terms, bits), bits)
        rows = [[_uniform(rng, bits) for _ in range(m)] for _ in range(n)]
        rows[0][0] = first
        return ApproximationProblem(_freeze(rows), exact=False, label=spec.name, bits=bits)
    if spec.kind == "rational":
        entries = params.get("entries")
        if entries is None:
            entries = [[f"1/{i * m + j + 2}" for j in range(m)] for i in range(n)]
        rows = [[Fraction(str(v)) for v in row] for row in entries]
        if len(rows) != n or any(len(r) != m for r in rows):
            raise FixtureError("rational entries do not match the requested shape")
        return ApproximationProblem(_freeze(rows), exact=True, label=spec.name, bits=bits)
    entries = params.get("entries")
    if entries is None:
        raise FixtureError("user fixtures need explicit entries")
    try:
        return ApproximationProblem.from_rows(entries, exact=params.get("exact"), label=spec.name, bits=bits)
    except ProblemError as exc:
        raise FixtureError(str(exc)) from exc


def _freeze(rows) -> tuple[tuple[Fraction, ...], ...]:
    return tuple(tuple(r) for r in rows)


def default_corpus(bits: int = DEFAULT_PRECISION_BITS, shapes=DEFAULT_SHAPES) -> list[FixtureSpec]:
    """Five random, two algebraic, one rational and one Liouville fixture per shape."""
    specs = []
    for n, m in shapes:
        k = n * m + 1
        for seed in range(5):
            specs.append(FixtureSpec("random-uniform", n, m, seed, bits))
        specs.append(FixtureSpec("algebraic-power", n, m, 0, bits,
                                 {"poly": [1] + [0] * (k - 1) + [-2], "interval": [1.0, 2.0]},
                                 f"algebraic-2root{k}-{n}x{m}"))
        specs.append(FixtureSpec("algebraic-power", n, m, 1, bits,
                                 {"poly": [1] + [0] * (k - 2) + [-1, -1], "interval": [1.0, 2.0]},
                                 f"algebraic-selmer{k}-{n}x{m}"))
        specs.append(FixtureSpec("rational", n, m, 0, bits))
        specs.append(FixtureSpec("liouville", n, m, 0, bits, {"base": 10, "terms": 5}))
    return specs


# -- on-disk format -------------------------------------------------------------


def _decimal(value: Fraction) -> str:
    """Exact decimal expansion of a Fraction whose denominator divides a power of 10."""
    q = value.denominator
    twos = fives = 0
    while q % 2 == 0:
        q //= 2
        twos += 1
    while q % 5 == 0:
        q //= 5
        fives += 1
    if q != 1:
        return f"{value.numerator}/{value.denominator}"
    digits = max(twos, fives)
    scaled = value * 10**digits
    sign = "-" if scaled < 0 else ""
    text = str(abs(scaled.numerator)).rjust(digits + 1, "0")
    if digits == 0:
        return sign + text
    return f"{sign}{text[:-digits]}.{text[-digits:]}"


def _entry(value: Fraction, exact: bool) -> str:
    if exact:
        return str(value)
    return _decimal(value)


def fixture_to_json(problem: ApproximationProblem, spec: FixtureSpec | None = None) -> str:
    payload = {
        "kind": spec.kind if spec else "user",
        "n": problem.n,
        "m": problem.m,
        "seed": spec.seed if spec else None,
        "bits": problem.bits,
        "params": spec.params if spec else {},
        "label": problem.label,
        "exact": problem.exact,
        "theta": [[_entry(v, problem.exact) for v in row] for row in problem.theta],
    }
    return json.dumps(payload, indent=1) + "\n"


def fixture_from_json(text: str, bits: int | None = None) -> ApproximationProblem:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FixtureError(f"fixture is not valid JSON: {exc}") from exc
    if "theta" not in data:
        raise FixtureError("fixture has no 'theta' matrix")
    stored_bits = int(data.get("bits") or DEFAULT_PRECISION_BITS)
    rows = [[str(v) for v in row] for row in data["theta"]]
    exact = data.get("exact")
    try:
        problem = ApproximationProblem.from_rows(
            rows, exact=exact, label=data.get("label", ""), bits=bits or stored_bits
        )
    except ProblemError as exc:
        raise FixtureError(str(exc)) from exc
    n, m = data.get("n"), data.get("m")
    if (n is not None and n != problem.n) or (m is not None and m != problem.m):
        raise FixtureError("fixture shape does not match its matrix")
    return problem


def load_fixture(path: str, bits: int | None = None) -> ApproximationProblem:
    with open(path, encoding="utf-8") as fh:
        return fixture_from_json(fh.read(), bits)
