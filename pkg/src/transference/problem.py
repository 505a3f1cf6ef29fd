"""The approximation problem: a real n x m matrix and its transpose."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import mpmath

DEFAULT_PRECISION_BITS = 192


class ProblemError(ValueError):
    """Raised for malformed approximation problems."""


def to_fraction(value, bits: int = DEFAULT_PRECISION_BITS) -> Fraction:
    """Convert an entry to an exact Fraction.

    Strings of the form "p/q" and decimal strings are parsed exactly.
    mpmath numbers and floats are converted exactly from their binary value,
    after rounding mpf values to ``bits`` bits of mantissa.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ProblemError(f"cannot parse matrix entry {value!r}") from exc
    if isinstance(value, float):
        if value != value or value in (float("inf"), float("-inf")):
            raise ProblemError("matrix entries must be finite")
        return Fraction(value)
    if isinstance(value, mpmath.mpf):
        if not mpmath.isfinite(value):
            raise ProblemError("matrix entries must be finite")
        with mpmath.workprec(bits):
            man, exp = mpmath.mpf(value).man_exp
        return Fraction(int(man)) * Fraction(2) ** int(exp)
    raise ProblemError(f"unsupported matrix entry type {type(value).__name__}")


@dataclass(frozen=True)
class ApproximationProblem:
    """The matrix Theta of the system Theta x = y, with x in R^m and y in R^n.

    Entries are stored as exact Fractions. ``exact`` marks matrices whose
    entries are the intended rational numbers (as opposed to binary
    approximations of reals), which enables exact rank computations.
    """

    theta: tuple[tuple[Fraction, ...], ...]
    exact: bool = False
    label: str = ""
    bits: int = DEFAULT_PRECISION_BITS
    _denominator: int = field(init=False, repr=False, compare=False)
    _numerators: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        rows = self.theta
        if not rows or not rows[0]:
            raise ProblemError("empty matrix")
        width = len(rows[0])
        if any(len(r) != width for r in rows):
            raise ProblemError("ragged matrix")
        if len(rows) + width < 3:
            raise ProblemError("need n + m >= 3")
        den = 1
        for row in rows:
            for v in row:
                den = den * v.denominator // math.gcd(den, v.denominator)
        nums = tuple(tuple(int(v * den) for v in row) for row in rows)
        object.__setattr__(self, "_denominator", den)
        object.__setattr__(self, "_numerators", nums)

    @classmethod
    def from_rows(
        cls,
        rows: Iterable[Sequence],
        exact: bool | None = None,
        label: str = "",
        bits: int = DEFAULT_PRECISION_BITS,
    ) -> "ApproximationProblem":
        rows = [list(r) for r in rows]
        if exact is None:
            exact = all(isinstance(v, (int, Fraction)) or (isinstance(v, str) and "." not in v)
                        for row in rows for v in row)
        theta = tuple(tuple(to_fraction(v, bits) for v in row) for row in rows)
        return cls(theta=theta, exact=exact, label=label, bits=bits)

    @classmethod
    def zero(cls, n: int, m: int) -> "ApproximationProblem":
        return cls(theta=tuple((Fraction(0),) * m for _ in range(n)), exact=True, label="zero")

    @property
    def n(self) -> int:
        return len(self.theta)

    @property
    def m(self) -> int:
        return len(self.theta[0])

    @property
    def d(self) -> int:
        return self.n + self.m

    @property
    def denominator(self) -> int:
        """Common denominator Q with Theta = N / Q for an integer matrix N."""
        return self._denominator

    @property
    def numerators(self) -> tuple[tuple[int, ...], ...]:
        return self._numerators

    def transposed(self) -> "ApproximationProblem":
        theta_t = tuple(tuple(self.theta[i][j] for i in range(self.n)) for j in range(self.m))
        label = f"{self.label}^T" if self.label else ""
        return ApproximationProblem(theta=theta_t, exact=self.exact, label=label, bits=self.bits)

    def as_floats(self) -> list[list[float]]:
        return [[float(v) for v in row] for row in self.theta]

    def residual_numerators(self, x: Sequence[int], y: Sequence[int]) -> list[int]:
        """Q * (y - Theta x) as exact integers."""
        q = self._denominator
        return [q * y[i] - sum(a * b for a, b in zip(self._numerators[i], x)) for i in range(self.n)]

    def residuals(self, x: Sequence[int], y: Sequence[int]) -> list[Fraction]:
        q = self._denominator
        return [Fraction(r, q) for r in self.residual_numerators(x, y)]

