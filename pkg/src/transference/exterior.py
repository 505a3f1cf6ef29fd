"""Exterior algebra over R^d in the standard Pluecker basis.

Basis p-vectors e_I are indexed by strictly increasing tuples I of 0-based
positions, ordered lexicographically. Coefficients may be any exact or
high-precision scalar (int, Fraction, mpmath.mpf).
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb
from typing import Iterator, Sequence

logger = logging.getLogger(__name__)


class ExteriorError(ValueError):
    """Incompatible operands or invalid index sets."""


@lru_cache(maxsize=None)
def subsets(d: int, k: int) -> tuple[tuple[int, ...], ...]:
    """All k-subsets of range(d), lexicographically ordered."""
    return tuple(itertools.combinations(range(d), k))


@lru_cache(maxsize=None)
def subset_rank(d: int, k: int) -> dict[tuple[int, ...], int]:
    return {s: i for i, s in enumerate(subsets(d, k))}


@dataclass(frozen=True)
class IndexSet:
    """A set sigma = {i_1 < ... < i_k} of 1-based indices in [1, d]."""

    members: tuple[int, ...]
    d: int

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.members, self.members[1:])):
            raise ExteriorError(f"index set {self.members} is not strictly increasing")
        if self.members and (self.members[0] < 1 or self.members[-1] > self.d):
            raise ExteriorError(f"index set {self.members} leaves [1, {self.d}]")

    @property
    def grade(self) -> int:
        return len(self.members)

    @property
    def rank(self) -> int:
        """Position in the lexicographic order of all grade-k subsets."""
        return subset_rank(self.d, self.grade)[tuple(i - 1 for i in self.members)]

    @classmethod
    def from_rank(cls, d: int, k: int, rank: int) -> "IndexSet":
        return cls(tuple(i + 1 for i in subsets(d, k)[rank]), d)


@lru_cache(maxsize=None)
def _wedge_table(d: int, p: int, q: int) -> tuple[tuple[int, int, int, int], ...]:
    """(index in grade p, index in grade q, index in grade p+q, sign) for disjoint pairs."""
    rank = subset_rank(d, p + q)
    table = []
    for i, a in enumerate(subsets(d, p)):
        aset = set(a)
        for j, b in enumerate(subsets(d, q)):
            if aset.intersection(b):
                continue
            # parity of the shuffle: count pairs (x in a, y in b) with x > y
            inversions = sum(1 for x in a for y in b if x > y)
            merged = tuple(sorted(a + b))
            table.append((i, j, rank[merged], -1 if inversions % 2 else 1))
    return tuple(table)


@dataclass(frozen=True)
class MultiVector:
    """A grade-p element of the exterior algebra of R^d."""

    d: int
    grade: int
    coeffs: tuple

    def __post_init__(self):
        if not 0 <= self.grade <= self.d:
            expected = 0
        else:
            expected = comb(self.d, self.grade)
        if len(self.coeffs) != expected:
            raise ExteriorError(
                f"grade-{self.grade} multivector in dimension {self.d} needs {expected} coefficients"
            )

    @classmethod
    def zero(cls, d: int, grade: int) -> "MultiVector":
        size = comb(d, grade) if 0 <= grade <= d else 0
        return cls(d, grade, (0,) * size)

    @classmethod
    def scalar(cls, d: int, value=1) -> "MultiVector":
        return cls(d, 0, (value,))

    @classmethod
    def vector(cls, coords: Sequence) -> "MultiVector":
        return cls(len(coords), 1, tuple(coords))

    @classmethod
    def basis(cls, d: int, members: Sequence[int]) -> "MultiVector":
        """The basis element e_{i_1} ^ ... ^ e_{i_k} for 1-based indices."""
        idx = IndexSet(tuple(members), d)
        coeffs = [0] * comb(d, idx.grade)
        coeffs[idx.rank] = 1
        return cls(d, idx.grade, tuple(coeffs))

    def __getitem__(self, members: Sequence[int]):
        return self.coeffs[IndexSet(tuple(members), self.d).rank]

    def items(self) -> Iterator[tuple[tuple[int, ...], object]]:
        """(1-based index tuple, coefficient) pairs in lexicographic order."""
        for s, c in zip(subsets(self.d, self.grade), self.coeffs):
            yield tuple(i + 1 for i in s), c

    def _check(self, other: "MultiVector") -> None:
        if self.d != other.d:
            raise ExteriorError(f"dimension mismatch: {self.d} vs {other.d}")

    def __add__(self, other: "MultiVector") -> "MultiVector":
        self._check(other)
        if self.grade != other.grade:
            raise ExteriorError("cannot add multivectors of different grades")
        return MultiVector(self.d, self.grade, tuple(a + b for a, b in zip(self.coeffs, other.coeffs)))

    def __neg__(self) -> "MultiVector":
        return MultiVector(self.d, self.grade, tuple(-a for a in self.coeffs))

    def __sub__(self, other: "MultiVector") -> "MultiVector":
        return self + (-other)

    def scale(self, factor) -> "MultiVector":
        return MultiVector(self.d, self.grade, tuple(factor * a for a in self.coeffs))

    def __xor__(self, other: "MultiVector") -> "MultiVector":
        return wedge(self, other)

    def is_zero(self) -> bool:
        return all(c == 0 for c in self.coeffs)

    def sup_norm(self):
        return sup_norm(self)

    def to_json(self) -> list:
        return [_json_scalar(c) for c in self.coeffs]


def _json_scalar(c):
    if isinstance(c, int):
        return c
    if isinstance(c, Fraction):
        return str(c) if c.denominator != 1 else c.numerator
    return str(c)


def wedge(a: MultiVector, b: MultiVector) -> MultiVector:
    """Exterior product a ^ b.

    When the combined grade exceeds d the product vanishes; the result then
    has grade p + q and no coefficient slots.
    """
    a._check(b)
    p, q, d = a.grade, b.grade, a.d
    if p + q > d:
        return MultiVector(d, p + q, ())
    out = [0] * comb(d, p + q)
    ac, bc = a.coeffs, b.coeffs
    for i, j, k, sign in _wedge_table(d, p, q):
        x, y = ac[i], bc[j]
        if x and y:
            out[k] = out[k] + x * y if sign > 0 else out[k] - x * y
    return MultiVector(d, p + q, tuple(out))


def wedge_all(vectors: Sequence[MultiVector], d: int | None = None) -> MultiVector:
    if not vectors:
        if d is None:
            raise ExteriorError("empty wedge needs an explicit dimension")
        return MultiVector.scalar(d)
    result = vectors[0]
    for v in vectors[1:]:
        result = wedge(result, v)
    return result


def sup_norm(a: MultiVector):
    """Largest absolute Pluecker coordinate; 0 for the zero multivector."""
    return max((abs(c) for c in a.coeffs), default=0)


def build_L_sigma(problem, sigma: IndexSet | Sequence[int]) -> MultiVector:
    """Wedge of the columns l_i, i in sigma, of the stacked matrix (E_m over Theta).

    The columns span the solution space of Theta x = y. The empty set gives
    the grade-0 unit.
    """
    members = sigma.members if isinstance(sigma, IndexSet) else tuple(sigma)
    m, d = problem.m, problem.d
    if any(i < 1 or i > m for i in members):
        raise ExteriorError(f"sigma {members} must lie in [1, {m}]")
    IndexSet(members, m)
    cols = [MultiVector.vector(column(problem, i)) for i in members]
    return wedge_all(cols, d)


def column(problem, j: int) -> tuple:
    """The j-th (1-based) column of (E_m over Theta)."""
    m = problem.m
    top = tuple(1 if i == j - 1 else 0 for i in range(m))
    return top + tuple(row[j - 1] for row in problem.theta)


class MultiVectorEnumeration:
    """Nonzero integer p-vectors with sup-norm at most ``height``, one per sign class.

    The canonical representative has its first nonzero coefficient positive.
    Iteration stops after ``cap`` elements; ``truncated`` then reports it.
    """

    def __init__(self, d: int, p: int, height: int, cap: int | None = None):
        if height < 1:
            raise ExteriorError("height must be >= 1")
        if not 0 <= p <= d:
            raise ExteriorError(f"grade {p} outside [0, {d}]")
        self.d, self.p, self.height, self.cap = d, p, height, cap
        self.truncated = False
        self.count = 0

    @property
    def total(self) -> int:
        return ((2 * self.height + 1) ** comb(self.d, self.p) - 1) // 2

    def __iter__(self) -> Iterator[MultiVector]:
        self.truncated = False
        self.count = 0
        size = comb(self.d, self.p)
        h = self.height
        # first nonzero slot at position `lead`, positive there
        for lead in range(size):
            for first in range(1, h + 1):
                for rest in itertools.product(range(-h, h + 1), repeat=size - lead - 1):
                    if self.cap is not None and self.count >= self.cap:
                        self.truncated = True
                        logger.warning(
                            "multivector enumeration truncated at %d of %d elements", self.cap, self.total
                        )
                        return
                    self.count += 1
                    yield MultiVector(self.d, self.p, (0,) * lead + (first,) + rest)


def enumerate_integer_multivectors(d: int, p: int, height: int, cap: int | None = None) -> MultiVectorEnumeration:
    return MultiVectorEnumeration(d, p, height, cap)
