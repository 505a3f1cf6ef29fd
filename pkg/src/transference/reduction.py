"""Lattice reduction and sup-norm minimisation for small dimensions.

A lattice is handled through an integer unimodular basis ``G`` (columns are
integer coordinate vectors z) together with an exact evaluator mapping z to
its image in the scaled frame, where the convex body is the unit cube.
Floating-point arithmetic is used only to steer the search; every column is
re-evaluated from exact integers after it changes.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

Evaluator = Callable[[Sequence[int]], np.ndarray]

LLL_DELTA = 0.99
# widest integer interval explored level by level before switching to the
# exact Chebyshev lower bound
MAX_INTERVAL = 48
TIE_RTOL = 1e-12


class EnumerationError(RuntimeError):
    """The bounded search failed to produce a vector."""


class ScaledBasis:
    """Integer basis columns with their exact images in the scaled frame."""

    def __init__(self, columns: Sequence[Sequence[int]], evaluate: Evaluator):
        self.evaluate = evaluate
        self.G = [list(map(int, c)) for c in columns]
        self.d = len(self.G)
        self.B = np.empty((self.d, self.d))
        for j in range(self.d):
            self.B[:, j] = evaluate(self.G[j])

    def copy(self, evaluate: Evaluator | None = None) -> "ScaledBasis":
        return ScaledBasis(self.G, evaluate or self.evaluate)

    def refresh(self, j: int) -> None:
        self.B[:, j] = self.evaluate(self.G[j])

    def add_multiple(self, target: int, source: int, q: int) -> None:
        """column[target] += q * column[source]"""
        if q == 0:
            return
        gt, gs = self.G[target], self.G[source]
        for i in range(self.d):
            gt[i] += q * gs[i]
        self.refresh(target)

    def swap(self, i: int, j: int) -> None:
        self.G[i], self.G[j] = self.G[j], self.G[i]
        self.B[:, [i, j]] = self.B[:, [j, i]]

    def negate(self, j: int) -> None:
        self.G[j] = [-v for v in self.G[j]]
        self.B[:, j] = -self.B[:, j]

    def vector(self, coeffs: Sequence[int]) -> list[int]:
        out = [0] * self.d
        for c, col in zip(coeffs, self.G):
            if c:
                for i in range(self.d):
                    out[i] += c * col[i]
        return out


def _gso(B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """mu (lower triangular, mu[k, j] for j < k) and squared GS norms."""
    r = np.linalg.qr(B, mode="r")
    diag = np.diag(r).copy()
    diag[diag == 0] = 1e-300
    mu = (r / diag[:, None]).T
    return mu, diag**2


def lll(basis: ScaledBasis, lo: int = 0, hi: int | None = None, delta: float = LLL_DELTA,
        max_iter: int = 100000) -> None:
    """LLL-reduce columns lo..hi-1 in place.

    Size reduction uses every earlier column (including those before ``lo``);
    swaps stay inside [lo, hi), so the span of the first ``lo`` columns is
    preserved.
    """
    d = basis.d
    hi = d if hi is None else hi
    k = lo + 1
    it = 0
    while k < hi:
        it += 1
        if it > max_iter:
            raise EnumerationError("LLL did not terminate")
        for _ in range(64):
            mu, _ = _gso(basis.B)
            changed = False
            for j in range(k - 1, -1, -1):
                q = mu[k, j]
                if abs(q) > 0.51:
                    basis.add_multiple(k, j, -int(round(q)))
                    mu, _ = _gso(basis.B)
                    changed = True
            if not changed:
                break
        mu, bn = _gso(basis.B)
        if bn[k] < (delta - mu[k, k - 1] ** 2) * bn[k - 1]:
            basis.swap(k, k - 1)
            k = max(k - 1, lo + 1)
        else:
            k += 1


@lru_cache(maxsize=None)
def _vertex_patterns(d: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Row subsets of size k+1 and sign patterns (first sign fixed to +1)."""
    rows, signs = [], []
    for subset in itertools.combinations(range(d), k + 1):
        for tail in itertools.product((1.0, -1.0), repeat=k):
            rows.append(subset)
            signs.append((1.0,) + tail)
    return np.array(rows, dtype=int), np.array(signs)


def chebyshev_min(A: np.ndarray, b: np.ndarray) -> tuple[float, np.ndarray]:
    """min over real u of |A u + b|_inf, with a minimiser.

    A must have full column rank. The optimum of this LP sits at a vertex
    where k + 1 rows satisfy A_i u + b_i = +-z, so all such systems are
    solved and the best feasible one kept.
    """
    d, k = A.shape
    if k == 0:
        return float(np.abs(b).max()), np.zeros(0)
    col = np.abs(A).max(axis=0)
    col[col == 0] = 1.0
    As = A / col
    rows, signs = _vertex_patterns(d, k)
    M = np.empty((len(rows), k + 1, k + 1))
    M[:, :, :k] = As[rows]
    M[:, :, k] = -signs
    rhs = -b[rows]
    rscale = np.abs(M).max(axis=2)
    M /= rscale[:, :, None]
    rhs = rhs / rscale
    det = np.abs(np.linalg.det(M))
    ok = det > 1e-13
    if not np.any(ok):
        raise EnumerationError("degenerate Chebyshev problem")
    sol = np.linalg.solve(M[ok], rhs[ok][:, :, None])[:, :, 0]
    U = sol[:, :k]
    vals = np.abs(U @ As.T + b[None, :]).max(axis=1)
    i = int(np.argmin(vals))
    return float(vals[i]), U[i] / col


class _Search:
    def __init__(self, B: np.ndarray, head: int, best: float, best_c: np.ndarray):
        self.B = B
        self.d = B.shape[1]
        self.head = head
        self.R = np.linalg.qr(B, mode="r")
        self.best = best
        self.best_c = best_c
        self.c = np.zeros(self.d)
        self.nodes = 0

    def radius2(self) -> float:
        return self.d * self.best * self.best * (1 + 1e-9)

    def run(self) -> None:
        self._level(self.d - 1, 0.0, True)

    def _leaf(self) -> None:
        if not np.any(self.c[self.head:]):
            return
        val = float(np.abs(self.B @ self.c).max())
        if val < self.best * (1 - TIE_RTOL):
            self.best = val
            self.best_c = self.c.copy()

    def _level(self, k: int, partial: float, top_zero: bool) -> None:
        self.nodes += 1
        if self.nodes > 2_000_000:
            raise EnumerationError("enumeration node budget exhausted")
        if k < 0:
            self._leaf()
            return
        if k == self.head - 1 and not np.any(self.c[self.head:]):
            return
        R, c = self.R, self.c
        rkk = abs(R[k, k])
        center = -float(R[k, k + 1:] @ c[k + 1:]) / R[k, k]
        budget = self.radius2() - partial
        if budget < 0:
            return
        hw = math.sqrt(budget) / rkk
        lo, hi = math.ceil(center - hw), math.floor(center + hw)
        if top_zero:
            lo = max(lo, 0)
        if hi < lo:
            return
        if hi - lo + 1 <= MAX_INTERVAL:
            self._zigzag(k, partial, top_zero, center, lo, hi)
        else:
            self._chebyshev(k, partial, top_zero, lo, hi)

    def _descend(self, k: int, v: int, partial: float, top_zero: bool) -> bool:
        R, c = self.R, self.c
        c[k] = v
        y = R[k, k] * v + float(R[k, k + 1:] @ c[k + 1:])
        p2 = partial + y * y
        if p2 > self.radius2():
            c[k] = 0
            return False
        self._level(k - 1, p2, top_zero and v == 0)
        c[k] = 0
        return True

    def _zigzag(self, k, partial, top_zero, center, lo, hi) -> None:
        start = min(max(int(round(center)), lo), hi)
        up, down = start, start - 1
        up_ok, down_ok = True, True
        while up_ok or down_ok:
            if up_ok:
                if up > hi or not self._descend(k, up, partial, top_zero):
                    up_ok = False
                up += 1
            if down_ok:
                if down < lo or not self._descend(k, down, partial, top_zero):
                    down_ok = False
                down -= 1

    def _bound(self, k: int, v: float) -> float:
        """Exact lower bound of the sup norm with c_k = v and c_{k+1..} fixed."""
        c = self.c
        b = self.B[:, k + 1:] @ c[k + 1:] + v * self.B[:, k]
        return chebyshev_min(self.B[:, :k], b)[0]

    def _chebyshev(self, k, partial, top_zero, lo, hi) -> None:
        c = self.c
        b = self.B[:, k + 1:] @ c[k + 1:]
        _, u = chebyshev_min(self.B[:, :k + 1], b)
        t = float(u[k])
        start = min(max(math.floor(t), lo), hi)
        tol = 1e-9
        for direction, first in ((1, start + 1), (-1, start)):
            v = first
            while lo <= v <= hi:
                if self._bound(k, v) >= self.best * (1 - tol):
                    break
                self._descend(k, v, partial, top_zero)
                v += direction


def minimise_outside(basis: ScaledBasis, head: int) -> tuple[float, list[int], np.ndarray]:
    """Smallest sup norm of a lattice vector outside the span of the first ``head`` columns.

    Returns (value, integer vector z, coefficient vector in the basis).
    """
    d = basis.d
    norms = np.abs(basis.B[:, head:]).max(axis=0)
    j = int(np.argmin(norms))
    best_c = np.zeros(d)
    best_c[head + j] = 1
    search = _Search(basis.B, head, float(norms[j]), best_c)
    search.run()
    coeffs = [int(round(v)) for v in search.best_c]
    return search.best, basis.vector(coeffs), np.array(coeffs)


def extend_flag(basis: ScaledBasis, head: int, coeffs: Sequence[int]) -> None:
    """Rebase columns head..d-1 so that column ``head`` completes the flag.

    ``coeffs`` expresses a lattice vector w in the current basis with a
    nonzero tail; afterwards the first head+1 columns span the primitive
    sublattice generated by the old head columns and w.
    """
    d = basis.d
    t = [int(v) for v in coeffs[head:]]
    idx = list(range(head, d))
    while True:
        nz = [i for i in range(len(t)) if t[i] != 0]
        if not nz:
            raise EnumerationError("vector lies in the span of the head")
        if len(nz) == 1:
            a = nz[0]
            break
        a = min(nz, key=lambda i: abs(t[i]))
        for b in nz:
            if b == a:
                continue
            q = t[b] // t[a]
            # t_a col_a + t_b col_b = t_a (col_a + q col_b) + (t_b - q t_a) col_b
            basis.add_multiple(idx[a], idx[b], q)
            t[b] -= q * t[a]
    if a != 0:
        basis.swap(idx[0], idx[a])
    if t[a] < 0:
        basis.negate(head)


def canonical_sign(z: Sequence[int]) -> list[int]:
    for v in z:
        if v != 0:
            return list(z) if v > 0 else [-x for x in z]
    return list(z)
