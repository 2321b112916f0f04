"""Exact lifted-orientation predicates.

A point ``(v, h)`` is lifted to ``(v, z)`` with ``z = h + |v|^2``; the
downward paraboloid through d lifted points becomes a hyperplane, and the
empty-paraboloid test becomes an orientation determinant.

Determinants are evaluated in floating point over whole batches with a
certified error bound (permanent of the absolute matrix times a rounding
factor, plus the propagated rounding of the lifted coordinate).  Entries the
filter cannot decide are recomputed in exact rational arithmetic.

Ties are broken by simulation of simplicity: coordinate ``j`` of the point
with sample index ``g`` is perturbed by ``eps ** 2 ** key`` with
``key = g * d`` for the lifted coordinate and ``g * d + 1 + j`` for the
spatial ones.  The ``*_sos`` variants never return zero.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from functools import lru_cache

import numpy as np

_U = np.finfo(float).eps / 2


class DegeneracyError(ValueError):
    """Spatial coordinates are affinely dependent where independence is required."""


@lru_cache(maxsize=None)
def _perms(n: int):
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.intp)
    signs = np.array([_perm_sign(p) for p in perms], dtype=float)
    return perms, signs


def _perm_sign(p) -> int:
    p = list(p)
    sign = 1
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            sign = -sign
    return sign


def _det_with_bound(M: np.ndarray, zcol: int | None = None, zerr: np.ndarray | None = None):
    """Float determinants of a batch (B, n, n) and a certified bound on their error.

    ``zerr`` (B, n) bounds the absolute input error of column ``zcol``.
    """
    B, n, _ = M.shape
    perms, signs = _perms(n)
    absM = np.abs(M)
    det = np.zeros(B)
    per = np.zeros(B)
    per_z = np.zeros(B)
    rows = np.arange(n)
    for p, s in zip(perms, signs):
        terms = M[:, rows, p]
        prod = terms.prod(axis=1)
        det += s * prod
        per += np.abs(prod)
        if zerr is not None:
            i = int(np.nonzero(p == zcol)[0][0])
            a = np.delete(absM[:, rows, p], i, axis=1).prod(axis=1)
            per_z += a * zerr[:, i]
    gamma = 2.0 * (n + len(perms)) * _U
    bound = gamma * per + per_z * (1 + gamma) + 1e-300 * (per > 0)
    return det, bound


def _exact_det(rows) -> Fraction:
    a = [list(r) for r in rows]
    n = len(a)
    det = Fraction(1)
    for c in range(n):
        piv = next((r for r in range(c, n) if a[r][c] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != c:
            a[c], a[piv] = a[piv], a[c]
            det = -det
        det *= a[c][c]
        inv = 1 / a[c][c]
        for r in range(c + 1, n):
            f = a[r][c] * inv
            if f:
                for k in range(c, n):
                    a[r][k] -= f * a[c][k]
    return det


def _sign(x) -> int:
    return (x > 0) - (x < 0)


class PointStore:
    """Float and exact views of a finite weighted point set."""

    def __init__(self, v, h):
        self.v = np.ascontiguousarray(v, dtype=float)
        self.h = np.ascontiguousarray(h, dtype=float).reshape(-1)
        if self.v.ndim != 2 or len(self.v) != len(self.h):
            raise ValueError("v must be (n, m) and h (n,)")
        self.m = self.v.shape[1]
        self.d = self.m + 1
        sq = np.einsum("ij,ij->i", self.v, self.v)
        self.z = sq + self.h
        self.zerr = (self.m + 2) * _U * (sq + np.abs(self.h)) * 1.01
        self._exact: dict[int, tuple] = {}
        self.exact_calls = 0

    def __len__(self):
        return len(self.h)

    def exact(self, i: int):
        """Exact (v..., z) of point ``i`` as Fractions."""
        i = int(i)
        row = self._exact.get(i)
        if row is None:
            v = [Fraction(float(x)) for x in self.v[i]]
            z = Fraction(float(self.h[i])) + sum(x * x for x in v)
            row = tuple(v) + (z,)
            self._exact[i] = row
        return row

    # --- matrices -------------------------------------------------------
    def lifted_matrix(self, idx: np.ndarray) -> np.ndarray:
        B, n = idx.shape
        M = np.ones((B, n, self.m + 2))
        M[:, :, : self.m] = self.v[idx]
        M[:, :, self.m] = self.z[idx]
        return M

    def spatial_matrix(self, idx: np.ndarray) -> np.ndarray:
        B, n = idx.shape
        M = np.ones((B, n, self.m + 1))
        M[:, :, : self.m] = self.v[idx]
        return M

    # --- raw exact signs --------------------------------------------------
    def orient_lifted(self, idx) -> np.ndarray:
        """Sign of det[[v_i, z_i, 1]] for rows idx (B, d+1); zero on exact degeneracy."""
        idx = np.atleast_2d(np.asarray(idx, dtype=np.intp))
        if len(idx) == 0:
            return np.zeros(0, dtype=int)
        det, bound = _det_with_bound(self.lifted_matrix(idx), self.m, self.zerr[idx])
        out = np.where(det > bound, 1, np.where(det < -bound, -1, 0))
        for b in np.nonzero(out == 0)[0]:
            out[b] = self._exact_lifted(idx[b])
        return out

    def orient_spatial(self, idx) -> np.ndarray:
        """Sign of det[[v_i, 1]] for rows idx (B, d)."""
        idx = np.atleast_2d(np.asarray(idx, dtype=np.intp))
        if len(idx) == 0:
            return np.zeros(0, dtype=int)
        det, bound = _det_with_bound(self.spatial_matrix(idx))
        out = np.where(det > bound, 1, np.where(det < -bound, -1, 0))
        for b in np.nonzero(out == 0)[0]:
            out[b] = self._exact_spatial(idx[b])
        return out

    def _exact_lifted(self, row) -> int:
        self.exact_calls += 1
        return _sign(_exact_det([self.exact(i) + (1,) for i in row]))

    def _exact_spatial(self, row) -> int:
        self.exact_calls += 1
        return _sign(_exact_det([self.exact(i)[: self.m] + (1,) for i in row]))

    # --- perturbed signs --------------------------------------------------
    def orient_lifted_sos(self, idx) -> np.ndarray:
        idx = np.atleast_2d(np.asarray(idx, dtype=np.intp))
        out = self.orient_lifted(idx)
        for b in np.nonzero(out == 0)[0]:
            out[b] = self._sos(idx[b], lifted=True)
        return out

    def orient_spatial_sos(self, idx) -> np.ndarray:
        idx = np.atleast_2d(np.asarray(idx, dtype=np.intp))
        out = self.orient_spatial(idx)
        for b in np.nonzero(out == 0)[0]:
            out[b] = self._sos(idx[b], lifted=False)
        return out

    def _sos(self, row, lifted: bool) -> int:
        m, d = self.m, self.d
        base = [list(self.exact(i)[: m + 1] if lifted else self.exact(i)[:m]) + [Fraction(1)]
                for i in row]
        ncols = len(base[0])
        entries = []
        for r, g in enumerate(row):
            g = int(g)
            for j in range(m):
                entries.append((g * d + 1 + j, r, j))
            if lifted:
                entries.append((g * d, r, m))
        entries.sort()
        for S in _matchings_in_order(tuple((r, c) for _, r, c in entries)):
            mat = [list(x) for x in base]
            for r, c in S:
                mat[r] = [Fraction(0)] * ncols
                mat[r][c] = Fraction(1)
            s = _sign(_exact_det(mat))
            if s:
                return s
        raise DegeneracyError("perturbed determinant vanished identically")


def _matchings_in_order(entries):
    """Sets of entries with distinct rows and columns, by increasing perturbation order."""
    k = len(entries)
    for mask in range(1, 1 << k):
        rows, cols, S = set(), set(), []
        ok = True
        bit = 0
        mm = mask
        while mm:
            if mm & 1:
                r, c = entries[bit]
                if r in rows or c in cols:
                    ok = False
                    break
                rows.add(r)
                cols.add(c)
                S.append((r, c))
            mm >>= 1
            bit += 1
        if ok:
            yield S


def inside_sign(store: PointStore, cells, queries) -> np.ndarray:
    """+1 if the query lies strictly inside the open downward paraboloid through
    the cell's d points, 0 on its boundary, -1 outside.  Exact."""
    cells = np.atleast_2d(np.asarray(cells, dtype=np.intp))
    q = np.asarray(queries, dtype=np.intp).reshape(-1, 1)
    so = store.orient_spatial(cells)
    if np.any(so == 0):
        raise DegeneracyError("defining points are spatially affinely dependent")
    lo = store.orient_lifted(np.hstack([cells, q]))
    return lo * so


def inside_sos(store: PointStore, cells, queries) -> np.ndarray:
    """Perturbed version of :func:`inside_sign`; boolean, never ambiguous."""
    cells = np.atleast_2d(np.asarray(cells, dtype=np.intp))
    q = np.asarray(queries, dtype=np.intp).reshape(-1, 1)
    so = store.orient_spatial_sos(cells)
    lo = store.orient_lifted_sos(np.hstack([cells, q]))
    return lo * so > 0
