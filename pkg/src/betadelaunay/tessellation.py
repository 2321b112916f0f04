"""Tessellation data model and windowed statistics.

A :class:`Tessellation` keeps the full point table of the sample it was
built from; cells are sorted d-tuples of row indices into that table, so
redundant (covered) points simply never occur in a cell.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import ConvexHull, QhullError

SCHEMA_VERSION = 1


class StabilizationError(RuntimeError):
    """A certified statistic was requested outside the certified region."""


@dataclass
class Tessellation:
    v: np.ndarray
    h: np.ndarray
    cells: np.ndarray
    stabilized_radius: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=float)
        if self.v.ndim == 1:
            self.v = self.v.reshape(len(self.v), -1)
        self.h = np.asarray(self.h, dtype=float).reshape(-1)
        m = self.v.shape[1]
        cells = np.asarray(self.cells, dtype=np.intp).reshape(-1, m + 1)
        cells = np.sort(cells, axis=1)
        if len(cells):
            cells = np.unique(cells, axis=0)
        self.cells = cells

    @property
    def dim(self) -> int:
        return self.v.shape[1]

    @property
    def d(self) -> int:
        return self.dim + 1

    def __len__(self) -> int:
        return len(self.cells)

    @property
    def vertex_ids(self) -> np.ndarray:
        return np.unique(self.cells)

    def cell_set(self) -> set:
        return {tuple(int(i) for i in c) for c in self.cells}

    def with_cells(self, cells, **meta) -> "Tessellation":
        return Tessellation(self.v, self.h, cells, self.stabilized_radius, {**self.meta, **meta})

    # --- serialisation ---------------------------------------------------
    def to_json(self) -> str:
        vids = self.vertex_ids
        doc = {
            "schema_version": SCHEMA_VERSION,
            "dim": self.dim,
            "points": [[*map(float, self.v[i]), float(self.h[i])] for i in range(len(self.h))],
            "vertices": [int(i) for i in vids],
            "cells": [[int(i) for i in c] for c in self.cells],
            "stabilized_radius": self.stabilized_radius,
            "meta": self.meta,
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Tessellation":
        doc = json.loads(text)
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported tessellation schema {doc.get('schema_version')!r}")
        dim = doc["dim"]
        pts = np.array(doc["points"], dtype=float).reshape(-1, dim + 1)
        cells = np.array(doc["cells"], dtype=np.intp).reshape(-1, dim + 1)
        return cls(pts[:, :dim], pts[:, dim], cells, doc.get("stabilized_radius"),
                   doc.get("meta", {}))


@dataclass(frozen=True)
class WindowBox:
    """The closed cube [-n, n]^dim."""

    n: float
    dim: int

    def __post_init__(self):
        if not self.n > 0:
            raise ValueError("window half-width must be positive")

    @property
    def lo(self) -> np.ndarray:
        return np.full(self.dim, -float(self.n))

    @property
    def hi(self) -> np.ndarray:
        return np.full(self.dim, float(self.n))

    @property
    def circumradius(self) -> float:
        return self.n * math.sqrt(self.dim)

    def volume(self) -> float:
        return (2.0 * self.n) ** self.dim

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.all((x >= -self.n) & (x <= self.n), axis=1)


# ---------------------------------------------------------------------------
# faces and centres

def _check_k(t: Tessellation, k: int) -> int:
    k = int(k)
    if not 0 <= k <= t.dim:
        raise ValueError(f"face dimension must lie in [0, {t.dim}], got {k}")
    return k


def k_faces(t: Tessellation, k: int, return_counts: bool = False):
    """Distinct k-faces as a sorted (F, k+1) index array.

    With ``return_counts`` also returns how many cells contain each face.
    """
    k = _check_k(t, k)
    if len(t.cells) == 0:
        faces = np.zeros((0, k + 1), dtype=np.intp)
        return (faces, np.zeros(0, dtype=np.intp)) if return_counts else faces
    cols = list(itertools.combinations(range(t.d), k + 1))
    allf = np.concatenate([t.cells[:, list(c)] for c in cols])
    faces, counts = np.unique(allf, axis=0, return_counts=True)
    return (faces, counts) if return_counts else faces


def enumerate_k_faces(t: Tessellation, k: int) -> set:
    """Set of k-faces, each a strictly increasing tuple of vertex indices."""
    return {tuple(int(i) for i in f) for f in k_faces(t, k)}


def _lex_rank(v: np.ndarray) -> np.ndarray:
    order = np.lexsort(v.T[::-1])
    sv = v[order]
    if len(sv) > 1 and np.any(np.all(sv[1:] == sv[:-1], axis=1)):
        raise ValueError("distinct vertices share identical spatial coordinates")
    rank = np.empty(len(v), dtype=np.intp)
    rank[order] = np.arange(len(v))
    return rank


def center_ids(t: Tessellation, faces: np.ndarray) -> np.ndarray:
    """Index of the lexicographically smallest vertex of each face."""
    faces = np.asarray(faces, dtype=np.intp).reshape(len(faces), -1)
    if len(faces) == 0:
        return np.zeros(0, dtype=np.intp)
    vids = np.unique(faces)
    rank = np.full(len(t.h), -1, dtype=np.intp)
    rank[vids] = _lex_rank(t.v[vids])
    pick = np.argmin(rank[faces], axis=1)
    return faces[np.arange(len(faces)), pick]


def face_center(face, t: Tessellation) -> np.ndarray:
    """Lexicographically smallest vertex of ``face`` (first coordinate, then second, ...)."""
    face = np.asarray(face, dtype=np.intp).reshape(1, -1)
    return t.v[center_ids(t, face)[0]].copy()


# ---------------------------------------------------------------------------
# windowed statistics

def _certify(t: Tessellation, w: WindowBox, certified: bool) -> None:
    if w.dim != t.dim:
        raise ValueError(f"window dimension {w.dim} does not match tessellation {t.dim}")
    if not certified:
        return
    R = t.stabilized_radius
    if R is None or w.circumradius > R:
        raise StabilizationError(
            f"window of circumradius {w.circumradius:.6g} exceeds stabilized radius {R}")


def count_faces_in_window(t: Tessellation, k: int, w: WindowBox, certified: bool = False) -> int:
    """Number of k-faces whose centre lies in the closed box ``w``."""
    _certify(t, w, certified)
    faces = k_faces(t, k)
    if len(faces) == 0:
        return 0
    c = center_ids(t, faces)
    return int(np.count_nonzero(w.contains(t.v[c])))


def simplex_volume(pts: np.ndarray) -> np.ndarray:
    """k-volume of simplices given as (B, k+1, m) vertex arrays (Gram determinant)."""
    pts = np.asarray(pts, dtype=float)
    k = pts.shape[1] - 1
    if k == 0:
        return np.ones(len(pts))
    E = pts[:, 1:] - pts[:, :1]
    G = np.einsum("bij,bkj->bik", E, E)
    return np.sqrt(np.clip(np.linalg.det(G), 0, None)) / math.factorial(k)


_SNAP = 1e-12


def _clip(P: np.ndarray, j: int, bound: float, sign: float) -> np.ndarray:
    """Points spanning conv(P) ∩ {sign * x_j <= sign * bound}."""
    s = sign * (P[:, j] - bound)
    s[np.abs(s) <= _SNAP] = 0.0
    inside = s <= 0
    if inside.all():
        return P
    keep = [P[inside]]
    a, b = np.nonzero(s < 0)[0], np.nonzero(s > 0)[0]
    if len(a):
        ia, ib = np.meshgrid(a, b, indexing="ij")
        ia, ib = ia.ravel(), ib.ravel()
        lam = s[ia] / (s[ia] - s[ib])
        X = P[ia] + lam[:, None] * (P[ib] - P[ia])
        X[:, j] = bound
        keep.append(X)
    return np.concatenate(keep)


def _local_coords(P: np.ndarray, basis: np.ndarray, origin: np.ndarray) -> np.ndarray:
    return (P - origin) @ basis


def _polytope_volume(Q: np.ndarray, k: int) -> float:
    """k-volume of the convex hull of points already expressed in R^k."""
    if len(Q) <= k:
        return 0.0
    if k == 1:
        return float(Q[:, 0].max() - Q[:, 0].min())
    try:
        hull = ConvexHull(Q)
    except QhullError:
        return 0.0
    c = Q[hull.vertices].mean(axis=0)
    fan = np.concatenate([np.broadcast_to(c, (len(hull.simplices), 1, k)),
                          Q[hull.simplices]], axis=1)
    return float(simplex_volume(fan).sum())


def clipped_simplex_volume(S: np.ndarray, w: WindowBox) -> float:
    """k-volume of the simplex with vertex rows ``S`` intersected with the box."""
    S = np.asarray(S, dtype=float)
    k = len(S) - 1
    P = S
    for j in range(S.shape[1]):
        for bound, sign in ((w.n, 1.0), (-w.n, -1.0)):
            P = _clip(P, j, bound, sign)
            if len(P) == 0:
                return 0.0
        if len(P) > 4 * (k + 1) and k >= 1:
            P = _prune(P, S, k)
    if k == 0:
        return float(len(P) > 0)
    basis, _ = np.linalg.qr((S[1:] - S[0]).T)
    return _polytope_volume(_local_coords(P, basis, S[0]), k)


def _prune(P: np.ndarray, S: np.ndarray, k: int) -> np.ndarray:
    basis, _ = np.linalg.qr((S[1:] - S[0]).T)
    Q = _local_coords(P, basis, S[0])
    if k == 1:
        return P[[int(np.argmin(Q[:, 0])), int(np.argmax(Q[:, 0]))]]
    try:
        return P[ConvexHull(Q).vertices]
    except QhullError:
        return P


def skeleton_volume_in_window(t: Tessellation, k: int, w: WindowBox,
                              certified: bool = False) -> float:
    """k-dimensional volume of the k-skeleton inside the closed box ``w``.

    Every k-face is counted once.  For k = 0 this is the number of vertices
    in the box.
    """
    _certify(t, w, certified)
    k = _check_k(t, k)
    faces = k_faces(t, k)
    if len(faces) == 0:
        return 0.0
    P = t.v[faces]
    if k == 0:
        return float(np.count_nonzero(w.contains(P[:, 0])))
    n = w.n
    inside = np.all((P >= -n) & (P <= n), axis=(1, 2))
    outside = np.any(np.all(P > n, axis=1) | np.all(P < -n, axis=1), axis=1)
    total = float(simplex_volume(P[inside]).sum())
    for i in np.nonzero(~inside & ~outside)[0]:
        total += clipped_simplex_volume(P[i], w)
    return total


# ---------------------------------------------------------------------------
# restriction and comparison

def _distance_to_simplices(P: np.ndarray) -> np.ndarray:
    """Euclidean distance from the origin to each simplex in the (B, j, m) batch."""
    B, j, m = P.shape
    best = np.min(np.einsum("bij,bij->bi", P, P), axis=1)
    for size in range(2, j + 1):
        for sub in itertools.combinations(range(j), size):
            Q = P[:, list(sub)]
            E = Q[:, 1:] - Q[:, :1]
            G = np.einsum("bij,bkj->bik", E, E)
            rhs = -np.einsum("bij,bj->bi", E, Q[:, 0])
            ok = np.abs(np.linalg.det(G)) > 1e-300
            lam = np.zeros((B, size - 1))
            if ok.any():
                lam[ok] = np.linalg.solve(G[ok], rhs[ok][..., None])[..., 0]
            bary = np.concatenate([1 - lam.sum(axis=1, keepdims=True), lam], axis=1)
            ok &= np.all(bary >= 0, axis=1)
            x = Q[:, 0] + np.einsum("bi,bij->bj", lam, E)
            dist = np.einsum("bj,bj->b", x, x)
            best = np.where(ok, np.minimum(best, dist), best)
    return np.sqrt(best)


def cells_meeting_ball(t: Tessellation, R: float) -> np.ndarray:
    """Boolean mask of cells that intersect the closed ball B_R."""
    if len(t.cells) == 0:
        return np.zeros(0, dtype=bool)
    P = t.v[t.cells]
    r2 = np.einsum("bij,bij->bi", P, P)
    near = np.any(r2 <= R * R, axis=1)
    c = P.mean(axis=1)
    spread = np.sqrt(np.max(np.einsum("bij,bij->bi", P - c[:, None], P - c[:, None]), axis=1))
    far = np.linalg.norm(c, axis=1) - spread > R
    out = near.copy()
    todo = ~near & ~far
    if todo.any():
        out[todo] = _distance_to_simplices(P[todo]) <= R
    return out


def restrict_to_ball(t: Tessellation, R: float) -> Tessellation:
    """Sub-tessellation of the cells meeting B_R."""
    if not R > 0:
        raise ValueError("R must be positive")
    return t.with_cells(t.cells[cells_meeting_ball(t, R)])


def cell_signature(t: Tessellation) -> frozenset:
    """Coordinate-based description of the cells, independent of point indexing."""
    pts = np.column_stack([t.v, t.h])
    return frozenset(tuple(sorted(tuple(float(x) for x in pts[i]) for i in c)) for c in t.cells)
