"""Lifting-map geometry: circumparaboloids, the empty-paraboloid test and the
regular triangulation of a weighted sample.

The default construction lifts the sample to ``z = h + |v|^2``, takes the
lower facets of the qhull convex hull as candidates and certifies them
exactly: every candidate must have an empty circumparaboloid (kd-tree in
power-embedded coordinates, then exact predicates) and the candidates must
close up into a pseudo-manifold whose free ridges lie on the spatial convex
hull.  Any failure falls back to exact incremental insertion.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .point_process import PointSample, SpacePoint
from .predicates import DegeneracyError, PointStore, inside_sign, inside_sos
from .tessellation import Tessellation

ORACLE_CAP = 60


class OracleSizeError(ValueError):
    """Brute-force enumeration requested above the configured cap."""


class EmptySampleError(ValueError):
    pass


class PredicateSign(enum.Enum):
    INSIDE = 1
    ON_BOUNDARY = 0
    OUTSIDE = -1


class LiftedPoint(NamedTuple):
    v: tuple
    z: object


@dataclass(frozen=True)
class ParaboloidApex:
    """Apex of the downward paraboloid ``h = h_apex - |v - v_apex|^2`` (exact)."""

    v_apex: tuple
    h_apex: Fraction

    def as_float(self):
        return np.array([float(x) for x in self.v_apex]), float(self.h_apex)


def _as_point(p):
    v, h = p
    return tuple(np.atleast_1d(v).tolist()) if not isinstance(v, tuple) else v, h


def lift(p, exact: bool = False) -> LiftedPoint:
    """Parabolic lift ``(v, h) -> (v, h + |v|^2)``; rational when ``exact``."""
    v, h = _as_point(p)
    if exact:
        fv = tuple(Fraction(x) for x in v)
        return LiftedPoint(fv, Fraction(h) + sum(x * x for x in fv))
    return LiftedPoint(tuple(float(x) for x in v), float(h) + sum(float(x) ** 2 for x in v))


def circumparaboloid(points: Sequence) -> ParaboloidApex:
    """Exact apex of the downward paraboloid through d points.

    Solves ``z_i = c + 2 <v_i, v'>`` for ``(v', c)`` over the rationals and
    returns ``h' = c + |v'|^2``.
    """
    lifted = [lift(p, exact=True) for p in points]
    m = len(lifted[0].v)
    if len(lifted) != m + 1:
        raise ValueError(f"need exactly {m + 1} points in dimension {m}")
    rows = [[2 * x for x in lp.v] + [Fraction(1), lp.z] for lp in lifted]
    n = m + 1
    for c in range(n):
        piv = next((r for r in range(c, n) if rows[r][c] != 0), None)
        if piv is None:
            raise DegeneracyError("spatial coordinates are affinely dependent")
        rows[c], rows[piv] = rows[piv], rows[c]
        inv = 1 / rows[c][c]
        rows[c] = [x * inv for x in rows[c]]
        for r in range(n):
            if r != c and rows[r][c] != 0:
                f = rows[r][c]
                rows[r] = [a - f * b for a, b in zip(rows[r], rows[c])]
    sol = [rows[i][n] for i in range(n)]
    vp, c = tuple(sol[:m]), sol[m]
    return ParaboloidApex(vp, c + sum(x * x for x in vp))


def paraboloid_side(defining: Sequence, query) -> PredicateSign:
    """Exact position of ``query`` relative to the open downward paraboloid
    through the ``defining`` points."""
    pts = [_as_point(p) for p in list(defining) + [query]]
    store = PointStore([p[0] for p in pts], [p[1] for p in pts])
    n = len(pts) - 1
    s = inside_sign(store, [list(range(n))], [n])[0]
    return PredicateSign(int(s))


def growth_envelope(sample, w) -> np.ndarray | float:
    """Lower boundary of the paraboloid growth process: ``min_i h_i + |w - v_i|^2``."""
    v, h = _vh(sample)
    if len(h) == 0:
        raise EmptySampleError("growth envelope of an empty sample")
    w = np.asarray(w, dtype=float)
    single = w.ndim == 1
    W = np.atleast_2d(w)
    out = np.empty(len(W))
    step = max(1, 2_000_000 // max(len(h), 1))
    vv = np.einsum("ij,ij->i", v, v) + h
    for s in range(0, len(W), step):
        blk = W[s:s + step]
        # |w - v|^2 + h = |w|^2 - 2 w.v + (|v|^2 + h)
        vals = vv[None, :] - 2.0 * blk @ v.T
        out[s:s + step] = vals.min(axis=1) + np.einsum("ij,ij->i", blk, blk)
    return float(out[0]) if single else out


def _vh(sample):
    if isinstance(sample, (PointSample, Tessellation)):
        return sample.v, sample.h
    pts = [_as_point(p) for p in sample]
    if not pts:
        return np.zeros((0, 1)), np.zeros(0)
    return np.array([p[0] for p in pts], dtype=float), np.array([p[1] for p in pts], dtype=float)


# ---------------------------------------------------------------------------
# apexes in floating point

def cell_apexes(v: np.ndarray, h: np.ndarray, cells: np.ndarray):
    """Float apexes ``(v', h')`` of a batch of cells and the condition numbers of the solves."""
    cells = np.asarray(cells, dtype=np.intp)
    m = v.shape[1]
    if len(cells) == 0:
        return np.zeros((0, m)), np.zeros(0), np.zeros(0)
    P = v[cells]
    ref = P[:, :1, :]
    D = P[:, 1:, :] - ref
    z = h[cells] + np.einsum("ijk,ijk->ij", P - ref, P - ref)
    # translated: |v - ref|^2 + h = c + 2 <v - ref, u>; differences remove c
    rhs = z[:, 1:] - z[:, :1]
    M = 2.0 * D
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(M) if m > 0 else np.ones(len(cells))
        ok = np.isfinite(cond) & (cond < 1e12)
        u = np.full((len(cells), m), np.nan)
        if ok.any():
            u[ok] = np.linalg.solve(M[ok], rhs[ok][..., None])[..., 0]
    vp = u + ref[:, 0, :]
    hp = z[:, 0] + np.einsum("ij,ij->i", u, u)  # pow at ref in translated frame
    cond = np.where(ok, cond, np.inf)
    return vp, hp, cond


# ---------------------------------------------------------------------------
# brute force

def brute_force_tessellation(sample: PointSample, cap: int = ORACLE_CAP) -> Tessellation:
    """All d-tuples whose open circumparaboloid contains no other sample point.

    Enumerates every tuple; ties on the paraboloid are broken by the same
    symbolic perturbation as the construction.
    """
    v, h = sample.v, sample.h
    n, d = len(h), sample.model.d
    if n > cap:
        raise OracleSizeError(f"brute force capped at {cap} points, got {n}")
    if n < d:
        raise DegeneracyError(f"need at least d = {d} points")
    store = PointStore(v, h)
    tuples = np.array(list(itertools.combinations(range(n), d)), dtype=np.intp)
    if n == d:
        return Tessellation(v, h, tuples, meta={"method": "brute_force"})
    vp, hp, cond = cell_apexes(v, h, tuples)
    alive = np.ones(len(tuples), dtype=bool)
    # cheap rejection: the float-nearest query in power distance, certified exactly
    good = np.isfinite(hp)
    if good.any():
        pw = (np.einsum("ij,ij->i", vp[good], vp[good])[:, None] - 2 * vp[good] @ v.T
              + (np.einsum("ij,ij->i", v, v) + h)[None, :]) - hp[good][:, None]
        rows = np.arange(pw.shape[0])[:, None]
        pw[rows, tuples[good]] = np.inf
        best = np.argmin(pw, axis=1)
        idx = np.nonzero(good)[0]
        alive[idx[inside_sos(store, tuples[idx], best)]] = False
    keep = []
    for t in np.nonzero(alive)[0]:
        others = np.setdiff1d(np.arange(n), tuples[t])
        cells = np.repeat(tuples[t][None, :], len(others), axis=0)
        if not inside_sos(store, cells, others).any():
            keep.append(tuples[t])
    return Tessellation(v, h, np.array(keep, dtype=np.intp).reshape(-1, d),
                        meta={"method": "brute_force"})


# ---------------------------------------------------------------------------
# construction

def _check_full_dimensional(store: PointStore) -> None:
    v = store.v
    n, m = v.shape
    if n < m + 1:
        raise DegeneracyError(f"need at least {m + 1} points")
    base = v - v[0]
    if m == 0:
        return
    s = np.linalg.svd(base, compute_uv=False)
    if s[-1] > 1e-9 * max(s[0], 1e-300):
        return
    # exact rank check through a greedy independent set
    chosen = [0]
    for i in range(1, n):
        trial = chosen + [i]
        k = len(trial)
        mat = [[x - y for x, y in zip(store.exact(j)[:m], store.exact(0)[:m])] for j in trial[1:]]
        if _exact_rank(mat) == k - 1:
            chosen = trial
            if len(chosen) == m + 1:
                return
    raise DegeneracyError("all sample points are spatially affinely dependent")


def _exact_rank(rows) -> int:
    a = [list(r) for r in rows]
    rank, ncol = 0, len(a[0]) if a else 0
    for c in range(ncol):
        piv = next((r for r in range(rank, len(a)) if a[r][c] != 0), None)
        if piv is None:
            continue
        a[rank], a[piv] = a[piv], a[rank]
        for r in range(len(a)):
            if r != rank and a[r][c] != 0:
                f = a[r][c] / a[rank][c]
                a[r] = [x - f * y for x, y in zip(a[r], a[rank])]
        rank += 1
    return rank


def _qhull_candidates(store: PointStore) -> Optional[np.ndarray]:
    P = np.column_stack([store.v, store.z])
    P = P - P.mean(axis=0)
    scale = np.abs(P).max(axis=0)
    scale[scale == 0] = 1.0
    try:
        hull = ConvexHull(P / scale, qhull_options="Qt")
    except (QhullError, ValueError):
        return None
    lower = hull.equations[:, store.m] < 0
    return np.sort(hull.simplices[lower], axis=1)


def verify_cells(store: PointStore, cells: np.ndarray) -> bool:
    """Exact certificate that ``cells`` is the (perturbed) regular triangulation."""
    n, d, m = len(store), store.d, store.m
    if len(cells) == 0:
        return False
    cells = np.unique(np.sort(cells, axis=1), axis=0)
    # 1. closure: interior ridges shared by exactly two cells, free ridges on the hull
    ridges = np.concatenate([np.delete(cells, k, axis=1) for k in range(d)])
    opposite = np.concatenate([cells[:, k] for k in range(d)])
    uniq, inv, counts = np.unique(ridges, axis=0, return_inverse=True, return_counts=True)
    inv = inv.reshape(-1)
    if np.any(counts > 2):
        return False
    free = np.nonzero(counts[inv] == 1)[0]
    if not _free_ridges_on_hull(store, ridges[free], opposite[free]):
        return False
    # 2. emptiness of every circumparaboloid
    vp, hp, cond = cell_apexes(store.v, store.h, cells)
    well = np.isfinite(cond) & (cond < 1e7) & np.isfinite(hp)
    hmin = float(store.h.min())
    emb = np.column_stack([store.v, np.sqrt(np.maximum(store.h - hmin, 0.0))])
    tree = cKDTree(emb)
    pairs_c, pairs_q = [], []
    wi = np.nonzero(well)[0]
    if len(wi):
        slack = 1e-7 * (1.0 + np.abs(hp[wi]) + np.einsum("ij,ij->i", vp[wi], vp[wi]) + abs(hmin))
        r2 = hp[wi] - hmin + slack
        centers = np.column_stack([vp[wi], np.zeros(len(wi))])
        hits = tree.query_ball_point(centers, np.sqrt(np.maximum(r2, 0.0)))
        for k, lst in zip(wi, hits):
            for q in lst:
                pairs_c.append(k)
                pairs_q.append(q)
    for k in np.nonzero(~well)[0]:
        pairs_c.extend([k] * n)
        pairs_q.extend(range(n))
    if pairs_c:
        pc = np.array(pairs_c, dtype=np.intp)
        pq = np.array(pairs_q, dtype=np.intp)
        member = (cells[pc] == pq[:, None]).any(axis=1)
        pc, pq = pc[~member], pq[~member]
        if len(pc) and inside_sos(store, cells[pc], pq).any():
            return False
    return True


def _hull_candidates(store: PointStore) -> np.ndarray:
    """Points on or near the spatial convex hull (all points when qhull cannot help)."""
    v = store.v
    n, m = v.shape
    if m == 1 or n <= 4 * (m + 1):
        return np.arange(n)
    c = v - v.mean(axis=0)
    scale = float(np.abs(c).max()) or 1.0
    try:
        hull = ConvexHull(c / scale)
    except (QhullError, ValueError):
        return np.arange(n)
    dist = (c / scale) @ hull.equations[:, :m].T + hull.equations[:, m]
    return np.nonzero(dist.max(axis=1) > -1e-6)[0]


def _free_ridges_on_hull(store: PointStore, ridges: np.ndarray, opposite: np.ndarray) -> bool:
    """Every free ridge must have all sample points weakly on its cell's side."""
    if len(ridges) == 0:
        return False
    cand = _hull_candidates(store)
    for r, o in zip(ridges, opposite):
        q = cand[~np.isin(cand, r)]
        side = store.orient_spatial_sos(np.append(r, o)[None, :])[0]
        idx = np.column_stack([np.repeat(r[None, :], len(q), axis=0), q])
        if len(q) and np.any(store.orient_spatial_sos(idx) != side):
            return False
    return True


def regular_triangulation(sample: PointSample, method: str = "auto") -> Tessellation:
    """Regular (weighted Delaunay) triangulation of a sample.

    ``method`` is ``"auto"`` (lifted hull with exact certification and
    incremental fallback) or ``"incremental"``.
    """
    store = PointStore(sample.v, sample.h)
    _check_full_dimensional(store)
    n, d = len(store), store.d
    used = method
    if method == "auto":
        cells = _qhull_candidates(store) if n > d else None
        if cells is None or not verify_cells(store, cells):
            cells = incremental_triangulation(store)
            used = "incremental-fallback"
        else:
            used = "lifted-hull"
    elif method == "incremental":
        cells = incremental_triangulation(store)
    else:
        raise ValueError(f"unknown method {method!r}")
    return Tessellation(sample.v, sample.h, cells, meta={"method": used})


# ---------------------------------------------------------------------------
# exact incremental insertion

INF = -1


class _Triangulation:
    """Cells of the regular triangulation plus infinite cells over the hull boundary.

    Finite cells are positively oriented.  An infinite cell is oriented so
    that substituting a point beyond its hull ridge for the infinite vertex
    gives a positive orientation.
    """

    def __init__(self, store: PointStore, rng: np.random.Generator):
        self.store = store
        self.rng = rng
        self.cells: dict[int, list[int]] = {}
        self.nbrs: dict[int, list[int]] = {}
        self.next_id = 0
        self.last = None

    def _new(self, verts):
        cid = self.next_id
        self.next_id += 1
        self.cells[cid] = list(verts)
        self.nbrs[cid] = [None] * len(verts)
        return cid

    def orient(self, verts) -> int:
        return int(self.store.orient_spatial_sos(np.array([verts], dtype=np.intp))[0])

    def init(self, first):
        first = list(first)
        if self.orient(first) < 0:
            first[0], first[1] = first[1], first[0]
        c0 = self._new(first)
        created = [c0]
        for i in range(len(first)):
            verts = list(first)
            verts[i] = INF
            # substituting vertex i back gives a positive orientation, so the
            # far side needs the opposite orientation: swap two entries
            j = 0 if i != 0 else 1
            verts[i], verts[j] = verts[j], verts[i]
            created.append(self._new(verts))
        self._glue(created)
        self.last = c0

    def _glue(self, cids, external=None):
        faces = {} if external is None else external
        for cid in cids:
            verts = self.cells[cid]
            for k in range(len(verts)):
                key = frozenset(verts[:k] + verts[k + 1:])
                other = faces.pop(key, None)
                if other is None:
                    faces[key] = (cid, k)
                else:
                    oc, ok = other
                    self.nbrs[cid][k] = oc
                    self.nbrs[oc][ok] = cid
        return faces

    def conflicts(self, cid, q) -> bool:
        verts = self.cells[cid]
        if INF in verts:
            i = verts.index(INF)
            trial = list(verts)
            trial[i] = q
            return self.orient(trial) > 0
        return bool(inside_sos(self.store, [verts], [q])[0])

    def locate(self, q):
        cid = self.last if self.last in self.cells else next(iter(self.cells))
        if INF in self.cells[cid]:
            cid = self.nbrs[cid][self.cells[cid].index(INF)]
        limit = 4 * len(self.cells) + 16
        for _ in range(limit):
            verts = self.cells[cid]
            if INF in verts:
                return cid
            order = self.rng.permutation(len(verts))
            moved = False
            for i in order:
                trial = list(verts)
                trial[i] = q
                if self.orient(trial) < 0:
                    cid = self.nbrs[cid][i]
                    moved = True
                    break
            if not moved:
                return cid
        return None

    def insert(self, q) -> bool:
        start = self.locate(q)
        if start is None or not self.conflicts(start, q):
            start = next((c for c in self.cells if self.conflicts(c, q)), None) \
                if start is None else None
            if start is None:
                return False
        conflict = {start}
        stack = [start]
        while stack:
            c = stack.pop()
            for nb in self.nbrs[c]:
                if nb not in conflict and self.conflicts(nb, q):
                    conflict.add(nb)
                    stack.append(nb)
        created = []
        for c in conflict:
            verts = self.cells[c]
            for i, nb in enumerate(self.nbrs[c]):
                if nb in conflict:
                    continue
                nv = list(verts)
                nv[i] = q
                cid = self._new(nv)
                self.nbrs[cid][i] = nb
                self.nbrs[nb][self.nbrs[nb].index(c)] = cid
                created.append(cid)
        faces = {}
        for cid in created:
            verts = self.cells[cid]
            i = verts.index(q)
            for k in range(len(verts)):
                if k == i:
                    continue
                key = frozenset(verts[:k] + verts[k + 1:])
                other = faces.pop(key, None)
                if other is None:
                    faces[key] = (cid, k)
                else:
                    oc, ok = other
                    self.nbrs[cid][k] = oc
                    self.nbrs[oc][ok] = cid
        if faces:
            raise RuntimeError("cavity boundary did not close up")
        for c in conflict:
            del self.cells[c]
            del self.nbrs[c]
        self.last = next((c for c in created if INF not in self.cells[c]), created[0])
        return True

    def finite_cells(self) -> np.ndarray:
        out = [sorted(v) for v in self.cells.values() if INF not in v]
        return np.array(out, dtype=np.intp).reshape(-1, self.store.d)


def incremental_triangulation(store: PointStore, seed: int = 0) -> np.ndarray:
    """Exact regular triangulation by insertion in sample order."""
    n, d = len(store), store.d
    if n < d:
        raise DegeneracyError(f"need at least {d} points")
    tri = _Triangulation(store, np.random.default_rng(seed))
    tri.init(range(d))
    for q in range(d, n):
        tri.insert(q)
    return tri.finite_cells()


# ---------------------------------------------------------------------------
# envelope extremes

class EnvelopeExtremes(NamedTuple):
    sup: float
    inf: float
    n_eval: int
    grid_step: float
    argsup: np.ndarray
    arginf: np.ndarray


def _ball_grid(A: float, step: float, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Cube-grid points in B_A and points on its boundary sphere."""
    k = int(math.floor(A / step))
    axes = [np.arange(-k, k + 1) * step] * m
    g = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m)
    g = g[np.einsum("ij,ij->i", g, g) <= A * A]
    if m == 1:
        sph = np.array([[-A], [A]])
    elif m == 2:
        N = max(8, int(math.ceil(2 * math.pi * A / step)))
        t = 2 * math.pi * np.arange(N) / N
        sph = A * np.column_stack([np.cos(t), np.sin(t)])
    else:
        kk = int(math.ceil(A / step)) + 1
        axes = [np.arange(-kk, kk + 1) * step] * m
        s = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m)
        r = np.linalg.norm(s, axis=1)
        s = s[(r > A - step) & (r < A + step)]
        sph = s / np.linalg.norm(s, axis=1, keepdims=True) * A
    return g, sph


def _refine_circle(sample, A: float, env: np.ndarray, best: float):
    """Polish local maxima of the envelope along the circle of radius A."""
    N = len(env)
    dt = 2 * math.pi / N
    vmax = float(np.linalg.norm(sample.v, axis=1).max())
    slack = 2 * A * vmax * dt
    loc = np.nonzero((env >= np.roll(env, 1)) & (env >= np.roll(env, -1))
                     & (env + slack >= best))[0]
    out_val, out_at = best, None

    def neg(theta):
        return -float(growth_envelope(sample, A * np.array([math.cos(theta), math.sin(theta)])))

    for i in loc:
        th = 2 * math.pi * i / N
        res = minimize_scalar(neg, bounds=(th - dt, th + dt), method="bounded",
                              options={"xatol": 1e-12})
        if -res.fun > out_val:
            out_val = -res.fun
            out_at = A * np.array([math.cos(res.x), math.sin(res.x)])
    return out_val, out_at, len(loc)


def envelope_extremes(sample: PointSample, A: float, grid_step: float,
                      tessellation: Optional[Tessellation] = None) -> EnvelopeExtremes:
    """Estimates of the sup and inf of the growth-process boundary over B_A.

    sup: max of the envelope over a grid of B_A, its boundary sphere and the
    apexes of tessellation cells lying in B_A (the Laguerre vertices).  In
    the plane, local maxima along the boundary circle are then polished by a
    bounded scalar search.
    inf: min over the same grid and, for each point, the nearest location of
    B_A to its spatial coordinate; the latter makes the inf exact.
    """
    if not (A > 0 and grid_step > 0):
        raise ValueError("A and grid_step must be positive")
    v, h = sample.v, sample.h
    if len(h) == 0:
        raise EmptySampleError("envelope of an empty sample")
    m = v.shape[1]
    grid, sphere = _ball_grid(A, grid_step, m)
    sup_pts = [grid, sphere]
    if tessellation is None and len(h) >= m + 1:
        try:
            tessellation = regular_triangulation(sample)
        except DegeneracyError:
            tessellation = None
    if tessellation is not None and len(tessellation.cells):
        vp, hp, _ = cell_apexes(tessellation.v, tessellation.h, tessellation.cells)
        ok = np.all(np.isfinite(vp), axis=1)
        vp = vp[ok]
        sup_pts.append(vp[np.einsum("ij,ij->i", vp, vp) <= A * A])
    sup_pts = np.concatenate(sup_pts)
    r = np.linalg.norm(v, axis=1)
    proj = np.where((r > A)[:, None], v * (A / np.where(r > 0, r, 1.0))[:, None], v)
    env_sup = growth_envelope(sample, sup_pts)
    env_inf = growth_envelope(sample, proj)
    i_s = int(np.argmax(env_sup))
    sup, argsup = float(env_sup[i_s]), sup_pts[i_s]
    n_eval = len(sup_pts) + len(proj)
    if m == 2:
        ring = env_sup[len(grid): len(grid) + len(sphere)]
        val, at, n_ref = _refine_circle(sample, A, ring, sup)
        if at is not None:
            sup, argsup = val, at
        n_eval += n_ref
    all_inf = np.concatenate([env_sup[: len(grid)], env_inf])
    i_i = int(np.argmin(all_inf))
    inf_loc = np.concatenate([grid, proj])[i_i]
    return EnvelopeExtremes(sup, float(all_inf[i_i]), n_eval, grid_step, argsup, inf_loc)
