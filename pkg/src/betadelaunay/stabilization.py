"""Certified stabilisation of tessellations built from truncated samples.

A sample only contains the points of a bounded window.  A cell computed from
it is a cell of the full process exactly when its open circumparaboloid also
avoids the unsampled part of the process, which is Poisson and independent
of the sample.  The expected number of unsampled points in that paraboloid
therefore bounds the probability that the cell is wrong; summing it over the
cells that meet B_R bounds the probability that the tessellation inside B_R
differs from the true one, provided B_R is covered by the computed cells.

The masses below are closed forms (regularized incomplete beta and gamma
functions) of the intensity over the paraboloid part that lies beyond the
spatial window or above its upper height.  Both pieces are over-estimated:
the spatial piece uses the annulus around the apex outside the largest ball
around the apex that fits in the window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from scipy.special import betainc, betaln, gammainc, gammaincc, gammaln

from .geometry import cell_apexes, regular_triangulation
from .point_process import (
    Kind,
    ModelParams,
    PointSample,
    SamplingWindow,
    ball_volume,
    expected_count,
    choose_truncation,
    extend_sample,
    intensity_constant,
    sample_process,
)
from .rng import Seed, derive_seed
from .tessellation import StabilizationError, Tessellation, cell_signature, restrict_to_ball
from .tessellation import _distance_to_simplices


@dataclass
class Certificate:
    radius: float
    failure_mass: float
    hull_radius: float
    masses: np.ndarray = field(repr=False)
    distances: np.ndarray = field(repr=False)


def _inner_margin(window: SamplingWindow, vp: np.ndarray) -> np.ndarray:
    """Distance from each apex to the complement of the spatial window (0 if outside)."""
    if window.is_ball:
        if window.inner_radius:
            raise ValueError("annular windows cannot be certified")
        rho = window.radius - np.linalg.norm(vp, axis=1)
    else:
        lo, hi = np.asarray(window.box_lo), np.asarray(window.box_hi)
        rho = np.minimum((hi - vp).min(axis=1), (vp - lo).min(axis=1))
    return np.clip(rho, 0.0, None)


def _beta_masses(b: float, s: float, m: int, hp, rho, hi):
    spatial = np.zeros_like(hp)
    layer = np.zeros_like(hp)
    # spatial: int_0^{h'-rho^2} h^b ((h'-h)^s - rho^m) dh
    a = hp - rho ** 2
    pos = (a > 0) & (hp > 0)
    if pos.any():
        H, A, r = hp[pos], a[pos], rho[pos]
        full = np.exp((b + s + 1) * np.log(H) + betaln(b + 1, s + 1))
        spatial[pos] = full * betainc(b + 1, s + 1, A / H) - r ** m * A ** (b + 1) / (b + 1)
    # above the upper height: int_hi^{h'} h^b (h'-h)^s dh
    up = hp > hi
    if up.any():
        H = hp[up]
        full = np.exp((b + s + 1) * np.log(H) + betaln(b + 1, s + 1))
        layer[up] = full * (1 - betainc(b + 1, s + 1, np.clip(hi / H, 0, 1)))
    return spatial, layer


def _beta_prime_masses(b: float, s: float, m: int, hp, rho, hi):
    spatial = np.full_like(hp, np.inf)
    layer = np.full_like(hp, np.inf)
    neg = hp < 0
    q = -hp[neg]
    r = rho[neg]
    p = q + r ** 2
    a1, a2 = b - s - 1, s + 1
    scale = np.exp((s + 1 - b) * np.log(q) + betaln(a1, a2))
    # spatial: int_p^inf x^-b ((x-q)^s - rho^m) dx with x = -h
    spatial[neg] = scale * betainc(a1, a2, q / p) - r ** m * p ** (1 - b) / (b - 1)
    # above the upper height -eps: int_q^eps x^-b (x-q)^s dx
    eps = -hi
    layer[neg] = np.where(q < eps, scale * (1 - betainc(a1, a2, np.clip(q / eps, 0, 1))), 0.0)
    return spatial, layer


def _gaussian_masses(s: float, m: int, hp, rho, hi):
    # spatial: e^{h'/2} int_{rho^2}^inf e^{-u/2} (u^s - rho^m) du
    g = math.exp(gammaln(s + 1)) * 2 ** (s + 1)
    spatial = g * gammaincc(s + 1, rho ** 2 / 2) - rho ** m * 2 * np.exp(-rho ** 2 / 2)
    layer = np.where(hp > hi, g * gammainc(s + 1, np.clip(hp - hi, 0, None) / 2), 0.0)
    with np.errstate(over="ignore", invalid="ignore"):
        scale = np.exp(hp / 2)
        sp, la = scale * spatial, scale * layer
    # an overflowing apex height means an unbounded mass, never a zero one
    return np.where(np.isnan(sp), np.inf, sp), np.where(np.isnan(la), np.inf, la)


def cell_failure_masses(model: ModelParams, window: SamplingWindow, t: Tessellation,
                        cells: Optional[np.ndarray] = None, parts: bool = False):
    """Expected number of unsampled process points inside each cell's open paraboloid.

    With ``parts`` the spatial part (beyond the window's spatial region) and
    the layer part (above its upper height) are returned separately.
    """
    cells = t.cells if cells is None else cells
    m = model.dim
    vp, hp, cond = cell_apexes(t.v, t.h, cells)
    bad = ~np.isfinite(cond) | ~np.isfinite(hp)
    vp, hp = np.nan_to_num(vp), np.nan_to_num(hp)
    # guard the float apexes against their own solve error
    err = 1e-13 * np.where(bad, 1.0, cond) * (1 + np.linalg.norm(vp, axis=1) + np.abs(hp))
    hp = hp + err
    rho = np.clip(_inner_margin(window, vp) - err, 0.0, None)
    s = m / 2
    const = intensity_constant(model) * ball_volume(m)
    with np.errstate(invalid="ignore", divide="ignore"):
        if model.kind is Kind.BETA:
            spatial, layer = _beta_masses(model.beta, s, m, hp, rho, window.height_hi)
        elif model.kind is Kind.BETA_PRIME:
            spatial, layer = _beta_prime_masses(model.beta, s, m, hp, rho, window.height_hi)
        else:
            spatial, layer = _gaussian_masses(s, m, hp, rho, window.height_hi)
    with np.errstate(over="ignore"):
        spatial = const * np.clip(np.nan_to_num(spatial, nan=np.inf), 0.0, None)
        layer = const * np.clip(np.nan_to_num(layer, nan=np.inf), 0.0, None)
    spatial[bad] = np.inf
    layer[bad] = np.inf
    return (spatial, layer) if parts else spatial + layer


def hull_radius(v: np.ndarray) -> float:
    """Radius of the largest origin-centred ball inside the convex hull of ``v``."""
    try:
        hull = ConvexHull(v)
    except (QhullError, ValueError):
        return 0.0
    return float(max(0.0, -hull.equations[:, -1].max()))


def certify(model: ModelParams, window: SamplingWindow, t: Tessellation,
            tol: float) -> Certificate:
    """Largest radius R such that the cells meeting B_R are final with probability
    at least ``1 - tol``, given the sample, and cover B_R."""
    cov = hull_radius(t.v[t.vertex_ids]) if len(t.cells) else 0.0
    if len(t.cells) == 0:
        return Certificate(0.0, 0.0, cov, np.zeros(0), np.zeros(0))
    dist = _distance_to_simplices(t.v[t.cells])
    order = np.argsort(dist, kind="stable")
    dist = dist[order]
    # cells well beyond the hull radius cannot matter
    keep = dist <= cov
    cells = t.cells[order][keep]
    dist = dist[keep]
    mass = cell_failure_masses(model, window, t, cells)
    with np.errstate(over="ignore", invalid="ignore"):
        acc = np.cumsum(mass)
    over = np.nonzero(acc > tol)[0]
    limit = dist[over[0]] if len(over) else math.inf
    pad = 1e-9 * (1 + cov)
    radius = max(0.0, min(limit, cov) - pad)
    total = float(acc[np.searchsorted(dist, radius, side="right") - 1]) if radius > 0 else 0.0
    return Certificate(radius, total, cov, mass, dist)


def _relevant(sample: PointSample, t: Optional[Tessellation]) -> np.ndarray:
    """Points that can still change the tessellation once ``t`` is known.

    A point strictly above every cell apex lies above the lower hull of the
    lifted points and stays redundant under further insertions; it is kept
    only when it falls outside the spatial hull of the current vertices.
    """
    if t is None or len(t.cells) == 0:
        return np.ones(len(sample), dtype=bool)
    _, hp, cond = cell_apexes(t.v, t.h, t.cells)
    if not np.all(np.isfinite(cond)):
        return np.ones(len(sample), dtype=bool)
    top = float(hp.max()) + 1e-9 * (1 + abs(float(hp.max())))
    keep = sample.h <= top
    keep[: len(t.h)] = True
    extra = np.nonzero(~keep)[0]
    if len(extra):
        try:
            hull = ConvexHull(t.v[t.vertex_ids])
            out = (sample.v[extra] @ hull.equations[:, :-1].T + hull.equations[:, -1]).max(axis=1)
            keep[extra[out > -1e-9]] = True
        except (QhullError, ValueError):
            keep[extra] = True
    return keep


def triangulate(sample: PointSample, mask: Optional[np.ndarray] = None) -> Tessellation:
    """Regular triangulation of the masked points, indexed into the full sample."""
    if mask is None or mask.all():
        return regular_triangulation(sample)
    idx = np.nonzero(mask)[0]
    sub = regular_triangulation(sample.subset(mask))
    return Tessellation(sample.v, sample.h, idx[sub.cells], meta=sub.meta)


def _shortfall(model: ModelParams, window: SamplingWindow, t: Tessellation, R: float,
               tol: float, cert: Certificate) -> tuple[bool, bool]:
    """Whether the spatial extent and/or the upper height limit the certificate."""
    from .tessellation import cells_meeting_ball
    if cert.hull_radius <= R:
        return True, False
    cells = t.cells[cells_meeting_ball(t, R)]
    spatial, layer = cell_failure_masses(model, window, t, cells, parts=True)
    wide, high = spatial.sum() > tol / 2, layer.sum() > tol / 2
    return wide or not high, high


def _grow(model: ModelParams, window: SamplingWindow, R: float, wide: bool, high: bool):
    radius = window.radius + (max(1.0, 0.2 * R) if wide else 0.0)
    hi = window.height_hi
    if high:
        hi = 1.25 * hi + 1.0 if model.kind is Kind.BETA else hi + 2.0
    return radius, hi


def _check_budget(model, window, max_points):
    mean = expected_count(model, window)
    if mean > max_points:
        raise StabilizationError(f"window would hold {mean:.3g} points on average, "
                                 f"above the cap of {max_points}")


def stabilized_tessellation(model: ModelParams, R: float, seed: Seed, delta: float = 1e-3,
                            split: float = 0.5, max_rounds: int = 8,
                            epsilon_halvings: int = 2, max_halvings: int = 16,
                            max_points: int = 2_000_000,
                            ) -> tuple[PointSample, Tessellation]:
    """Sample and triangulate so that the tessellation is certified inside B_R.

    The returned tessellation carries ``stabilized_radius >= R``: with
    probability at least ``1 - delta`` given the sample, its cells meeting
    B_R are exactly those of the untruncated process.

    The first window comes from :func:`choose_truncation`.  For beta and
    gaussian models, while the certificate falls short of R the sample is
    extended (wider ball or higher cutoff, whichever is lacking) with
    derived seeds.  For beta_prime the cutoff -eps is refined inside a core
    ball (see :func:`refine_epsilon`) and, if the certificate still falls
    short, the whole construction restarts with a doubled margin.
    """
    tr = choose_truncation(model, R, delta, split=split)
    if model.kind is Kind.BETA_PRIME:
        return _stabilized_beta_prime(model, R, seed, delta, tr, max_rounds,
                                      epsilon_halvings, max_halvings, max_points)
    _check_budget(model, tr.window, max_points)
    sample = sample_process(model, tr.window, derive_seed(seed, 0))
    t = triangulate(sample)
    cert = certify(model, sample.window, t, delta)
    rounds = 0
    while cert.radius < R:
        rounds += 1
        if rounds > max_rounds:
            raise StabilizationError(
                f"certified radius {cert.radius:.4g} < {R} after {max_rounds} extensions")
        wide, high = _shortfall(model, sample.window, t, R, delta, cert)
        radius, hi = _grow(model, sample.window, R, wide, high)
        _check_budget(model, SamplingWindow.ball(model.dim, radius, sample.window.height_lo, hi),
                      max_points)
        sample = extend_sample(sample, radius, hi, derive_seed(seed, 1, rounds))
        t = triangulate(sample, _relevant(sample, t))
        cert = certify(model, sample.window, t, delta)
    meta = {"extensions": rounds, "failure_mass": cert.failure_mass,
            "window": sample.window.to_dict(), "delta": delta}
    return sample, Tessellation(t.v, t.h, t.cells, float(cert.radius), {**t.meta, **meta})


def envelope_top(t: Tessellation, radius: float) -> float:
    """Upper bound over B_radius on the paraboloid hull of the points of ``t``.

    The hull is the lower envelope of the cell paraboloids; a point of the
    sample lying above it can never become a vertex again.  Valid inside
    the spatial hull of ``t``."""
    from .tessellation import cells_meeting_ball
    cells = t.cells[cells_meeting_ball(t, radius)]
    vp, hp, cond = cell_apexes(t.v, t.h, cells)
    if len(cells) == 0 or not np.all(np.isfinite(cond)):
        return math.inf
    out = np.clip(np.linalg.norm(vp, axis=1) - radius, 0.0, None)
    top = float(np.max(hp - out ** 2))
    return top + 1e-9 * (1 + abs(top))


def refine_epsilon(sample: PointSample, t: Tessellation, R: float, core: float, seed: Seed,
                   halvings: int = 2, max_halvings: int = 16, max_points: int = 2_000_000):
    """Halve the upper cutoff -eps of a beta_prime sample inside B_core.

    Each halving adds the layer (-eps, -eps/2] over B_core, thinned to heights
    below :func:`envelope_top`; thinned points lie above the lifted lower
    hull and would stay redundant forever, so the thinning is exact.  When the
    bound sits below the layer, the halving adds nothing and provably leaves
    the tessellation unchanged.  Stops once the cells meeting B_R were
    unchanged for ``halvings`` successive halvings.
    """
    model = sample.model
    if core > hull_radius(t.v[t.vertex_ids]):
        raise StabilizationError("refinement core exceeds the spatial hull of the sample")
    eps = -sample.window.height_hi
    sig = cell_signature(restrict_to_ball(t, R))
    v, h = [sample.v], [sample.h]
    n = len(sample)
    same = k = 0
    while same < halvings:
        k += 1
        if k > max_halvings:
            raise StabilizationError(f"epsilon refinement did not settle in {max_halvings} halvings")
        top = envelope_top(t, core)
        if top > -eps:
            layer = SamplingWindow.ball(model.dim, core, -eps, min(-eps / 2, top))
            add = sample_process(model, layer, derive_seed(seed, k))
            if len(add):
                v.append(add.v)
                h.append(add.h)
                n += len(add)
                if n > max_points:
                    raise StabilizationError(f"epsilon refinement exceeded {max_points} points")
                cur = PointSample(model, sample.window, np.concatenate(v), np.concatenate(h))
                t = triangulate(cur, _relevant(cur, t))
        eps /= 2
        new = cell_signature(restrict_to_ball(t, R))
        same = same + 1 if new == sig else 0
        sig = new
    w = sample.window
    window = SamplingWindow.ball(w.dim, w.radius, w.height_lo, -eps)
    meta = {**sample.meta, "epsilon": eps, "epsilon_halvings": k, "core_radius": core}
    out = PointSample(model, window, np.concatenate(v), np.concatenate(h), sample.seed, meta)
    return out, Tessellation(out.v, out.h, t.cells, meta=t.meta)


def _stabilized_beta_prime(model, R, seed, delta, tr, max_rounds, halvings, max_halvings,
                           max_points):
    margin = tr.margin
    for rnd in range(max_rounds + 1):
        base = derive_seed(seed, 0) if rnd == 0 else derive_seed(seed, 3, rnd)
        window = tr.window if rnd == 0 else SamplingWindow.ball(
            model.dim, R + margin, tr.window.height_lo, tr.window.height_hi)
        if expected_count(model, window) > max_points:
            raise StabilizationError(
                f"beta_prime window of radius {R + margin:.4g} would need more than "
                f"{max_points} points")
        sample = sample_process(model, window, base)
        t = triangulate(sample)
        core = float(R + margin / 2)
        try:
            sample, t = refine_epsilon(sample, t, R, core, derive_seed(base, 2),
                                       halvings, max_halvings, max_points)
        except StabilizationError:
            if rnd == max_rounds:
                raise
            margin *= 2
            continue
        eps = sample.meta["epsilon"]
        # layers above the original cutoff only cover the core ball
        cert_window = SamplingWindow.ball(model.dim, core, -math.inf, -eps)
        cert = certify(model, cert_window, t, delta)
        if cert.radius >= R:
            meta = {"restarts": rnd, "failure_mass": cert.failure_mass, "epsilon": eps,
                    "epsilon_halvings": sample.meta["epsilon_halvings"], "core_radius": core,
                    "window": sample.window.to_dict(), "delta": delta}
            return sample, Tessellation(t.v, t.h, t.cells, float(cert.radius), {**t.meta, **meta})
        margin *= 2
    raise StabilizationError(f"beta_prime certificate fell short of {R} after {max_rounds} restarts")
