"""Poisson point processes behind the beta, beta-prime and Gaussian models.

All three processes live on R^{d-1} x R with intensity measure
``const * g(h) dv dh``:

* ``beta``        g(h) = h^beta on h >= 0, beta > -1
* ``beta_prime``  g(h) = (-h)^(-beta) on h < 0, beta > (d + 1) / 2
* ``gaussian``    g(h) = exp(h / 2) on all of R

The module holds the closed-form masses, the inverse-CDF samplers, the
tail bounds for the boundary of the paraboloid growth process and the
truncation heuristics built from them.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.special import comb, gammaln

from .rng import Seed, derive_seed, make_rng, seed_key


class ParameterDomainError(ValueError):
    """A model or window parameter lies outside its admissible range."""


class DivergenceError(ValueError):
    """The intensity measure of the requested region is infinite."""


MAX_SAMPLE_POINTS = 20_000_000


class SampleSizeError(RuntimeError):
    """The requested window would hold too many points to sample in memory."""


class InfeasibleTruncationError(RuntimeError):
    """No truncation inside the configured caps meets the failure budget."""

    def __init__(self, message: str, best_delta: float):
        super().__init__(message)
        self.best_delta = best_delta


class Kind(str, enum.Enum):
    BETA = "beta"
    BETA_PRIME = "beta_prime"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class ModelParams:
    """Which of the three laws, its shape parameter, and the dimension ``d``.

    The tessellation lives in R^{d-1}; the points in R^{d-1} x R.
    """

    kind: Kind
    d: int
    beta: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if not isinstance(self.d, (int, np.integer)) or self.d < 2:
            raise ParameterDomainError(f"d must be an integer >= 2, got {self.d!r}")
        object.__setattr__(self, "d", int(self.d))
        if self.kind is Kind.GAUSSIAN:
            if self.beta is not None:
                raise ParameterDomainError("the Gaussian model takes no beta")
            return
        if self.beta is None or not math.isfinite(self.beta):
            raise ParameterDomainError(f"{self.kind.value} model requires a finite beta")
        object.__setattr__(self, "beta", float(self.beta))
        if self.kind is Kind.BETA and not self.beta > -1:
            raise ParameterDomainError(
                    f"beta model requires β > −1 (beta > -1), got beta = {self.beta}")
        if self.kind is Kind.BETA_PRIME and not self.beta > (self.d + 1) / 2:
            raise ParameterDomainError(
                f"beta_prime model requires β > (d+1)/2 = {(self.d + 1) / 2}, "
                f"got beta = {self.beta}")

    @property
    def dim(self) -> int:
        """Dimension of the tessellated space, d - 1."""
        return self.d - 1

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value, "d": self.d}
        if self.beta is not None:
            out["beta"] = self.beta
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        return cls(Kind(data["kind"]), int(data["d"]), data.get("beta"))


@dataclass(frozen=True)
class SamplingWindow:
    """Spatial region times a height interval.

    The spatial region is either the ball (annulus when ``inner_radius`` > 0)
    of radius ``radius`` about the origin, or the axis box ``[box_lo, box_hi]``.
    """

    dim: int
    height_lo: float = -math.inf
    height_hi: float = math.inf
    radius: Optional[float] = None
    inner_radius: float = 0.0
    box_lo: Optional[tuple] = None
    box_hi: Optional[tuple] = None

    def __post_init__(self):
        if self.dim < 1:
            raise ParameterDomainError("spatial dimension must be >= 1")
        if (self.radius is None) == (self.box_lo is None):
            raise ParameterDomainError("give exactly one of radius or box bounds")
        if math.isnan(self.height_lo) or math.isnan(self.height_hi):
            raise ParameterDomainError("height bounds must not be NaN")
        if self.height_lo > self.height_hi:
            raise ParameterDomainError(
                f"height_lo = {self.height_lo} exceeds height_hi = {self.height_hi}")
        if self.radius is not None:
            if not (self.radius > 0 and 0 <= self.inner_radius < self.radius):
                raise ParameterDomainError("need 0 <= inner_radius < radius")
        else:
            lo = tuple(float(x) for x in self.box_lo)
            hi = tuple(float(x) for x in self.box_hi)
            if len(lo) != self.dim or len(hi) != self.dim:
                raise ParameterDomainError("box bounds must have length dim")
            if any(b <= a for a, b in zip(lo, hi)):
                raise ParameterDomainError("box must have positive volume")
            object.__setattr__(self, "box_lo", lo)
            object.__setattr__(self, "box_hi", hi)

    @classmethod
    def ball(cls, dim, radius, height_lo=-math.inf, height_hi=math.inf, inner_radius=0.0):
        return cls(dim, float(height_lo), float(height_hi), radius=float(radius),
                   inner_radius=float(inner_radius))

    @classmethod
    def box(cls, lo, hi, height_lo=-math.inf, height_hi=math.inf):
        lo = tuple(float(x) for x in lo)
        return cls(len(lo), float(height_lo), float(height_hi), box_lo=lo, box_hi=tuple(hi))

    @property
    def is_ball(self) -> bool:
        return self.radius is not None

    def spatial_volume(self) -> float:
        if self.is_ball:
            return ball_volume(self.dim) * (self.radius ** self.dim - self.inner_radius ** self.dim)
        return float(np.prod(np.subtract(self.box_hi, self.box_lo)))

    def with_heights(self, height_lo, height_hi) -> "SamplingWindow":
        return SamplingWindow(self.dim, float(height_lo), float(height_hi), self.radius,
                              self.inner_radius, self.box_lo, self.box_hi)

    def contains(self, v, h) -> np.ndarray:
        v = np.atleast_2d(np.asarray(v, dtype=float))
        h = np.atleast_1d(np.asarray(h, dtype=float))
        inside = (h >= self.height_lo) & (h <= self.height_hi)
        if self.is_ball:
            r = np.linalg.norm(v, axis=1)
            return inside & (r <= self.radius) & (r >= self.inner_radius)
        return inside & np.all((v >= self.box_lo) & (v <= self.box_hi), axis=1)

    def to_dict(self) -> dict:
        out = {"height_lo": _enc(self.height_lo), "height_hi": _enc(self.height_hi)}
        if self.is_ball:
            out["radius"] = self.radius
            if self.inner_radius:
                out["inner_radius"] = self.inner_radius
        else:
            out["box_lo"] = list(self.box_lo)
            out["box_hi"] = list(self.box_hi)
        return out

    @classmethod
    def from_dict(cls, dim: int, data: dict) -> "SamplingWindow":
        lo, hi = _dec(data.get("height_lo", "-inf")), _dec(data.get("height_hi", "inf"))
        if "radius" in data:
            return cls.ball(dim, data["radius"], lo, hi, data.get("inner_radius", 0.0))
        return cls.box(data["box_lo"], data["box_hi"], lo, hi)


def _enc(x: float):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def _dec(x) -> float:
    return float(x)


class SpacePoint(NamedTuple):
    v: tuple
    h: float


@dataclass
class PointSample:
    """A finite realisation: spatial coordinates ``v`` (n, d-1) and heights ``h`` (n,).

    Row order is generation order.
    """

    model: ModelParams
    window: SamplingWindow
    v: np.ndarray
    h: np.ndarray
    seed: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=float).reshape(-1, self.model.dim)
        self.h = np.asarray(self.h, dtype=float).reshape(-1)
        if len(self.v) != len(self.h):
            raise ValueError("v and h disagree in length")

    def __len__(self) -> int:
        return len(self.h)

    @property
    def points(self) -> list[SpacePoint]:
        return [SpacePoint(tuple(v), float(h)) for v, h in zip(self.v, self.h)]

    @classmethod
    def from_points(cls, model: ModelParams, points, window: Optional[SamplingWindow] = None,
                    seed=()) -> "PointSample":
        """Sample built from explicit ``(v, h)`` pairs, mostly for tests."""
        pts = list(points)
        v = np.array([p[0] for p in pts], dtype=float).reshape(-1, model.dim)
        h = np.array([p[1] for p in pts], dtype=float)
        if window is None:
            lo = v.min(axis=0) - 1 if len(v) else np.full(model.dim, -1.0)
            hi = v.max(axis=0) + 1 if len(v) else np.full(model.dim, 1.0)
            window = SamplingWindow.box(lo, hi)
        return cls(model, window, v, h, tuple(seed))

    def subset(self, mask) -> "PointSample":
        return PointSample(self.model, self.window, self.v[mask], self.h[mask], self.seed,
                           dict(self.meta))


# ---------------------------------------------------------------------------
# constants and masses

def ball_volume(m: int) -> float:
    """Volume of the unit ball in R^m."""
    return math.pi ** (m / 2) / math.gamma(1 + m / 2)


def intensity_constant(model: ModelParams) -> float:
    """Normalising constant in front of the height density."""
    d, b = model.d, model.beta
    if model.kind is Kind.BETA:
        return math.exp(gammaln(d / 2 + b + 1) - gammaln(b + 1)) / math.pi ** (d / 2)
    if model.kind is Kind.BETA_PRIME:
        return math.exp(gammaln(b) - gammaln(b - d / 2)) / math.pi ** (d / 2)
    return (2 * math.pi) ** (-d / 2)


def height_density(model: ModelParams, h):
    """Intensity density in the height variable, constant included (per unit spatial volume)."""
    h = np.asarray(h, dtype=float)
    c = intensity_constant(model)
    with np.errstate(divide="ignore", invalid="ignore"):
        if model.kind is Kind.BETA:
            return np.where(h >= 0, c * np.abs(h) ** model.beta, 0.0)
        if model.kind is Kind.BETA_PRIME:
            return np.where(h < 0, c * np.abs(h) ** (-model.beta), 0.0)
        return c * np.exp(h / 2)


def height_mass(model: ModelParams, lo: float, hi: float) -> float:
    """Integral of :func:`height_density` over ``[lo, hi]``."""
    if lo > hi:
        raise ParameterDomainError("lo must not exceed hi")
    if lo == hi:
        return 0.0
    c, b = intensity_constant(model), model.beta
    if model.kind is Kind.BETA:
        lo = max(lo, 0.0)
        if hi <= lo:
            return 0.0
        if math.isinf(hi):
            raise DivergenceError("beta intensity has infinite mass above any height")
        return c * (hi ** (b + 1) - lo ** (b + 1)) / (b + 1)
    if model.kind is Kind.BETA_PRIME:
        if hi >= 0:
            raise DivergenceError("beta_prime intensity has infinite mass near h = 0")
        a, s = -hi, -lo
        top = a ** (1 - b)
        bottom = 0.0 if math.isinf(s) else s ** (1 - b)
        return c * (top - bottom) / (b - 1)
    if math.isinf(hi):
        raise DivergenceError("Gaussian intensity has infinite mass above any height")
    return 2 * c * (math.exp(hi / 2) - (0.0 if math.isinf(lo) else math.exp(lo / 2)))


def check_window(model: ModelParams, window: SamplingWindow) -> None:
    if window.dim != model.dim:
        raise ParameterDomainError(f"window dimension {window.dim} != d - 1 = {model.dim}")
    if model.kind is Kind.BETA and window.height_lo < 0:
        raise ParameterDomainError("beta model needs height_lo >= 0")


def expected_count(model: ModelParams, window: SamplingWindow) -> float:
    """Poisson mean of the number of process points in ``window``."""
    check_window(model, window)
    if window.height_lo == window.height_hi:
        return 0.0
    return window.spatial_volume() * height_mass(model, window.height_lo, window.height_hi)


def k_region_mean(model: ModelParams, A: float, t: float) -> float:
    """Mean number of points in ``K(A, t) = {(v, h): h <= t, |v| <= A + sqrt(t - h)}``.

    Closed-form binomial/Gamma sums; the Gaussian case follows from the same
    expansion with ``int_0^inf u^a e^{-u/2} du = 2^{a+1} Gamma(a + 1)``.
    """
    if not A > 0:
        raise ParameterDomainError("A must be positive")
    d, b = model.d, model.beta
    m = d - 1
    if model.kind is Kind.BETA:
        if t <= 0:
            return 0.0
        pre = gammaln(d / 2 + b + 1) - 0.5 * math.log(math.pi) - gammaln((d + 1) / 2)
        total = 0.0
        for i in range(m + 1):
            e = (d + 1 - i) / 2
            total += comb(m, i) * A ** i * math.exp(
                pre + (e + b) * math.log(t) + gammaln(e) - gammaln(e + b + 1))
        return total
    if model.kind is Kind.BETA_PRIME:
        if not t < 0:
            raise ParameterDomainError("beta_prime K-region mean needs t < 0")
        at = -t
        total = 0.0
        for i in range(m + 1):
            e = (d + 1 - i) / 2
            total += comb(m, i) * A ** i * math.exp(
                (e - b) * math.log(at) + gammaln(e) - gammaln((d + 1) / 2)
                + gammaln(b - e) - gammaln(b - d / 2) - 0.5 * math.log(math.pi))
        return total
    c = intensity_constant(model) * ball_volume(m)
    total = 0.0
    for i in range(m + 1):
        a = (m - i) / 2
        total += comb(m, i) * A ** i * 2 ** (a + 1) * math.gamma(a + 1)
    return c * math.exp(t / 2) * total


# ---------------------------------------------------------------------------
# sampling

def sample_height(model: ModelParams, u, window: SamplingWindow):
    """Inverse CDF of the height marginal restricted to the window's height range.

    Increasing in ``u``; accepts scalars or arrays with entries in (0, 1].
    """
    u = np.asarray(u, dtype=float)
    lo, hi = window.height_lo, window.height_hi
    b = model.beta
    if model.kind is Kind.BETA:
        lo = max(lo, 0.0)
        if math.isinf(hi):
            raise DivergenceError("beta heights need a finite upper bound")
        p = b + 1
        return (lo ** p + u * (hi ** p - lo ** p)) ** (1 / p)
    if model.kind is Kind.BETA_PRIME:
        if hi >= 0:
            raise DivergenceError("beta_prime heights need height_hi < 0")
        q = 1 - b
        top = (-hi) ** q
        bottom = 0.0 if math.isinf(lo) else (-lo) ** q
        return -((bottom + u * (top - bottom)) ** (1 / q))
    if math.isinf(hi):
        raise DivergenceError("Gaussian heights need a finite upper bound")
    ratio = 0.0 if math.isinf(lo) else math.exp((lo - hi) / 2)
    return hi + 2 * np.log(u + (1 - u) * ratio)


def _uniform_spatial(rng: np.random.Generator, window: SamplingWindow, n: int) -> np.ndarray:
    m = window.dim
    if not window.is_ball:
        lo, hi = np.array(window.box_lo), np.array(window.box_hi)
        return lo + rng.random((n, m)) * (hi - lo)
    g = rng.standard_normal((n, m))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    r_in, r_out = window.inner_radius ** m, window.radius ** m
    rad = (r_in + rng.random(n) * (r_out - r_in)) ** (1 / m)
    return g / norms * rad[:, None]


def sample_process(model: ModelParams, window: SamplingWindow, seed: Seed,
                   max_points: float = MAX_SAMPLE_POINTS) -> PointSample:
    """Poisson sample of the model restricted to ``window``; deterministic in ``seed``.

    Raises :class:`SampleSizeError` when the expected count exceeds ``max_points``.
    """
    mean = expected_count(model, window)
    if mean > max_points:
        raise SampleSizeError(f"window holds {mean:.3g} points on average, "
                              f"above the cap of {max_points:.3g}")
    rng = make_rng(seed)
    n = int(rng.poisson(mean)) if mean > 0 else 0
    v = _uniform_spatial(rng, window, n)
    u = 1.0 - rng.random(n)
    h = sample_height(model, u, window) if n else np.zeros(0)
    return PointSample(model, window, v, np.asarray(h, dtype=float), seed_key(seed),
                       {"expected_count": mean})


def extend_sample(sample: PointSample, radius: float, height_hi: float, seed: Seed,
                  ) -> PointSample:
    """Superpose independent points so the sample covers a larger ball and height range.

    Only ball windows can be extended.  The new region is split into the
    annulus below the old upper height and the slab above it, each drawn
    from its own sub-stream of ``seed``.
    """
    w = sample.window
    if not w.is_ball or w.inner_radius:
        raise ParameterDomainError("only full-ball samples can be extended")
    if radius < w.radius or height_hi < w.height_hi:
        raise ParameterDomainError("extension must not shrink the window")
    parts_v, parts_h = [sample.v], [sample.h]
    if radius > w.radius:
        ring = SamplingWindow.ball(w.dim, radius, w.height_lo, w.height_hi, w.radius)
        ext = sample_process(sample.model, ring, derive_seed(seed, 0))
        parts_v.append(ext.v)
        parts_h.append(ext.h)
    if height_hi > w.height_hi:
        slab = SamplingWindow.ball(w.dim, radius, w.height_hi, height_hi)
        ext = sample_process(sample.model, slab, derive_seed(seed, 1))
        keep = ext.h > w.height_hi
        parts_v.append(ext.v[keep])
        parts_h.append(ext.h[keep])
    window = SamplingWindow.ball(w.dim, radius, w.height_lo, height_hi)
    meta = dict(sample.meta)
    meta["extensions"] = meta.get("extensions", 0) + 1
    return PointSample(sample.model, window, np.concatenate(parts_v), np.concatenate(parts_h),
                       sample.seed, meta)


def _k_tail(model: ModelParams, A: float, t: float, U: float) -> float:
    """Mean number of points of K(A, t) with t - h > U."""
    from scipy.integrate import quad

    m = model.dim
    kappa = ball_volume(m)

    def g(u):
        return float(height_density(model, t - u)) * kappa * (A + math.sqrt(u)) ** m

    if model.kind is Kind.BETA and t - U <= 0:
        return 0.0
    hi = t if model.kind is Kind.BETA else math.inf
    val, _ = quad(g, U, hi, limit=200)
    return val


@lru_cache(maxsize=256)
def _k_depth(model: ModelParams, A: float, t: float, tail: float) -> float:
    """Smallest power-of-two depth beyond which K(A, t) holds fewer than ``tail`` points."""
    if model.kind is Kind.BETA:
        return max(t, 0.0)
    U = 1.0
    while _k_tail(model, A, t, U) > tail:
        U *= 2
    return U


def sample_k_region(model: ModelParams, A: float, t: float, seed: Seed,
                    tail: float = 1e-10) -> PointSample:
    """Sample of the points in K(A, t) = {(v, h): h <= t, |v| <= A + sqrt(t - h)}.

    Exactly the points that can bring the growth-process boundary to or
    below height t somewhere in B_A.  Heights are drawn in layers of
    geometrically growing depth ``t - h``, each from a ball window that is
    then cut down to K; layers stop once the expected number of points
    deeper than the last one is below ``tail`` (never for the beta model,
    whose heights end at 0).
    """
    if not A > 0:
        raise ParameterDomainError("A must be positive")
    if model.kind is Kind.BETA_PRIME and not t < 0:
        raise DivergenceError("beta_prime K-region needs t < 0")
    m = model.dim
    depth = _k_depth(model, float(A), float(t), float(tail))
    vs, hs = [np.zeros((0, m))], [np.zeros(0)]
    lo_u, hi_u, j = 0.0, 1.0, 0
    while lo_u < depth:
        top, bottom = t - lo_u, t - min(hi_u, depth)
        win = SamplingWindow.ball(m, A + math.sqrt(t - bottom), bottom, top)
        part = sample_process(model, win, derive_seed(seed, j))
        keep = np.linalg.norm(part.v, axis=1) <= A + np.sqrt(t - part.h)
        vs.append(part.v[keep])
        hs.append(part.h[keep])
        lo_u, hi_u, j = hi_u, 2 * hi_u, j + 1
    window = SamplingWindow.ball(m, A + math.sqrt(depth), t - depth, t)
    return PointSample(model, window, np.concatenate(vs), np.concatenate(hs), seed_key(seed),
                       {"region": "K", "A": A, "t": t, "layers": j})


# ---------------------------------------------------------------------------
# tail bounds for the boundary of the growth process over B_A

def sup_tail_bound(model: ModelParams, A: float, T: float) -> float:
    """Upper bound on P(sup of the growth-process boundary over B_A exceeds T)."""
    d, b, m = model.d, model.beta, model.d - 1
    kappa, c = ball_volume(m), intensity_constant(model)
    if model.kind is Kind.BETA:
        if T <= 4 * A * A:
            return 1.0
        return math.exp(-c * kappa / (b + 1) * A ** m * (T - 4 * A * A) ** (b + 1))
    if model.kind is Kind.BETA_PRIME:
        if T >= 0:
            return 0.0
        return math.exp(-c * kappa / (b - 1) * A ** m * (4 * A * A - T) ** (1 - b))
    return math.exp(-2 * c * kappa * A ** m * math.exp(T / 2 - 2 * A * A))


def inf_tail_bound(model: ModelParams, A: float, t: float) -> float:
    """Upper bound on P(inf of the growth-process boundary over B_A is below t)."""
    d, b, m = model.d, model.beta, model.d - 1
    if model.kind is Kind.BETA:
        if t <= 0:
            return 0.0
        k = math.exp(gammaln(d / 2 + b + 1) - gammaln((d + 1) / 2))
        return -math.expm1(-k * t ** (b + 1) * (A + math.sqrt(t)) ** m)
    if model.kind is Kind.BETA_PRIME:
        if t >= 0:
            return 1.0
        k = max(math.gamma(b - (d + 1) / 2), math.gamma(b - 1)) / math.gamma(b - d / 2)
        return -math.expm1(-k * (-t) ** (1 - b) * (A + math.sqrt(-t)) ** m)
    return -math.expm1(-2 / math.sqrt(math.pi) * (A + 1) ** m * math.exp(t / 2))


def inf_tail_probability(model: ModelParams, A: float, t: float) -> float:
    """Exact P(inf over B_A < t) = 1 - exp(-E[points in K(A, t)])."""
    if model.kind is Kind.BETA_PRIME and t >= 0:
        return 1.0
    return -math.expm1(-k_region_mean(model, A, t))


def _bisect(f: Callable[[float], float], lo: float, hi: float, xtol: float = 1e-10) -> float:
    """Root of a decreasing function bracketed by f(lo) > 0 > f(hi)."""
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def invert_sup_bound(model: ModelParams, A: float, budget: float, count: int = 1) -> float:
    """Smallest height T with ``count * sup_tail_bound(A, T) <= budget``.

    Bisection on the log of the bound, which is decreasing in T.
    """
    if not 0 < budget:
        raise ParameterDomainError("budget must be positive")
    target = math.log(budget / count)

    def f(T):
        val = sup_tail_bound(model, A, T)
        return (math.log(val) if val > 0 else -math.inf) - target

    if model.kind is Kind.BETA:
        lo = 4 * A * A
        if target >= 0:
            return lo
        step = 1.0
        while f(lo + step) > 0:
            step *= 2
        return _bisect(f, lo, lo + step)
    if model.kind is Kind.BETA_PRIME:
        best = sup_tail_bound(model, A, -1e-300)
        if best * count > budget:
            raise InfeasibleTruncationError(
                f"beta_prime sup bound cannot fall below {best * count:.3g} at A = {A}",
                best * count)
        lo = -1.0
        while f(lo) <= 0:
            lo *= 2
            if lo < -1e300:
                return lo
        return _bisect(f, lo, 0.0)
    lo, hi = -1.0, 1.0
    while f(lo) <= 0:
        lo *= 2
    while f(hi) > 0:
        hi *= 2
    return _bisect(f, lo, hi)


def stabilization_shape(model: ModelParams, R: float, r: float, c0: float = 1.0) -> float:
    """Decay shape of the probability that B_R is not determined inside B_{R+r}.

    The shapes carry the known decay exponents of each model with every
    unknown constant set to one; they are heuristics for choosing a
    margin, never certificates.
    """
    d, b = model.d, model.beta
    far = r >= c0 * R
    if model.kind is Kind.BETA:
        k = d + 1 + 2 * b
        base = math.exp(-r ** k)
        return r * base if far else R ** (d - 2) * r ** (3 - d) * base
    if model.kind is Kind.BETA_PRIME:
        return r ** (-(2 * b - d - 1)) if far else R ** (d - 2) * r ** (3 - 2 * b)
    base = math.exp(-r * r)
    return base if far else R ** (d - 2) * r ** (2 - d) * base


def cover_count(A: float, a: float, dim: int) -> int:
    """Number of radius-``a`` balls (on a cube grid) that cover B_A."""
    if a >= A:
        return 1
    side = 2 * a / math.sqrt(dim)
    return (2 * math.ceil(A / side)) ** dim


@dataclass(frozen=True)
class Truncation:
    window: SamplingWindow
    R: float
    margin: float
    cover_radius: float
    cover_count: int
    height_budget: float
    stabilization_budget: float
    epsilon: Optional[float] = None
    epsilon_bound: Optional[float] = None

    @property
    def A(self) -> float:
        return self.R + self.margin


def choose_truncation(model: ModelParams, R: float, delta: float, split: float = 0.5,
                      cover_radius: float = 1.0, epsilon0: float = 0.5,
                      r_cap: float = 1e3) -> Truncation:
    """Sampling window for a tessellation that should be final inside B_R.

    The failure budget ``delta`` is split into ``split * delta`` for the
    height cutoff (union bound of the sup tail bound over a cover of B_A by
    balls of radius ``cover_radius``) and the rest for the spatial margin
    (inverted :func:`stabilization_shape`).  For beta_prime the upper cutoff
    is ``-epsilon0``, to be refined adaptively; ``epsilon_bound`` reports the
    cutoff the tail bound alone would demand, when one exists.
    """
    if not R > 0:
        raise ParameterDomainError("R must be positive")
    if not 0 < delta < 1:
        raise ParameterDomainError("delta must lie in (0, 1)")
    if not 0 < split < 1:
        raise ParameterDomainError("split must lie in (0, 1)")
    dim = model.dim
    hb, sb = delta * split, delta * (1 - split)

    lo_r = 1 / 3 if model.kind is not Kind.BETA_PRIME else 1e-6
    grid = np.geomspace(lo_r, r_cap, 400)
    shape = np.array([stabilization_shape(model, R, r) for r in grid])
    tail_max = np.maximum.accumulate(shape[::-1])[::-1]
    if tail_max[-1] > sb:
        raise InfeasibleTruncationError(
            f"stabilisation shape stays above {sb:.3g} up to r = {r_cap}", hb + tail_max[-1])
    j = int(np.argmax(tail_max <= sb))
    if j == 0:
        margin = lo_r
    else:
        def g(r):
            return max(stabilization_shape(model, R, x) for x in np.linspace(r, grid[j], 8)) - sb
        margin = _bisect(g, grid[j - 1], grid[j])
    A = R + margin
    a = min(cover_radius, A)
    m = cover_count(A, a, dim)

    if model.kind is Kind.BETA:
        T = invert_sup_bound(model, a, hb, m)
        window = SamplingWindow.ball(dim, A, 0.0, T)
        return Truncation(window, R, margin, a, m, hb, sb)
    if model.kind is Kind.GAUSSIAN:
        T = invert_sup_bound(model, a, hb, m)
        window = SamplingWindow.ball(dim, A, -math.inf, T)
        return Truncation(window, R, margin, a, m, hb, sb)
    try:
        eps_bound = -invert_sup_bound(model, a, hb, m)
    except InfeasibleTruncationError:
        eps_bound = None
    window = SamplingWindow.ball(dim, A, -math.inf, -epsilon0)
    return Truncation(window, R, margin, a, m, hb, sb, epsilon0, eps_bound)
