"""Seeded Monte Carlo campaigns.

Every campaign draws replicate ``k`` from the seed path ``(master, k)`` (plus
sub-keys), so a replicate's values never depend on scheduling or on the
number of workers.  Reductions always run in replicate order.

Campaigns
---------
* window statistics (face counts X_k and skeleton volumes Y_k in boxes
  [-n, n]^{d-1}) feeding the normality check and the variance scaling table;
* the coupled stabilisation probe;
* tail-bound checks for the sup and inf of the growth-process boundary;
* a correlation proxy for the decay of dependence.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import norm

from .geometry import envelope_extremes, regular_triangulation
from .point_process import (
    Kind,
    ModelParams,
    PointSample,
    SamplingWindow,
    choose_truncation,
    inf_tail_bound,
    inf_tail_probability,
    sample_k_region,
    sample_process,
    sup_tail_bound,
)
from .rng import Seed, derive_seed, seed_key
from .stabilization import stabilized_tessellation, triangulate
from .tessellation import (
    Tessellation,
    WindowBox,
    cell_signature,
    count_faces_in_window,
    k_faces,
    restrict_to_ball,
    skeleton_volume_in_window,
)

RECORD_SCHEMA = 1
WORKERS_ENV = "BETADELAUNAY_WORKERS"
UNSUPPORTED = "unsupported: no central limit theorem is available for beta_prime"


class UnsupportedModelError(ValueError):
    """A campaign was requested for a model it does not cover."""


# ---------------------------------------------------------------------------
# helpers

def ks_distance(samples, cdf: Callable) -> float:
    """Kolmogorov-Smirnov distance between the empirical CDF of ``samples`` and ``cdf``."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = len(x)
    if n == 0:
        raise ValueError("KS distance of an empty sample")
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def ks_threshold(M: int, slack: float = 0.15) -> float:
    return 1.36 / math.sqrt(M) * (1 + slack)


def wilson_interval(k: int, n: int, z: float = 1.96) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, mid - half), min(1.0, mid + half)


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def run_replicates(fn: Callable, M: int, workers: Optional[int] = None) -> list:
    """``[fn(0), ..., fn(M-1)]``, optionally on a process pool; order is fixed."""
    workers = worker_count() if workers is None else workers
    if workers <= 1 or M <= 1:
        return [fn(k) for k in range(M)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(M), chunksize=max(1, M // (4 * workers))))


def config_hash(obj) -> str:
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_json_default)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, ModelParams):
        return o.to_dict()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def to_jsonable(obj):
    return json.loads(json.dumps(obj, default=_json_default))


# ---------------------------------------------------------------------------
# window statistics

@dataclass(frozen=True)
class Statistic:
    kind: str  # "face_count" or "skeleton_volume"
    k: int

    @property
    def name(self) -> str:
        return f"{'X' if self.kind == 'face_count' else 'Y'}{self.k}"

    def __call__(self, t: Tessellation, w: WindowBox) -> float:
        if self.kind == "face_count":
            return float(count_faces_in_window(t, self.k, w, certified=True))
        if self.kind == "skeleton_volume":
            return skeleton_volume_in_window(t, self.k, w, certified=True)
        raise ValueError(f"unknown statistic {self.kind!r}")

    @classmethod
    def parse(cls, spec) -> "Statistic":
        if isinstance(spec, Statistic):
            return spec
        if isinstance(spec, str):
            kind = {"X": "face_count", "Y": "skeleton_volume"}[spec[0]]
            return cls(kind, int(spec[1:]))
        return cls(spec["kind"], int(spec["k"]))


@dataclass
class ExperimentConfig:
    model: ModelParams
    statistics: list
    windows: list
    replicates: int
    seed: int
    delta: float = 1e-3
    ks_slack: float = 0.15
    variance_band: float = 0.25
    bootstrap: int = 1000
    min_replicates: int = 30
    allow_beta_prime: bool = False

    def __post_init__(self):
        self.statistics = [Statistic.parse(s) for s in self.statistics]
        self.windows = [float(n) for n in self.windows]
        if self.replicates < 2:
            raise ValueError("a campaign needs at least 2 replicates")
        if sorted(self.windows) != self.windows or len(set(self.windows)) != len(self.windows):
            raise ValueError("windows must be strictly increasing")
        for s in self.statistics:
            if not 0 <= s.k <= self.model.dim:
                raise ValueError(f"statistic {s.name} out of range for d = {self.model.d}")

    def to_dict(self) -> dict:
        return {"model": self.model.to_dict(),
                "statistics": [{"kind": s.kind, "k": s.k} for s in self.statistics],
                "windows": self.windows, "replicates": self.replicates, "seed": self.seed,
                "delta": self.delta, "ks_slack": self.ks_slack,
                "variance_band": self.variance_band, "bootstrap": self.bootstrap,
                "min_replicates": self.min_replicates,
                "allow_beta_prime": self.allow_beta_prime}


def planar_edge_identity(t: Tessellation) -> bool:
    """3 #cells == 2 #interior edges + #boundary edges, for a planar tessellation."""
    if t.dim != 2:
        raise ValueError("planar identity needs d = 3")
    _, counts = k_faces(t, 1, return_counts=True)
    if np.any(counts > 2):
        return False
    return 3 * len(t.cells) == 2 * int(np.sum(counts == 2)) + int(np.sum(counts == 1))


def window_replicate(config: ExperimentConfig, k: int) -> dict:
    """One replicate: a tessellation certified on the largest window, all statistics."""
    n_max = config.windows[-1]
    R = n_max * math.sqrt(config.model.dim) * (1 + 1e-9)
    seed = derive_seed(config.seed, k)
    _, t = stabilized_tessellation(config.model, R, seed, delta=config.delta)
    values = {}
    for n in config.windows:
        w = WindowBox(n, config.model.dim)
        values[_nkey(n)] = {s.name: s(t, w) for s in config.statistics}
    rec = {"replicate": k, "seed": list(seed), "values": values,
           "stabilized_radius": t.stabilized_radius,
           "failure_mass": t.meta.get("failure_mass")}
    if config.model.dim == 2:
        rec["planar_identity"] = planar_edge_identity(t)
    return rec


def _nkey(n: float) -> str:
    return repr(float(n))


def _check_clt_model(config: ExperimentConfig) -> list:
    if config.model.kind is Kind.BETA_PRIME:
        if not config.allow_beta_prime:
            raise UnsupportedModelError(
                "normality campaigns are not supported for beta_prime; "
                "set allow_beta_prime to run them anyway")
        return [UNSUPPORTED]
    return []


def run_window_campaign(config: ExperimentConfig, workers: Optional[int] = None) -> list[dict]:
    """Replicate records of a window-statistics campaign, in replicate order."""
    h = config_hash(config.to_dict())
    recs = run_replicates(partial(window_replicate, config), config.replicates, workers)
    out = []
    for r in recs:
        out.append({"schema_version": RECORD_SCHEMA, "campaign": "window_statistics",
                    "config_hash": h, **r})
    return out


def values_by_window(records: Sequence[dict], stat: str,
                     windows: Optional[Sequence[float]] = None) -> dict:
    """{n: array of the statistic over replicates} from campaign records.

    ``windows`` restricts the result to those window sizes.
    """
    keep = None if windows is None else {float(n) for n in windows}
    out: dict = {}
    for r in sorted(records, key=lambda r: r["replicate"]):
        for n, vals in r["values"].items():
            if keep is None or float(n) in keep:
                out.setdefault(float(n), []).append(vals[stat])
    return {n: np.asarray(v, dtype=float) for n, v in sorted(out.items())}


# ---------------------------------------------------------------------------
# normality

@dataclass
class CltRow:
    n: float
    statistic: str
    M: int
    mean: float
    variance: float
    normalized_variance: float
    ks: Optional[float]
    threshold: Optional[float]
    verdict: str
    standardized: list = field(repr=False, default_factory=list)


@dataclass
class CltReport:
    model: dict
    rows: list
    labels: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.verdict == "pass" for r in self.rows)

    def to_dict(self) -> dict:
        return to_jsonable(asdict(self))


def standardize(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    sd = x.std(ddof=1)
    if not sd > 0:
        return np.zeros_like(x)
    z = (x - x.mean()) / sd
    # remove the rounding residue so the sample has mean 0 and variance 1
    z = z - z.mean()
    return z / z.std(ddof=1)


def clt_summary(values: dict, dim: int, statistic: str = "", slack: float = 0.15,
                min_replicates: int = 30) -> list[CltRow]:
    rows = []
    for n, x in sorted(values.items()):
        x = np.asarray(x, dtype=float)
        M = len(x)
        var = float(x.var(ddof=1)) if M > 1 else 0.0
        nv = var / (2 * n) ** dim
        if M < max(2, min_replicates):
            rows.append(CltRow(n, statistic, M, float(x.mean()), var, nv, None, None,
                               "insufficient replicates"))
            continue
        z = standardize(x)
        ks = ks_distance(z, norm.cdf)
        thr = ks_threshold(M, slack)
        rows.append(CltRow(n, statistic, M, float(x.mean()), var, nv, ks, thr,
                           "pass" if ks < thr else "fail", z.tolist()))
    return rows


def run_clt(config: ExperimentConfig, records: Optional[list] = None,
            workers: Optional[int] = None) -> tuple[CltReport, list]:
    """Normality check of the standardised window statistics; returns the report and records."""
    labels = _check_clt_model(config)
    if records is None:
        records = run_window_campaign(config, workers)
    rows = []
    for s in config.statistics:
        rows += clt_summary(values_by_window(records, s.name, config.windows),
                            config.model.dim, s.name,
                            config.ks_slack, config.min_replicates)
    return CltReport(config.model.to_dict(), rows, labels), records


# ---------------------------------------------------------------------------
# variance scaling

@dataclass
class VarianceRow:
    n: float
    normalized_variance: float
    ci_low: float
    ci_high: float
    ratio_to_previous: Optional[float]


@dataclass
class VarianceReport:
    statistic: str
    rows: list
    band: float
    positivity: bool
    stabilization: bool

    @property
    def passed(self) -> bool:
        return self.positivity and self.stabilization

    def to_dict(self) -> dict:
        return to_jsonable(asdict(self))


def variance_scaling_table(values: dict, dim: int, statistic: str = "", band: float = 0.25,
                           n_boot: int = 1000, seed: Seed = 0,
                           level: float = 0.95) -> VarianceReport:
    """Normalised variances Var / (2n)^{d-1} with percentile bootstrap intervals."""
    if len(values) < 3:
        raise ValueError("variance scaling needs at least 3 window sizes")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(seed_key(seed)))))
    rows, prev = [], None
    a = (1 - level) / 2
    for n, x in sorted(values.items()):
        x = np.asarray(x, dtype=float)
        scale = (2 * n) ** dim
        nv = float(x.var(ddof=1)) / scale
        idx = rng.integers(0, len(x), size=(n_boot, len(x)))
        boot = x[idx].var(axis=1, ddof=1) / scale
        lo, hi = np.quantile(boot, [a, 1 - a])
        ratio = nv / prev if prev not in (None, 0.0) else None
        rows.append(VarianceRow(n, nv, float(lo), float(hi), ratio))
        prev = nv
    positivity = all(r.ci_low > 0 for r in rows)
    stable = all(r.ratio_to_previous is not None and abs(r.ratio_to_previous - 1) <= band
                 for r in rows[1:])
    return VarianceReport(statistic, rows, band, positivity, stable)


def estimate_variance_scaling(config: ExperimentConfig, records: Optional[list] = None,
                              workers: Optional[int] = None) -> tuple[list, list]:
    """Variance tables for every configured statistic; returns the tables and records."""
    if len(config.windows) < 3:
        raise ValueError("variance scaling needs at least 3 window sizes")
    _check_clt_model(config)
    if records is None:
        records = run_window_campaign(config, workers)
    tables = []
    for j, s in enumerate(config.statistics):
        tables.append(variance_scaling_table(
            values_by_window(records, s.name, config.windows), config.model.dim, s.name,
            config.variance_band, config.bootstrap, derive_seed(config.seed, 10 ** 9, j)))
    return tables, records


def intensity_ratios(records: Sequence[dict], n: float, dim: int) -> dict:
    """Plug-in estimates of lambda_0 / lambda_2 and lambda_1 / lambda_2 on window n."""
    vals = {s: values_by_window(records, s)[float(n)].mean() / (2 * n) ** dim
            for s in ("X0", "X1", "X2")}
    return {"lambda0/lambda2": vals["X0"] / vals["X2"], "lambda1/lambda2": vals["X1"] / vals["X2"]}


# ---------------------------------------------------------------------------
# stabilisation probe

@dataclass
class StabilizationReport:
    model: dict
    R: float
    r_grid: list
    M: int
    p_hat: list
    wilson: list
    p_hat_raw: list
    slope: Optional[float]
    reference_slope: float
    fit: str
    fit_points: int
    window: dict
    monotone: bool

    def to_dict(self) -> dict:
        return to_jsonable(asdict(self))


def _probe_window(model: ModelParams, R: float, r_max: float, buffer: float, delta: float,
                  epsilon: float) -> SamplingWindow:
    radius = R + r_max + buffer
    if model.kind is Kind.BETA_PRIME:
        return SamplingWindow.ball(model.dim, radius, -math.inf, -epsilon)
    w = choose_truncation(model, radius, delta).window
    return SamplingWindow.ball(model.dim, radius, w.height_lo, w.height_hi)


def probe_replicate(model: ModelParams, R: float, r_grid: Sequence[float],
                    window: SamplingWindow, seed: Seed, k: int) -> dict:
    """Change indicators of the cells meeting B_R when points outside B_{R+r} are resampled.

    One alternative configuration is drawn per replicate and used for every
    r, so the running "changed at some r'' >= r" indicator is nonincreasing
    in r on every path.
    """
    s = derive_seed(seed, k)
    xi = sample_process(model, window, derive_seed(s, 0))
    alt = sample_process(model, window, derive_seed(s, 1))
    base = cell_signature(restrict_to_ball(triangulate(xi), R))
    rx, ra = np.linalg.norm(xi.v, axis=1), np.linalg.norm(alt.v, axis=1)
    raw = []
    for r in r_grid:
        keep, take = rx <= R + r, ra > R + r
        mixed = PointSample(model, window, np.vstack([xi.v[keep], alt.v[take]]),
                            np.concatenate([xi.h[keep], alt.h[take]]))
        sig = cell_signature(restrict_to_ball(triangulate(mixed), R))
        raw.append(bool(sig != base))
    coupled = list(np.logical_or.accumulate(raw[::-1])[::-1])
    return {"replicate": k, "seed": list(s), "changed_raw": raw,
            "changed": [bool(c) for c in coupled]}


def reference_slope(model: ModelParams) -> float:
    d, b = model.d, model.beta
    if model.kind is Kind.BETA:
        return d + 1 + 2 * b
    if model.kind is Kind.GAUSSIAN:
        return 2.0
    return -(2 * b - d - 1)


def fit_decay(model: ModelParams, r_grid, p_hat, M: int) -> tuple[Optional[float], str, int]:
    """Weighted least-squares slope of the decay fit over the informative nodes.

    Weights are inverse delta-method variances of the transformed binomial
    frequencies.
    """
    r = np.asarray(r_grid, dtype=float)
    p = np.asarray(p_hat, dtype=float)
    ok = (p > 0) & (p <= 0.9) & (r > 0)
    if ok.sum() < 2:
        return None, "exponent unidentifiable", int(ok.sum())
    x, p = np.log(r[ok]), p[ok]
    var = (1 - p) / (M * p)
    if model.kind is Kind.BETA_PRIME:
        y, kind = np.log(p), "log p vs log r"
    else:
        y, kind = np.log(-np.log(p)), "log(-log p) vs log r"
        var = var / np.log(p) ** 2
    slope = float(np.polyfit(x, y, 1, w=1 / np.sqrt(var))[0])
    return slope, kind, int(ok.sum())


def run_stabilization_probe(model: ModelParams, R: float, r_grid: Sequence[float], M: int,
                            seed: Seed, buffer: Optional[float] = None, delta: float = 1e-3,
                            epsilon: float = 0.5,
                            workers: Optional[int] = None) -> tuple[StabilizationReport, list]:
    """Coupled resampling probe of the stabilisation probabilities.

    Points are sampled on B_{R + r_max + buffer} (``buffer`` defaults to
    ``r_max``), so even the last grid node resamples a nonempty annulus.
    For beta_prime the heights are cut at ``-epsilon``.
    """
    r_grid = [float(r) for r in r_grid]
    if any(b <= a for a, b in zip(r_grid, r_grid[1:])) or r_grid[0] < 0:
        raise ValueError("r_grid must be nonnegative and strictly increasing")
    buffer = r_grid[-1] if buffer is None else float(buffer)
    if not buffer > 0:
        raise ValueError("buffer must be positive")
    window = _probe_window(model, R, r_grid[-1], buffer, delta, epsilon)
    recs = run_replicates(partial(probe_replicate, model, R, r_grid, window, seed), M, workers)
    changed = np.array([r["changed"] for r in recs], dtype=int)
    raw = np.array([r["changed_raw"] for r in recs], dtype=int)
    counts = changed.sum(axis=0)
    p_hat = (counts / M).tolist()
    slope, kind, npts = fit_decay(model, r_grid, p_hat, M)
    monotone = bool(np.all(np.diff(changed, axis=1) <= 0))
    report = StabilizationReport(model.to_dict(), R, r_grid, M, p_hat,
                                 [wilson_interval(int(c), M) for c in counts],
                                 (raw.sum(axis=0) / M).tolist(), slope, reference_slope(model),
                                 kind, npts, window.to_dict(), monotone)
    h = config_hash({"probe": model.to_dict(), "R": R, "r_grid": r_grid, "M": M,
                     "seed": list(seed_key(seed)), "buffer": buffer, "delta": delta,
                     "epsilon": epsilon})
    records = [{"schema_version": RECORD_SCHEMA, "campaign": "stabilization_probe",
                "config_hash": h, **r} for r in recs]
    return report, records


# ---------------------------------------------------------------------------
# tail bounds

@dataclass
class BoundNode:
    event: str  # "sup>T" or "inf<t"
    A: float
    level: float
    exceedances: int
    M: int
    frequency: float
    std_error: float
    bound: float
    exact: Optional[float]
    passed: bool


@dataclass
class BoundCheckReport:
    model: dict
    nodes: list
    grid_step: float

    @property
    def passed(self) -> bool:
        return all(n.passed for n in self.nodes)

    def to_dict(self) -> dict:
        return to_jsonable(asdict(self))


def _sup_estimate(sample: PointSample, A: float, grid_step: float) -> float:
    if len(sample) == 0:
        return math.inf
    return envelope_extremes(sample, A, grid_step).sup


def sup_replicate(model: ModelParams, A: float, levels: Sequence[float], grid_step: float,
                  seed: Seed, k: int, eta0: float = 0.2, max_refine: int = 6) -> dict:
    """Sup estimates over B_A deciding the events {sup > T} for every level T.

    Only points of K(A, T) can bring the boundary to height T inside B_A, so
    one sample of K(A, T_max) decides every level.  For beta_prime levels
    T >= 0 the region is refined towards height 0 by adding the points of
    K(A, -eta/2) outside K(A, -eta) until the boundary is shown to stay
    below -eta; a replicate that never gets there counts as an exceedance.
    """
    s = derive_seed(seed, k)
    levels = sorted(float(x) for x in levels)
    neg = [x for x in levels if not (model.kind is Kind.BETA_PRIME and x >= 0)]
    out = {"replicate": k, "seed": list(s)}
    if neg:
        top = neg[-1]
        sample = sample_k_region(model, A, top, derive_seed(s, 0))
        sup = _sup_estimate(sample, A, grid_step)
        out["sup"] = sup
        out["exceed"] = {repr(T): bool(sup > T) for T in neg}
    else:
        out["exceed"] = {}
    if len(neg) < len(levels):
        eta = eta0
        sample = sample_k_region(model, A, -eta, derive_seed(s, 1, 0))
        sup = _sup_estimate(sample, A, grid_step)
        j = 0
        while sup > -eta and j < max_refine:
            j += 1
            new = sample_k_region(model, A, -eta / 2, derive_seed(s, 1, j))
            inner = np.linalg.norm(new.v, axis=1) <= A + np.sqrt(np.clip(-eta - new.h, 0, None))
            fresh = ~(inner & (new.h <= -eta))
            sample = PointSample(model, new.window, np.vstack([sample.v, new.v[fresh]]),
                                 np.concatenate([sample.h, new.h[fresh]]))
            eta /= 2
            sup = _sup_estimate(sample, A, grid_step)
        certified = sup <= -eta
        out["sup_near_zero"] = sup
        out["refinements"] = j
        for T in levels[len(neg):]:
            out["exceed"][repr(T)] = not certified
    return out


def inf_replicate(model: ModelParams, A: float, levels: Sequence[float], seed: Seed,
                  k: int) -> dict:
    """Exact inf over B_A of the boundary built from the points of K(A, t_max)."""
    s = derive_seed(seed, k)
    top = max(levels)
    sample = sample_k_region(model, A, top, derive_seed(s, 2))
    if len(sample) == 0:
        inf = math.inf
    else:
        r = np.linalg.norm(sample.v, axis=1)
        inf = float(np.min(sample.h + np.clip(r - A, 0, None) ** 2))
    return {"replicate": k, "seed": list(s), "inf": inf,
            "exceed": {repr(t): bool(inf < t) for t in levels}}


def _group(nodes):
    groups: dict = {}
    for A, x in nodes:
        groups.setdefault(float(A), []).append(float(x))
    return groups


def run_tail_bound_check(model: ModelParams, sup_nodes: Sequence, inf_nodes: Sequence, M: int,
                         seed: Seed, grid_step: float = 0.02,
                         workers: Optional[int] = None) -> tuple[BoundCheckReport, list]:
    """Empirical frequencies of {sup > T} and {inf < t} against the closed-form bounds.

    A node passes when the frequency is at most the bound plus three binomial
    standard errors (the standard error uses the bound when it exceeds the
    observed frequency, so a zero bound demands zero exceedances).
    """
    nodes, records = [], []
    h = config_hash({"tail": model.to_dict(), "sup": list(sup_nodes), "inf": list(inf_nodes),
                     "M": M, "seed": list(seed_key(seed)), "grid_step": grid_step})
    for j, (A, levels) in enumerate(sorted(_group(sup_nodes).items())):
        recs = run_replicates(partial(sup_replicate, model, A, levels, grid_step,
                                      derive_seed(seed, 0, j)), M, workers)
        records += [{"schema_version": RECORD_SCHEMA, "campaign": "tail_sup", "config_hash": h,
                     "A": A, **r} for r in recs]
        for T in levels:
            hits = sum(r["exceed"][repr(T)] for r in recs)
            nodes.append(_node("sup>T", A, T, hits, M, sup_tail_bound(model, A, T), None))
    for j, (A, levels) in enumerate(sorted(_group(inf_nodes).items())):
        recs = run_replicates(partial(inf_replicate, model, A, levels,
                                      derive_seed(seed, 1, j)), M, workers)
        records += [{"schema_version": RECORD_SCHEMA, "campaign": "tail_inf", "config_hash": h,
                     "A": A, **r} for r in recs]
        for t in levels:
            hits = sum(r["exceed"][repr(t)] for r in recs)
            nodes.append(_node("inf<t", A, t, hits, M, inf_tail_bound(model, A, t),
                               inf_tail_probability(model, A, t)))
    return BoundCheckReport(model.to_dict(), nodes, grid_step), records


def _node(event, A, level, hits, M, bound, exact) -> BoundNode:
    f = hits / M
    p = max(f, bound) if bound > 0 else f
    se = math.sqrt(p * (1 - p) / M)
    return BoundNode(event, A, level, int(hits), M, f, se, bound, exact, f <= bound + 3 * se)


# ---------------------------------------------------------------------------
# decorrelation proxy

@dataclass
class DecorrelationReport:
    model: dict
    a: float
    b_grid: list
    M: int
    correlations: list
    noise_level: float
    independent: bool
    note: str = ("correlation proxy only: the absolute-regularity coefficient is a supremum "
                 "over partitions and is not estimated")

    def to_dict(self) -> dict:
        return to_jsonable(asdict(self))


def _vertices_in_shell(t: Tessellation, lo: float, hi: float) -> int:
    r = np.linalg.norm(t.v[t.vertex_ids], axis=1)
    return int(np.count_nonzero((r >= lo) & (r <= hi)))


def decorrelation_replicate(model: ModelParams, a: float, b_grid: Sequence[float], delta: float,
                            independent: bool, seed: Seed, k: int) -> dict:
    s = derive_seed(seed, k)
    R = max(b_grid) + 1
    _, t = stabilized_tessellation(model, R, derive_seed(s, 0), delta=delta)
    if independent:
        _, t2 = stabilized_tessellation(model, R, derive_seed(s, 1), delta=delta)
    else:
        t2 = t
    inner = _vertices_in_shell(t, 0.0, a)
    shells = [_vertices_in_shell(t2, b, b + 1) for b in b_grid]
    return {"replicate": k, "seed": list(s), "inner": inner, "shells": shells}


def run_decorrelation_probe(model: ModelParams, a: float, b_grid: Sequence[float], M: int,
                            seed: Seed, delta: float = 1e-3, independent: bool = False,
                            workers: Optional[int] = None) -> tuple[DecorrelationReport, list]:
    """Correlation of vertex counts in B_a and in the shells B_{b+1} minus B_b."""
    b_grid = [float(b) for b in b_grid]
    if any(b <= a for b in b_grid):
        raise ValueError("every b must exceed a")
    recs = run_replicates(partial(decorrelation_replicate, model, a, b_grid, delta, independent,
                                  seed), M, workers)
    x = np.array([r["inner"] for r in recs], dtype=float)
    Y = np.array([r["shells"] for r in recs], dtype=float)
    corr = []
    for j in range(len(b_grid)):
        y = Y[:, j]
        if x.std() == 0 or y.std() == 0:
            corr.append(0.0)
        else:
            corr.append(float(np.corrcoef(x, y)[0, 1]))
    h = config_hash({"decorrelation": model.to_dict(), "a": a, "b": b_grid, "M": M,
                     "seed": list(seed_key(seed)), "delta": delta, "independent": independent})
    records = [{"schema_version": RECORD_SCHEMA, "campaign": "decorrelation", "config_hash": h,
                **r} for r in recs]
    return DecorrelationReport(model.to_dict(), a, b_grid, M, corr, 2 / math.sqrt(M),
                               independent), records
