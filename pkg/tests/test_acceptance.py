"""End-to-end acceptance run: one test per criterion, each reporting a verdict line.

Every check runs at its stated tolerance; the verdict lines are collected in
the terminal summary under "acceptance criteria".
"""

import json
import math
import time

import numpy as np
import pytest

from betadelaunay.cli import main
from betadelaunay.experiments import (
    ExperimentConfig,
    estimate_variance_scaling,
    intensity_ratios,
    run_clt,
    run_stabilization_probe,
    run_tail_bound_check,
    run_window_campaign,
)
from betadelaunay.geometry import brute_force_tessellation, regular_triangulation
from betadelaunay.point_process import (
    ModelParams,
    SamplingWindow,
    expected_count,
    k_region_mean,
    sample_process,
    sup_tail_bound,
)

from conftest import ACCEPTANCE_LINES, BETA0, BETA2, BETA_PRIME4, GAUSS3
from oracles import k_region_quad

pytestmark = pytest.mark.acceptance


def verdict(num: int, title: str, ok: bool, detail: str, seconds: float):
    ACCEPTANCE_LINES.append(f"[{num}] {'PASS' if ok else 'FAIL'}  {title}: {detail} "
                            f"({seconds:.0f} s)")
    assert ok, detail


# --- shared window campaigns (criteria 5, 6, 7) ----------------------------------------

CAMPAIGN_M = 2000
CLT_M = 300
CAMPAIGN_WINDOWS = [4.0, 8.0, 16.0]
CAMPAIGN_SEED = 20240601


@pytest.fixture(scope="module")
def campaigns():
    out = {}
    for name, model in (("beta", BETA0), ("gaussian", GAUSS3)):
        cfg = ExperimentConfig(model, ["X0", "X1", "X2", "Y1"], CAMPAIGN_WINDOWS, CAMPAIGN_M,
                               CAMPAIGN_SEED)
        t0 = time.perf_counter()
        out[name] = (cfg, run_window_campaign(cfg), time.perf_counter() - t0)
    return out


# --- 1. oracle equivalence --------------------------------------------------------

def _process_sample(model, n_target, seed):
    """Process sample on a unit-radius ball window holding about ``n_target`` points."""
    m = model.dim
    if model.kind.value == "beta":
        lo, make = 0.0, lambda x: SamplingWindow.ball(m, 1.0, 0.0, x)
        a, b = 1e-6, 100.0
    elif model.kind.value == "gaussian":
        make = lambda x: SamplingWindow.ball(m, 1.0, -math.inf, x)
        a, b = -50.0, 50.0
    else:
        make = lambda x: SamplingWindow.ball(m, 1.0, -math.inf, -x)
        a, b = 1e-6, 100.0
    increasing = model.kind.value != "beta_prime"
    for _ in range(200):
        mid = 0.5 * (a + b)
        too_many = expected_count(model, make(mid)) > n_target
        if too_many == increasing:
            b = mid
        else:
            a = mid
    s = sample_process(model, make(0.5 * (a + b)), seed)
    return s.subset(np.arange(len(s.v)) < 30)


def test_criterion_1_oracle_equivalence():
    t0 = time.perf_counter()
    models = [BETA0, BETA_PRIME4, GAUSS3,
              ModelParams("beta", 4, 0.0), ModelParams("beta_prime", 4, 4.0),
              ModelParams("gaussian", 4)]
    mismatches, cases, largest = 0, 0, 0
    for model in models:
        for seed in range(200):
            s = _process_sample(model, 8 + seed % 20, (seed, model.d))
            if len(s.v) < model.d:
                continue
            cases += 1
            largest = max(largest, len(s.v))
            a = regular_triangulation(s).cell_set()
            b = brute_force_tessellation(s).cell_set()
            mismatches += a != b
    dt = time.perf_counter() - t0
    verdict(1, "oracle equivalence",
            mismatches == 0 and largest <= 30 and dt < 600,
            f"{mismatches} mismatches over {cases} samples (n <= {largest}), d in {{3,4}}", dt)


# --- 2. closed-form k-region mean ------------------------------------------------------

def test_criterion_2_closed_form_mean():
    t0 = time.perf_counter()
    As = [0.25, 0.5, 1.0, 2.0, 4.0]
    grids = {
        "beta": (ModelParams("beta", 3, 0.5), [0.05, 0.3, 1.0, 2.5, 6.0]),
        "beta_prime": (BETA_PRIME4, [-5.0, -2.0, -1.0, -0.3, -0.05]),
        "gaussian": (GAUSS3, [-6.0, -2.0, 0.0, 1.5, 4.0]),
    }
    worst = 0.0
    for model, ts in grids.values():
        for A in As:
            for t in ts:
                ref = k_region_quad(model.kind.value, model.d, model.beta, A, t)
                worst = max(worst, abs(k_region_mean(model, A, t) - ref) / abs(ref))
    dt = time.perf_counter() - t0
    verdict(2, "closed-form k-region mean", worst <= 1e-9,
            f"max relative error {worst:.2e} over 3 x 25 nodes", dt)


# --- 3. tail-bound dominance -----------------------------------------------------------

TAIL_CASES = [
    ("beta(0)", BETA0, [(1.0, T) for T in (3.0, 4.5, 5.0, 6.0)],
     [(1.0, t) for t in (0.05, 0.2, 0.5)]),
    ("beta(2)", BETA2, [(1.0, T) for T in (4.5, 5.0, 5.5)],
     [(1.0, t) for t in (0.2, 0.3, 0.4)]),
    ("beta_prime(4)", BETA_PRIME4, [(0.25, T) for T in (-0.2, -0.1, -0.05, 0.0)],
     [(1.0, t) for t in (-3.0, -2.0, -1.0)]),
    ("gaussian", GAUSS3, [(1.0, T) for T in (4.0, 6.0, 8.0)],
     [(1.0, t) for t in (-8.0, -6.0, -4.0)]),
]


def test_criterion_3_tail_bounds():
    t0 = time.perf_counter()
    spot = sup_tail_bound(BETA0, 1.0, 5.0)
    failures, nodes = [], 0
    for i, (name, model, sup_nodes, inf_nodes) in enumerate(TAIL_CASES):
        rep, _ = run_tail_bound_check(model, sup_nodes, inf_nodes, 2000, (7301, i))
        for n in rep.nodes:
            nodes += 1
            if not n.passed:
                failures.append(f"{name} {n.event} A={n.A} level={n.level}: "
                                f"{n.frequency:.4f} > {n.bound:.4f}")
    dt = time.perf_counter() - t0
    spot_ok = abs(spot - math.exp(-0.75)) < 1e-12 and round(spot, 3) == 0.472
    verdict(3, "tail-bound dominance", not failures and spot_ok and dt < 1800,
            f"{nodes - len(failures)}/{nodes} nodes within bound + 3 SE at M = 2000; "
            f"spot bound {spot:.4f}" + ("; " + "; ".join(failures) if failures else ""), dt)


# --- 4. stabilisation decay ----------------------------------------------------------------

def test_criterion_4_stabilization_decay():
    t0 = time.perf_counter()
    beta, _ = run_stabilization_probe(BETA0, 2.0, [0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0], 200,
                                      41, buffer=2.0)
    gauss, _ = run_stabilization_probe(GAUSS3, 2.0, [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 200,
                                       42, buffer=2.0)
    bp, _ = run_stabilization_probe(BETA_PRIME4, 1.0, [2.0, 2.5, 3.0, 3.5, 4.0, 5.0, 6.0],
                                    2000, 43)
    dt = time.perf_counter() - t0
    ref = bp.reference_slope
    slope_ok = bp.slope is not None and abs(bp.slope - ref) <= 0.3 * abs(ref)
    ok = (beta.monotone and gauss.monotone and bp.monotone
          and beta.p_hat[-1] < 0.01 and gauss.p_hat[-1] < 0.01 and slope_ok and dt < 3600)
    verdict(4, "stabilization decay", ok,
            f"p(r_max) beta {beta.p_hat[-1]:.3f}, gaussian {gauss.p_hat[-1]:.3f}; "
            f"monotone paths {beta.monotone and gauss.monotone and bp.monotone}; "
            f"beta_prime slope {bp.slope:.2f} vs {ref:.0f} +/- 30%", dt)


# --- 5. planar combinatorics -------------------------------------------------------------

def test_criterion_5_planar_combinatorics(campaigns):
    t0 = time.perf_counter()
    identity = all(r["planar_identity"] for _, recs, _ in campaigns.values() for r in recs)
    ratios, ok = [], identity
    for name, (cfg, recs, _) in campaigns.items():
        for n in (8.0, 16.0):
            q = intensity_ratios(recs, n, 2)
            r0, r1 = q["lambda0/lambda2"], q["lambda1/lambda2"]
            ok &= 0.45 <= r0 <= 0.55 and 1.42 <= r1 <= 1.58
            ratios.append(f"{name} n={n:g}: {r0:.3f}/{r1:.3f}")
    dt = time.perf_counter() - t0 + sum(c[2] for c in campaigns.values())
    verdict(5, "planar combinatorics", ok,
            f"edge identity on all {sum(len(c[1]) for c in campaigns.values())} "
            f"tessellations {identity}; lambda0/lambda2, lambda1/lambda2 = " + ", ".join(ratios),
            dt)


# --- 6. normality --------------------------------------------------------------------------

def test_criterion_6_clt(campaigns):
    t0 = time.perf_counter()
    worst, parts = 0.0, []
    for name, (cfg, recs, secs) in campaigns.items():
        sub = ExperimentConfig(cfg.model, ["X0", "X2", "Y1"], [8.0], CLT_M, cfg.seed)
        rep, _ = run_clt(sub, recs[:CLT_M])
        assert all(row.M == CLT_M for row in rep.rows)
        for row in rep.rows:
            worst = max(worst, row.ks)
            parts.append(f"{name} {row.statistic} {row.ks:.4f}")
        if secs > 7200:
            worst = math.inf
    dt = time.perf_counter() - t0 + sum(c[2] for c in campaigns.values())
    verdict(6, "normality", worst < 0.09,
            f"KS distances at n = 8, M = {CLT_M}: " + ", ".join(parts), dt)


# --- 7. variance scaling ---------------------------------------------------------------

def test_criterion_7_variance_scaling(campaigns):
    t0 = time.perf_counter()
    ok, parts = True, []
    for name, (cfg, recs, _) in campaigns.items():
        sub = ExperimentConfig(cfg.model, ["X0", "X2", "Y1"], CAMPAIGN_WINDOWS, CAMPAIGN_M,
                               cfg.seed)
        tables, _ = estimate_variance_scaling(sub, recs)
        for tab in tables:
            ok &= tab.positivity and tab.stabilization
            ratios = "/".join(f"{r.ratio_to_previous:.2f}" for r in tab.rows[1:])
            parts.append(f"{name} {tab.statistic} ratios {ratios}"
                         f"{'' if tab.positivity else ' CI hits 0'}")
    dt = time.perf_counter() - t0
    verdict(7, "variance scaling", ok, f"M = {CAMPAIGN_M}: " + "; ".join(parts), dt)


# --- 8. determinism ----------------------------------------------------------------

DETERMINISM_RUNS = [
    ("experiment", {"model": {"kind": "beta", "d": 3, "beta": 0}, "seed": 5,
                    "tolerance": {"min_replicates": 2},
                    "experiment": {"campaign": "clt", "replicates": 6, "windows": [2.0],
                                   "statistics": ["X0", "Y1"]}}),
    ("experiment", {"model": {"kind": "gaussian", "d": 3}, "seed": 6,
                    "experiment": {"campaign": "stabilization", "replicates": 4, "R": 1.0,
                                   "r_grid": [0.0, 1.0, 2.0]}}),
    ("experiment", {"model": {"kind": "beta_prime", "d": 3, "beta": 4}, "seed": 7,
                    "experiment": {"campaign": "tail_bounds", "replicates": 5,
                                   "sup_nodes": [[0.25, -0.1]], "inf_nodes": [[1.0, -2.0]]}}),
    ("experiment", {"model": {"kind": "beta", "d": 3, "beta": 2}, "seed": 8,
                    "tolerance": {"min_replicates": 2},
                    "experiment": {"campaign": "variance", "replicates": 4,
                                   "windows": [1.0, 2.0, 3.0]}}),
    ("experiment", {"model": {"kind": "beta", "d": 3, "beta": 0}, "seed": 9,
                    "experiment": {"campaign": "decorrelation", "replicates": 3, "a": 1.0,
                                   "b_grid": [2.0]}}),
    ("render", {"model": {"kind": "beta", "d": 3, "beta": 1}, "seed": 10, "render": {"n": 2}}),
]


def test_criterion_8_determinism(tmp_path):
    t0 = time.perf_counter()
    compared, differing = 0, []
    for i, (cmd, doc) in enumerate(DETERMINISM_RUNS):
        cfg = tmp_path / f"cfg{i}.json"
        cfg.write_text(json.dumps(doc))
        outs = []
        for rep in ("a", "b"):
            out = tmp_path / f"run{i}{rep}"
            assert main([cmd, "--config", str(cfg), "--out", str(out)]) == 0
            outs.append(out)
        name = "records.jsonl" if cmd == "experiment" else "tessellation.svg"
        compared += 1
        if (outs[0] / name).read_bytes() != (outs[1] / name).read_bytes():
            differing.append(f"{cmd} #{i}")
    dt = time.perf_counter() - t0
    verdict(8, "determinism", not differing,
            f"{compared - len(differing)}/{compared} reruns byte-identical "
            "(5 campaign types as JSON lines, 1 SVG)", dt)
