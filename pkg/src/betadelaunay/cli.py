"""Command-line front end.

Exit codes: 0 success, 1 invalid configuration, 2 infeasible truncation,
certification or sample size, 3 oracle size cap exceeded, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

from . import experiments as ex
from .config import COMMANDS, ConfigError, RunConfig, parse_config, serialize
from .geometry import OracleSizeError, brute_force_tessellation, regular_triangulation
from .point_process import (
    DivergenceError,
    InfeasibleTruncationError,
    ParameterDomainError,
    PointSample,
    SampleSizeError,
    choose_truncation,
    sample_process,
)
from .render import Style, UnsupportedDimensionError, render_svg
from .results import ResultsIOError, write_json, write_results
from .stabilization import stabilized_tessellation
from .tessellation import StabilizationError, Tessellation, WindowBox

EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_ORACLE, EXIT_IO = 1, 2, 3, 4


def _write_text(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    except OSError as e:
        raise ResultsIOError(f"cannot write {path}: {e.strerror or e}") from e
    return path


def cmd_sample(cfg: RunConfig) -> list[Path]:
    tr = choose_truncation(cfg.model, cfg.params["radius"], cfg.tolerance["delta"])
    s = sample_process(cfg.model, tr.window, cfg.seed)
    doc = {"schema_version": 1, "model": cfg.model.to_dict(), "seed": list(s.seed),
           "window": tr.window.to_dict(), "radius": cfg.params["radius"],
           "points": [[*map(float, v), float(h)] for v, h in zip(s.v, s.h)]}
    return [write_json(doc, Path(cfg.out) / "points.json")]


def _tessellation(cfg: RunConfig) -> Tessellation:
    p = cfg.params
    if p.get("points") is not None:
        pts = p["points"]
        if any(len(q) != cfg.model.d for q in pts):
            raise ConfigError(f"every point needs d = {cfg.model.d} coordinates",
                              "/tessellate/points")
        sample = PointSample.from_points(cfg.model, [(q[:-1], q[-1]) for q in pts])
        if p["method"] == "oracle":
            return brute_force_tessellation(sample)
        return regular_triangulation(sample, p["method"])
    _, t = stabilized_tessellation(cfg.model, p["R"], cfg.seed, delta=cfg.tolerance["delta"])
    return t


def cmd_tessellate(cfg: RunConfig) -> list[Path]:
    t = _tessellation(cfg)
    return [_write_text(Path(cfg.out) / "tessellation.json", t.to_json() + "\n")]


def cmd_render(cfg: RunConfig) -> list[Path]:
    p = cfg.params
    if cfg.model.d != 3:
        raise UnsupportedDimensionError(f"only d = 3 renders, got d = {cfg.model.d}")
    n = float(p["n"])
    if p.get("tessellation"):
        try:
            text = Path(p["tessellation"]).read_text(encoding="utf-8")
        except OSError as e:
            raise ResultsIOError(f"cannot read {p['tessellation']}: {e.strerror or e}") from e
        t = Tessellation.from_json(text)
    else:
        R = n * math.sqrt(2) * (1 + 1e-9)
        _, t = stabilized_tessellation(cfg.model, R, cfg.seed, delta=cfg.tolerance["delta"])
    svg = render_svg(t, WindowBox(n, 2), Style(stroke_width=p["stroke_width"], fill=p["fill"]))
    return [_write_text(Path(cfg.out) / "tessellation.svg", svg)]


def _campaign(cfg: RunConfig):
    p, tol, model = cfg.params, cfg.tolerance, cfg.model
    c = p["campaign"]
    if c in ("clt", "variance"):
        ec = ex.ExperimentConfig(model, p["statistics"], p["windows"], p["replicates"], cfg.seed,
                                 tol["delta"], tol["ks_slack"], tol["variance_band"],
                                 tol["bootstrap"], tol["min_replicates"], p["allow_beta_prime"])
        if c == "clt":
            report, recs = ex.run_clt(ec)
            ks = {(r.statistic, repr(float(r.n))): r.ks for r in report.rows if r.ks is not None}
            return report.to_dict(), recs, ks
        tables, recs = ex.estimate_variance_scaling(ec)
        return {"tables": [t.to_dict() for t in tables]}, recs, None
    if c == "stabilization":
        report, recs = ex.run_stabilization_probe(model, p["R"], p["r_grid"], p["replicates"],
                                                  cfg.seed, p.get("buffer"), tol["delta"],
                                                  p["epsilon"])
        return report.to_dict(), recs, None
    if c == "tail_bounds":
        report, recs = ex.run_tail_bound_check(model, p["sup_nodes"], p["inf_nodes"],
                                               p["replicates"], cfg.seed, p["grid_step"])
        return report.to_dict(), recs, None
    report, recs = ex.run_decorrelation_probe(model, p["a"], p["b_grid"], p["replicates"],
                                              cfg.seed, tol["delta"], p["independent"])
    return report.to_dict(), recs, None


def cmd_experiment(cfg: RunConfig) -> list[Path]:
    t0 = time.perf_counter()
    summary, recs, ks = _campaign(cfg)
    elapsed = time.perf_counter() - t0
    out = Path(cfg.out)
    paths = list(write_results(recs, out, ks=ks))
    # the output directory does not influence results, so it is left out of the hash
    inputs = {k: v for k, v in cfg.to_dict().items() if k != "out"}
    summary = {"config": inputs, "config_hash": ex.config_hash(inputs), "report": summary}
    paths.append(write_json(summary, out / "summary.json"))
    # wall-clock time is kept apart so the other outputs stay reproducible
    paths.append(write_json({"seconds": elapsed, "replicates": len(recs),
                             "workers": ex.worker_count()}, out / "timing.json"))
    return paths


HANDLERS = {"sample": cmd_sample, "tessellate": cmd_tessellate, "render": cmd_render,
            "experiment": cmd_experiment}


def run_command(cfg: RunConfig) -> list[Path]:
    return HANDLERS[cfg.command](cfg)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="betadelaunay",
                                 description="Sample, tessellate, render and run campaigns.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--seed", type=int, help="master seed (overrides the config)")
    ap.add_argument("--out", help="output directory (overrides the config)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as e:
            raise ResultsIOError(f"cannot read config {args.config}: {e.strerror or e}") from e
        cfg = parse_config(text, args.command)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be non-negative", "--seed")
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out = args.out
        for p in run_command(cfg):
            print(p)
    except (ConfigError, ParameterDomainError, UnsupportedDimensionError,
            ex.UnsupportedModelError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleTruncationError, StabilizationError, DivergenceError,
            SampleSizeError) as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OracleSizeError as e:
        print(f"oracle cap: {e}", file=sys.stderr)
        return EXIT_ORACLE
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
