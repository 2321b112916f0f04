import csv
import json
import math
import re
from pathlib import Path

import numpy as np
import pytest
import shapely.geometry as sg
from hypothesis import given
from hypothesis import strategies as st

from betadelaunay.cli import main
from betadelaunay.config import ConfigError, parse_config, serialize
from betadelaunay.geometry import regular_triangulation
from betadelaunay.point_process import ModelParams, PointSample
from betadelaunay.render import Style, UnsupportedDimensionError, render_svg
from betadelaunay.results import read_records, write_results
from betadelaunay.tessellation import Tessellation, WindowBox, k_faces

GOLDEN = Path(__file__).parent / "golden"


def write_cfg(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc), encoding="utf-8")
    return str(p)


def beta_doc(**kw):
    doc = {"model": {"kind": "beta", "d": 3, "beta": 0}}
    doc.update(kw)
    return doc


# --- configuration ---------------------------------------------------------------

def test_minimal_config_gets_defaults():
    cfg = parse_config(json.dumps(beta_doc()), "sample")
    assert cfg.command == "sample" and cfg.seed == 0
    assert cfg.params == {"radius": 5.0}
    assert cfg.tolerance["delta"] == 1e-3 and cfg.tolerance["ks_slack"] == 0.15


def test_beta_boundary_rejected_with_range():
    doc = {"model": {"kind": "beta", "d": 3, "beta": -1}}
    with pytest.raises(ConfigError) as e:
        parse_config(json.dumps(doc), "sample")
    assert "β > −1" in str(e.value) and e.value.path == "/model"


@pytest.mark.parametrize("doc, path", [
    (beta_doc(colour="red"), "/"),
    (beta_doc(sample={"radius": 2, "extra": 1}), "/sample"),
    (beta_doc(tolerance={"delta": 2}), "/tolerance/delta"),
    (beta_doc(tessellate={"R": 1}), "/tessellate"),
    ({"model": {"kind": "delta", "d": 3}}, "/model/kind"),
])
def test_schema_violations_name_the_key(doc, path):
    with pytest.raises(ConfigError) as e:
        parse_config(json.dumps(doc), "sample")
    assert e.value.path == path


def test_json_error_reports_line():
    with pytest.raises(ConfigError) as e:
        parse_config('{\n"model": {\n  "kind": "beta",,\n}}', "sample")
    assert e.value.line == 3


def test_command_mismatch():
    with pytest.raises(ConfigError):
        parse_config(json.dumps(beta_doc(command="render")), "sample")


configs = st.fixed_dictionaries({
    "command": st.just("experiment"),
    "model": st.sampled_from([{"kind": "beta", "d": 3, "beta": 0.5},
                              {"kind": "gaussian", "d": 4},
                              {"kind": "beta_prime", "d": 3, "beta": 4.0}]),
    "seed": st.integers(0, 2 ** 40),
    "tolerance": st.fixed_dictionaries({"delta": st.floats(1e-9, 0.5)}),
    "experiment": st.fixed_dictionaries({
        "campaign": st.sampled_from(["clt", "variance", "tail_bounds"]),
        "windows": st.lists(st.floats(0.5, 64), min_size=1, max_size=4),
        "statistics": st.lists(st.from_regex(r"\A[XY][0-2]\Z"), min_size=1, max_size=3),
    }),
})


@given(configs)
def test_config_round_trip(doc):
    cfg = parse_config(json.dumps(doc))
    again = parse_config(serialize(cfg))
    assert again == cfg
    assert serialize(again) == serialize(cfg)


# --- exit codes ------------------------------------------------------------------

def test_exit_config_error(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"model": {"kind": "beta", "d": 3, "beta": -2}})
    assert main(["sample", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "β > −1" in capsys.readouterr().err


def test_exit_infeasible(tmp_path):
    cfg = write_cfg(tmp_path, {"model": {"kind": "beta_prime", "d": 3, "beta": 2.05},
                               "tolerance": {"delta": 1e-12}, "sample": {"radius": 50}})
    assert main(["sample", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_exit_sample_too_large(tmp_path):
    cfg = write_cfg(tmp_path, {"model": {"kind": "beta", "d": 3, "beta": 15},
                               "render": {"n": 3}})
    assert main(["render", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_exit_oracle_cap(tmp_path):
    rng = np.random.default_rng(0)
    pts = np.column_stack([rng.random((70, 2)), rng.random(70)]).tolist()
    cfg = write_cfg(tmp_path, beta_doc(tessellate={"points": pts, "method": "oracle"}))
    assert main(["tessellate", "--config", cfg, "--out", str(tmp_path / "o")]) == 3


def test_exit_io(tmp_path):
    assert main(["sample", "--config", str(tmp_path / "missing.json")]) == 4
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = write_cfg(tmp_path, beta_doc(sample={"radius": 1}))
    assert main(["sample", "--config", cfg, "--out", str(blocker / "sub")]) == 4


def test_render_rejects_other_dimensions(tmp_path):
    cfg = write_cfg(tmp_path, {"model": {"kind": "gaussian", "d": 4}})
    assert main(["render", "--config", cfg, "--out", str(tmp_path / "o")]) == 1


# --- commands --------------------------------------------------------------------

def test_sample_deterministic(tmp_path):
    cfg = write_cfg(tmp_path, beta_doc(sample={"radius": 2}))
    assert main(["sample", "--config", cfg, "--seed", "5", "--out", str(tmp_path / "a")]) == 0
    assert main(["sample", "--config", cfg, "--seed", "5", "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "points.json").read_bytes()
    assert a == (tmp_path / "b" / "points.json").read_bytes()
    main(["sample", "--config", cfg, "--seed", "6", "--out", str(tmp_path / "c")])
    assert a != (tmp_path / "c" / "points.json").read_bytes()
    doc = json.loads(a)
    assert len(doc["points"]) > 0 and all(len(p) == 3 for p in doc["points"])


def test_sample_round_trips_floats(tmp_path):
    cfg = write_cfg(tmp_path, beta_doc(sample={"radius": 1}))
    main(["sample", "--config", cfg, "--out", str(tmp_path / "o")])
    text = (tmp_path / "o" / "points.json").read_text()
    for x in json.loads(text)["points"][0]:
        assert float(repr(x)) == x


def test_tessellate_three_points(tmp_path):
    pts = [[0, 0, 0.1], [1, 0, 0.2], [0, 1, 0.3]]
    cfg = write_cfg(tmp_path, beta_doc(tessellate={"points": pts}))
    assert main(["tessellate", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    t = Tessellation.from_json((tmp_path / "o" / "tessellation.json").read_text())
    assert len(t.cells) == 1 and sorted(t.cells[0]) == [0, 1, 2]


def test_experiment_rerun_byte_identical(tmp_path):
    doc = beta_doc(seed=3, experiment={"campaign": "clt", "replicates": 4, "windows": [1.5],
                                       "statistics": ["X0", "Y1"]},
                   tolerance={"min_replicates": 2})
    cfg = write_cfg(tmp_path, doc)
    for d in ("a", "b"):
        assert main(["experiment", "--config", cfg, "--out", str(tmp_path / d)]) == 0
    for f in ("records.jsonl", "records.csv", "summary.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert (tmp_path / "a" / "timing.json").exists()
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["config"]["seed"] == 3


# --- rendering -------------------------------------------------------------------

def planar(points):
    m = ModelParams.from_dict({"kind": "beta", "d": 3, "beta": 0})
    return regular_triangulation(PointSample.from_points(m, [(p[:2], p[2]) for p in points]))


def test_render_empty_is_frame_only():
    t = Tessellation(np.zeros((0, 2)), np.zeros(0), np.zeros((0, 3), dtype=int))
    svg = render_svg(t, WindowBox(2.0, 2))
    assert svg.count("<rect") == 1 and "<line" not in svg
    assert 'viewBox="-2 -2 4 4"' in svg
    assert svg.startswith("<?xml") and svg.rstrip().endswith("</svg>")


def test_render_single_triangle():
    t = planar([[0, 0, 0.1], [1, 0, 0.2], [0, 1, 0.3]])
    svg = render_svg(t, WindowBox(2.0, 2))
    assert svg.count("<line") == 3
    svg = render_svg(t, WindowBox(2.0, 2), Style(fill=True))
    assert svg.count("<polygon") == 1


def test_render_requires_planar():
    t = Tessellation(np.zeros((0, 3)), np.zeros(0), np.zeros((0, 4), dtype=int))
    with pytest.raises(UnsupportedDimensionError):
        render_svg(t, WindowBox(1.0, 3))


def test_render_clips_edges_like_shapely():
    rng = np.random.default_rng(4)
    pts = np.column_stack([rng.uniform(-3, 3, (60, 2)), rng.random(60)])
    t = planar(pts.tolist())
    box = sg.box(-1.5, -1.5, 1.5, 1.5)
    expected = 0
    for a, b in k_faces(t, 1):
        inter = sg.LineString([t.v[a], t.v[b]]).intersection(box)
        expected += (not inter.is_empty) and inter.length > 0
    svg = render_svg(t, WindowBox(1.5, 2))
    assert svg.count("<line") == expected
    nums = [float(x) for x in re.findall(r'[xy][12]="([-0-9.]+)"', svg)]
    assert max(abs(x) for x in nums) <= 1.5


def test_golden_demo(tmp_path):
    assert main(["render", "--config", str(GOLDEN / "demo.json"),
                 "--out", str(tmp_path)]) == 0
    assert (tmp_path / "tessellation.svg").read_bytes() == (GOLDEN / "demo.svg").read_bytes()


# --- result files ----------------------------------------------------------------

def test_write_zero_records(tmp_path):
    j, c = write_results([], tmp_path)
    assert j.read_text() == ""
    assert c.read_text() == "campaign,statistic,window,M,mean,variance,ks\n"


def test_mixed_versions_rejected(tmp_path):
    recs = [{"schema_version": 1, "campaign": "x"}, {"schema_version": 2, "campaign": "x"}]
    with pytest.raises(ValueError):
        write_results(recs, tmp_path)
    write_results(recs[:1], tmp_path)
    with pytest.raises(ValueError):
        write_results(recs[1:], tmp_path, append=True)


def test_csv_means_recompute_from_stream(tmp_path):
    rng = np.random.default_rng(7)
    recs = [{"schema_version": 1, "campaign": "window_statistics", "replicate": k,
             "values": {"2.0": {"X0": float(rng.normal(50, 7)), "Y1": float(rng.random())},
                        "4.0": {"X0": float(rng.normal(200, 14))}}}
            for k in range(25)]
    write_results(recs[:10], tmp_path)
    j, c = write_results(recs[10:], tmp_path, append=True)
    stream = read_records(j)
    assert len(stream) == 25
    rows = list(csv.DictReader(open(c)))
    assert len(rows) == 3
    for row in rows:
        xs = [r["values"][row["window"]][row["statistic"]] for r in stream]
        assert int(row["M"]) == 25
        assert abs(float(row["mean"]) - math.fsum(xs) / len(xs)) < 1e-12 * abs(np.mean(xs))
        assert float(row["variance"]) == pytest.approx(np.var(xs, ddof=1), rel=1e-12)
