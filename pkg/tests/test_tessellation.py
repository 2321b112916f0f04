import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from shapely.geometry import LineString, Polygon, box

from betadelaunay.geometry import regular_triangulation
from betadelaunay.point_process import ModelParams, PointSample, SamplingWindow
from betadelaunay.stabilization import stabilized_tessellation
from betadelaunay.tessellation import (
    StabilizationError,
    Tessellation,
    WindowBox,
    cell_signature,
    center_ids,
    clipped_simplex_volume,
    count_faces_in_window,
    enumerate_k_faces,
    face_center,
    k_faces,
    restrict_to_ball,
    skeleton_volume_in_window,
)

from conftest import BETA0, GAUSS3
from oracles import euler_characteristic


def tess(v, cells, h=None, R=None):
    v = np.asarray(v, dtype=float)
    return Tessellation(v, np.zeros(len(v)) if h is None else h, cells, R)


TWO = tess([(0, 0), (1, 0), (0, 1), (-1, 0)], [(0, 1, 2), (0, 2, 3)])


def random_tess(seed, n=20, model=BETA0):
    rng = np.random.default_rng(seed)
    v = rng.uniform(-3, 3, size=(n, model.dim))
    h = rng.uniform(0, 4, n)
    return regular_triangulation(PointSample(model, SamplingWindow.box([-3] * model.dim,
                                                                      [3] * model.dim), v, h))


# --- faces ------------------------------------------------------------------------

def test_face_enumeration_examples():
    single = tess([(0, 0), (1, 0), (0, 1)], [(0, 1, 2)])
    assert len(enumerate_k_faces(single, 1)) == 3
    assert len(enumerate_k_faces(TWO, 1)) == 5
    with pytest.raises(ValueError):
        enumerate_k_faces(TWO, 3)
    with pytest.raises(ValueError):
        enumerate_k_faces(TWO, -1)


@pytest.mark.parametrize("seed", range(5))
def test_face_incidence_double_count(seed):
    t = random_tess(seed)
    for k in range(3):
        faces, counts = k_faces(t, k, return_counts=True)
        assert math.comb(3, k + 1) * len(t) == counts.sum()
        brute = {tuple(sorted(f)) for c in t.cells for f in itertools.combinations(c, k + 1)}
        assert enumerate_k_faces(t, k) == brute


def test_face_center_examples():
    t = tess([(1, 0), (0, 1), (0, 0)], [(0, 1, 2)])
    assert face_center((0, 1), t).tolist() == [0, 1]
    assert face_center((1, 2), t).tolist() == [0, 0]
    assert face_center((0,), t).tolist() == [1, 0]


@given(st.integers(0, 10_000))
def test_face_center_is_lexicographic_min(seed):
    t = random_tess(seed % 50, 12)
    for f in enumerate_k_faces(t, 1):
        c = face_center(f, t)
        assert tuple(c) == min(tuple(t.v[i]) for i in f)


# --- counts -------------------------------------------------------------------------

def test_count_examples():
    assert count_faces_in_window(TWO, 1, WindowBox(0.5, 2)) == 2
    empty = tess(np.zeros((0, 2)), np.zeros((0, 3), dtype=int))
    assert count_faces_in_window(empty, 1, WindowBox(1, 2)) == 0


@pytest.mark.parametrize("seed", range(5))
def test_euler_count_over_covering_window(seed):
    t = random_tess(seed, 25)
    w = WindowBox(10, 2)
    X = [count_faces_in_window(t, k, w) for k in range(3)]
    # the finite complex triangulates a disk
    assert X[0] - X[1] + X[2] == euler_characteristic([tuple(c) for c in t.cells]) == 1


def test_planar_edge_identity_on_samples():
    for seed in range(10):
        t = random_tess(seed, 30)
        _, counts = k_faces(t, 1, return_counts=True)
        assert counts.max() <= 2
        assert 3 * len(t) == 2 * np.sum(counts == 2) + np.sum(counts == 1)


def test_counts_additive_and_monotone():
    t = random_tess(1, 60)
    for k in range(3):
        prev = -1
        for n in (0.5, 1.0, 2.0, 3.0):
            c = count_faces_in_window(t, k, WindowBox(n, 2))
            assert c >= prev
            prev = c
    # additivity over the half-open split of a box at x = 0
    faces = k_faces(t, 1)
    ctr = t.v[center_ids(t, faces)]
    inside = np.all(np.abs(ctr) <= 2, axis=1)
    left = inside & (ctr[:, 0] < 0)
    right = inside & (ctr[:, 0] >= 0)
    assert left.sum() + right.sum() == count_faces_in_window(t, 1, WindowBox(2, 2))


def test_certified_window_guard():
    t = random_tess(2)
    with pytest.raises(StabilizationError):
        count_faces_in_window(t, 0, WindowBox(1, 2), certified=True)
    t2 = Tessellation(t.v, t.h, t.cells, stabilized_radius=1.5)
    assert count_faces_in_window(t2, 0, WindowBox(1, 2), certified=True) >= 0
    with pytest.raises(StabilizationError):
        skeleton_volume_in_window(t2, 1, WindowBox(1.1, 2), certified=True)


# --- volumes --------------------------------------------------------------------------

def test_volume_examples():
    seg = np.array([[0.0, 0.0], [2.0, 0.0]])
    assert clipped_simplex_volume(seg, WindowBox(1, 2)) == pytest.approx(1.0)
    tri = tess([(0, 0), (2, 0), (2, 2)], [(0, 1, 2)])
    w = WindowBox(0.5, 2)
    shifted = Tessellation(tri.v - 0.5, tri.h, tri.cells)
    assert skeleton_volume_in_window(shifted, 2, w) == pytest.approx(0.5)


def test_skeleton_k0_equals_vertex_count():
    t = random_tess(3, 40)
    for n in (0.5, 1, 2):
        w = WindowBox(n, 2)
        assert skeleton_volume_in_window(t, 0, w) == count_faces_in_window(t, 0, w)


@pytest.mark.parametrize("seed", range(4))
def test_clipped_areas_match_shapely(seed):
    t = random_tess(seed, 40)
    w = WindowBox(1.5, 2)
    ref_area = sum(Polygon(t.v[c]).intersection(box(-1.5, -1.5, 1.5, 1.5)).area for c in t.cells)
    assert skeleton_volume_in_window(t, 2, w) == pytest.approx(ref_area, rel=1e-10)
    ref_len = 0.0
    for a, b in k_faces(t, 1):
        ref_len += LineString([t.v[a], t.v[b]]).intersection(box(-1.5, -1.5, 1.5, 1.5)).length
    assert skeleton_volume_in_window(t, 1, w) == pytest.approx(ref_len, rel=1e-10)


def test_stabilized_cells_cover_box():
    _, t = stabilized_tessellation(BETA0, 6 * math.sqrt(2) + 1e-6, 9)
    w = WindowBox(6, 2)
    assert skeleton_volume_in_window(t, 2, w, certified=True) == pytest.approx(144.0, rel=1e-9)


def test_cells_cover_box_4d():
    B4 = ModelParams("beta", 4, 0.0)
    _, t = stabilized_tessellation(B4, 3 * math.sqrt(3) + 1e-6, 2)
    w = WindowBox(3, 3)
    assert skeleton_volume_in_window(t, 3, w, certified=True) == pytest.approx(216.0, rel=1e-9)


def test_skeleton_volume_monotone():
    t = random_tess(5, 60)
    for k in (1, 2):
        vals = [skeleton_volume_in_window(t, k, WindowBox(n, 2)) for n in (0.5, 1, 1.5, 2.5)]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


# --- restriction, serialisation ------------------------------------------------------

def test_restrict_to_ball():
    t = random_tess(6, 40)
    assert restrict_to_ball(t, 1e6).cell_set() == t.cell_set()
    c = t.v[t.cells[0]].mean(axis=0)
    shifted = Tessellation(t.v - c, t.h, t.cells)
    assert len(restrict_to_ball(shifted, 1e-9)) == 1
    with pytest.raises(ValueError):
        restrict_to_ball(t, 0.0)


def test_signature_compares_cell_sets():
    t = random_tess(7, 30)
    perm = np.random.default_rng(0).permutation(len(t.h))
    inv = np.argsort(perm)
    t2 = Tessellation(t.v[perm], t.h[perm], inv[t.cells])
    assert cell_signature(t) == cell_signature(t2)
    assert cell_signature(t) != cell_signature(t.with_cells(t.cells[1:]))


def test_json_roundtrip():
    _, t = stabilized_tessellation(GAUSS3, 3.0, 4)
    t2 = Tessellation.from_json(t.to_json())
    assert np.array_equal(t.v, t2.v) and np.array_equal(t.h, t2.h)
    assert np.array_equal(t.cells, t2.cells)
    assert t2.stabilized_radius == t.stabilized_radius
    doc = json.loads(t.to_json())
    doc["schema_version"] = 99
    with pytest.raises(ValueError):
        Tessellation.from_json(json.dumps(doc))
