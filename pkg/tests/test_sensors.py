import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectral_lab.blob import read_blob
from spectral_lab.model import Grid
from spectral_lab.sensors import (
    BallUnion,
    Cone,
    EquidistributedDecay,
    ThickDecay,
    cell_measures,
    export_blob,
    export_csv,
    realize,
    total_measure,
    verify_cells,
)


def test_equidistributed_center_ball():
    mask = realize(EquidistributedDecay(0.4, 0.0), Grid(1, 5.0, 1001))
    j = mask.cells.find([0])
    assert mask.cells.radius[j] == pytest.approx(0.4)
    assert mask.cells.center[j, 0] == pytest.approx(0.0)


def test_radius_formulas():
    assert EquidistributedDecay(0.25, 1.0).radius([2])[0] == pytest.approx(0.015625)
    assert EquidistributedDecay(0.25, 1.0).radius([0, 2])[0] == pytest.approx(0.015625)
    assert BallUnion(1.0).radius([3])[0] == pytest.approx(0.0625)
    assert ThickDecay(1.0, 0.5, 1.0).fraction([2])[0] == pytest.approx(0.125)
    # decay in the first axis only
    assert EquidistributedDecay(0.25, 1.0, decay_axes=1).radius([[0, 5]])[0] == pytest.approx(0.25)


@pytest.mark.parametrize("bad", [0.0, 0.5, 0.7, -0.1])
def test_delta_range(bad):
    with pytest.raises(ValueError):
        EquidistributedDecay(bad)


def test_box_too_small():
    with pytest.raises(ValueError):
        realize(EquidistributedDecay(0.2), Grid(1, 1.0, 100))


def test_weights_in_unit_interval_and_balls_inside_cells():
    for spec in (EquidistributedDecay(0.3, 0.5, "random", seed=9), BallUnion(0.5)):
        mask = realize(spec, Grid(2, 4.0, 121))
        assert mask.weights.min() >= 0 and mask.weights.max() <= 1
        c = mask.cells
        inside = np.abs(c.center - c.k) + c.radius[:, None] <= 0.5 + 1e-12
        assert np.all(inside)


def test_center_mask_passes_and_zeroed_weight_fails():
    mask = realize(EquidistributedDecay(0.2, 0.0), Grid(1, 8.0, 1601))
    rep = verify_cells(mask)
    assert rep.all_resolved_pass
    j = mask.cells.find([1])
    x = mask.grid.points[:, 0]
    w = mask.weights.copy()
    w[np.abs(x - 1.0) < 0.05] = 0.0
    bad = verify_cells(mask.with_weights(w))
    assert j in bad.failures.tolist()
    assert len(bad.failures) == 1


def test_thick_measure_per_cell():
    spec = ThickDecay(1.0, 0.5, 0.5, seed=3)
    mask = realize(spec, Grid(1, 6.0, 1201))
    rep = verify_cells(mask)
    assert rep.all_resolved_pass
    need = spec.fraction(mask.cells.k) * spec.rho
    assert np.all(cell_measures(mask) >= need - 1e-12)


def test_thick_rho_cells_2d():
    spec = ThickDecay(2.0, 0.6, 0.0, seed=1)
    mask = realize(spec, Grid(2, 5.0, 101))
    assert verify_cells(mask).all_resolved_pass
    assert np.all(np.abs(mask.cells.k) <= 2)


def test_unresolved_cells_flagged():
    mask = realize(EquidistributedDecay(0.25, 1.0), Grid(1, 6.0, 201))
    assert mask.unresolved_fraction > 0
    assert len(mask.unresolved) == int(np.sum(~mask.cells.resolved))


def test_total_measure_trivial():
    g = Grid(2, 3.0, 29)
    mask = realize(EquidistributedDecay(0.2), g)
    ones = mask.with_weights(np.ones(g.size))
    assert total_measure(ones) == pytest.approx((g.n * g.h) ** 2)


def test_ball_union_measure_converges():
    vals = [total_measure(realize(BallUnion(1.0), Grid(1, L, int(400 * L)))) for L in (4.0, 8.0, 16.0)]
    assert abs(vals[2] - vals[1]) < abs(vals[1] - vals[0])
    # the full union has measure 1 + 2 * sum_k 2^-k = 3
    assert abs(vals[2] - 3.0) < abs(vals[0] - 3.0)
    assert abs(vals[2] - 3.0) < 0.01


def test_alpha_zero_measure_linear():
    vals = [total_measure(realize(EquidistributedDecay(0.2), Grid(1, L, int(400 * L) - 1)))
            for L in (4.5, 8.5, 16.5)]
    per_cell = np.diff(vals) / np.diff([9, 17, 33])
    np.testing.assert_allclose(per_cell, 0.4, rtol=1e-2)


def test_cone_1d_and_2d():
    g = Grid(1, 5.0, 101)
    m = realize(Cone(2.0, (1,)), g)
    x = g.points[:, 0]
    assert np.all(m.weights[x < 0] == 0)
    assert np.all(m.weights[x > 2.2] == 1)
    c = Cone(1.0, half_width=math.pi / 6, direction=math.pi / 2)
    assert c.contains(np.array([[0.0, 3.0], [3.0, 0.0], [0.0, 0.5]])).tolist() == [True, False, False]


@settings(max_examples=15, deadline=None)
@given(st.floats(0.05, 0.3), st.floats(0.01, 0.15), st.floats(0.0, 1.5))
def test_mask_monotone_in_delta(d1, extra, alpha):
    g = Grid(1, 5.0, 400)
    a = realize(EquidistributedDecay(d1, alpha), g)
    b = realize(EquidistributedDecay(min(d1 + extra, 0.49), alpha), g)
    assert np.all(b.weights >= a.weights)


def test_seeded_reproducible():
    g = Grid(2, 4.0, 81)
    s = EquidistributedDecay(0.2, 0.0, "random", seed=17)
    np.testing.assert_array_equal(realize(s, g).weights, realize(s, g).weights)
    t = ThickDecay(1.0, 0.4, seed=5)
    np.testing.assert_array_equal(realize(t, g).weights, realize(t, g).weights)


def test_export(tmp_path):
    g = Grid(1, 4.0, 201)
    mask = realize(EquidistributedDecay(0.2), g)
    path = export_csv(mask, tmp_path / "cells.csv")
    lines = path.read_text().splitlines()
    assert lines[0].startswith("k1,radius,center1,measure")
    assert len(lines) == 1 + len(mask.cells)
    meta, arrays = read_blob(export_blob(mask, tmp_path / "m.splb"), kind="sensor_mask")
    np.testing.assert_array_equal(arrays["weights"].ravel(), mask.weights)
    assert meta["spec"]["delta"] == 0.2
