import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectral_lab.ghost import (
    ds_eval,
    extend,
    geometry_constants,
    h1_norm_sq,
    h1_sandwich,
    s_eval,
    t_grid,
    verify_identities,
)
from spectral_lab.model import Grid, PotentialSpec, assemble, eigendecompose


@pytest.fixture(scope="module")
def sys99():
    p = PotentialSpec.power_law(2.0)
    return eigendecompose(assemble(Grid(1, 12.0, 1000), p), 99.0)


def test_s_eval_values():
    assert s_eval(4.0, 1.0) == pytest.approx(math.sinh(2) / 2)
    assert s_eval(4.0, 1.0) == pytest.approx(1.81343, abs=1e-5)
    assert s_eval(0.0, 0.7) == 0.7
    assert ds_eval(0.0, 3.0) == 1.0
    with pytest.raises(ValueError):
        s_eval(-1.0, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-12, 1e-6), st.floats(1e-6, 2.0))
def test_s_eval_series_branch_continuous(mu, t):
    # near the switch both branches agree to rounding
    exact = math.sinh(math.sqrt(mu) * t) / math.sqrt(mu) if mu > 0 else t
    assert s_eval(mu, t) == pytest.approx(exact, rel=1e-12, abs=1e-300)


def test_s_eval_odd():
    t = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(s_eval(2.5, t), -s_eval(2.5, -t), atol=0)


def test_t_grid_minimum():
    with pytest.raises(ValueError):
        t_grid(1.0, 32)
    assert t_grid(1.0).size >= 64


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_identities_random_f(sys99, seed):
    sub = sys99.subspace(99.0)
    assert sub.m == 50
    coeffs = np.random.default_rng(seed).standard_normal(sub.m)
    field = extend(sub, coeffs, 1.0)
    rep = verify_identities(field)
    assert rep.r1 <= 1e-12
    assert rep.r2 <= 1e-10
    assert rep.odd == 0.0


@pytest.mark.parametrize("rho", [0.5, 1.0, 2.0])
def test_sandwich(sys99, rho):
    sub = sys99.subspace(99.0)
    coeffs = np.random.default_rng(7).standard_normal(sub.m)
    rep = h1_sandwich(extend(sub, coeffs, rho, t_grid(rho)))
    assert rep.lower_slack >= -1e-6
    assert rep.upper_slack >= -1e-6


def test_sandwich_small_rho_limit(sys99):
    # one ground-state mode: ||F||^2_{H^1} / (2 rho ||f||^2) -> 1 as rho -> 0
    sub = sys99.subspace(1.5)
    ratios = []
    for rho in (0.1, 0.05, 0.025):
        rep = h1_sandwich(extend(sub, np.ones(1), rho))
        ratios.append(rep.h1 / rep.lower - 1)
    assert ratios[0] > ratios[1] > ratios[2] > 0
    # excess shrinks linearly in rho or faster
    assert ratios[2] / ratios[1] <= 0.5 + 0.05


def test_h1_norm_positive(sys99):
    sub = sys99.subspace(10.0)
    field = extend(sub, np.ones(sub.m), 0.5)
    assert h1_norm_sq(field) > 0


def test_extend_shape_errors(sys99):
    sub = sys99.subspace(10.0)
    with pytest.raises(ValueError):
        extend(sub, np.ones(sub.m + 1), 1.0)
    with pytest.raises(ValueError):
        extend(sub, np.ones(sub.m), 0.0)


def test_geometry_constants():
    p = PotentialSpec.power_law(2.0)
    g = geometry_constants(1.0, p, 0.2, 0.0, 2.5)
    assert g.side == 5
    assert g.theta == pytest.approx(0.04)
    assert g.R == pytest.approx(9 * math.e)
    assert g.R == pytest.approx(24.46, abs=0.01)
    big = geometry_constants(400.0, p, 0.2, 0.0, 2.5)
    assert big.theta == pytest.approx(0.04)
    assert big.side == 100
    g2 = geometry_constants(4.0, p, 0.2, 1.0, 1.0, d=2)
    assert g2.log_inv_theta == pytest.approx(2 * (2 * math.sqrt(2)) * 2 * math.log(5))
    assert g2.R == pytest.approx(9 * math.e * math.sqrt(2))
