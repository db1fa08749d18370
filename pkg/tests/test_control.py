import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectral_lab.control import (
    HeatState,
    SingularGramianError,
    cobs_bound,
    estimate_cobs,
    heat_propagate,
    log_cobs_bound,
    min_norm_control,
    power_form_exponent,
    pure_power_bound,
    time_exponent,
)
from spectral_lab.model import PotentialSpec
from spectral_lab.sensors import EquidistributedDecay, realize


@pytest.fixture(scope="module")
def setup(harmonic_sys):
    mask = realize(EquidistributedDecay(0.2), harmonic_sys.grid)
    full = mask.with_weights(np.ones(harmonic_sys.grid.size))
    return harmonic_sys, mask, full


def test_heat_propagation(harmonic_sys):
    g = harmonic_sys.grid
    x = g.points[:, 0]
    st0 = HeatState.from_function(harmonic_sys, np.exp(-x**2), 20.0)
    st1 = heat_propagate(st0, 0.5)
    np.testing.assert_allclose(st1.coeffs, st0.coeffs * np.exp(-0.5 * st0.eigenvalues))
    assert st1.t == 0.5 and st1.norm() < st0.norm()
    with pytest.raises(ValueError):
        heat_propagate(st0, -1.0)


def test_full_mask_m1_closed_form(setup):
    sys, _, full = setup
    lam1 = sys.eigenvalues[0]
    for T in (0.3, 1.0, 4.0):
        est = estimate_cobs(sys, full, T, 1.5)
        assert est.m == 1
        exact = math.exp(-2 * lam1 * T) * 2 * lam1 / (1 - math.exp(-2 * lam1 * T))
        assert est.cobs_sq == pytest.approx(exact, rel=1e-12)


def test_full_mask_diagonal_bound(setup):
    sys, _, full = setup
    for T in (0.2, 1.0):
        est = estimate_cobs(sys, full, T, 20.0)
        lmax = sys.subspace(20.0).eigenvalues.max()
        assert est.cobs_sq <= 2 * lmax / (1 - math.exp(-2 * lmax * T)) * (1 + 1e-12)


def test_cobs_decreasing_in_T(setup):
    sys, mask, _ = setup
    Ts = [0.1, 0.25, 0.5, 1, 2, 4, 8]
    c = [estimate_cobs(sys, mask, T, 20.0).cobs for T in Ts]
    assert np.all(np.diff(c) < 0)


def test_min_norm_control_m1_exact(setup):
    sys, _, full = setup
    res = min_norm_control(sys, full, 1.0, 1.5, np.array([2.0]))
    lam1 = sys.eigenvalues[0]
    b = (1 - math.exp(-2 * lam1)) / (2 * lam1)
    assert res.coeffs[0] == pytest.approx(-math.exp(-lam1) * 2.0 / b, rel=1e-13)
    assert abs(res.final_state[0]) <= 1e-15


def test_min_norm_control_duality(setup):
    sys, mask, _ = setup
    T, lam = 0.5, 20.0
    est = estimate_cobs(sys, mask, T, lam)
    rng = np.random.default_rng(11)
    for _ in range(50):
        g = rng.standard_normal(est.m)
        res = min_norm_control(sys, mask, T, lam, g)
        assert np.linalg.norm(res.final_state) <= 1e-8 * np.linalg.norm(g)
        assert res.cost <= est.cobs * np.linalg.norm(g) * (1 + 1e-10)
    worst = min_norm_control(sys, mask, T, lam, est.direction)
    assert worst.cost == pytest.approx(est.cobs, rel=1e-8)


def test_control_trajectory_lives_on_mask(setup):
    sys, mask, _ = setup
    res = min_norm_control(sys, mask, 1.0, 10.0, sys.grid.points[:, 0] * 0 + 1.0)
    u = res.trajectory(0.5)
    assert np.all(u[mask.weights == 0] == 0)
    with pytest.raises(ValueError):
        res.trajectory(2.0)


def test_singular_gramian(setup):
    sys, mask, _ = setup
    empty = mask.with_weights(np.zeros(sys.grid.size))
    with pytest.raises(SingularGramianError):
        estimate_cobs(sys, empty, 1.0, 10.0)


def test_bound_rejects_inadmissible():
    p = PotentialSpec.power_law(2.0)
    with pytest.raises(ValueError, match="s >= 1, bound inapplicable"):
        cobs_bound(1.0, 0.2, 0.7, p)
    assert math.isfinite(log_cobs_bound(1.0, 0.2, 0.5, p))
    assert cobs_bound(1e-3, 0.2, 0.0, p) == math.inf


def test_bound_decreasing_in_T():
    p = PotentialSpec.power_law(2.0)
    vals = [log_cobs_bound(T, 0.2, 0.0, p) for T in (0.5, 1, 2, 4)]
    assert np.all(np.diff(vals) < 0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.5, 8.0), st.floats(0.0, 0.999))
def test_exponent_identity(tau, frac):
    alpha = frac * tau / 3
    assert power_form_exponent(alpha, tau) == pytest.approx(time_exponent(alpha, tau), rel=1e-12)


def test_pure_power_form():
    assert pure_power_bound(1.0, 0.0, 2.0, 1.0) == pytest.approx(math.e)
    with pytest.raises(ValueError):
        time_exponent(1.0, 2.0)
