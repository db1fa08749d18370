import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectral_lab.model import (
    AssemblyError,
    Eigensystem,
    Grid,
    PotentialSpec,
    assemble,
    counting_bound,
    counting_bound_exponent,
    counting_function,
    eigendecompose,
    localization_halfwidth,
    tensor_compose,
)
from spectral_lab.numerics import SymTridiag


def test_grid_geometry():
    g = Grid(2, 3.0, 5)
    assert g.h == pytest.approx(1.0)
    assert g.weight == pytest.approx(1.0)
    assert g.points.shape == (25, 2)
    # C-order: the last axis runs fastest
    np.testing.assert_allclose(g.points[1] - g.points[0], [0.0, 1.0])


def test_grid_rejects_bad_input():
    with pytest.raises(ValueError):
        Grid(3, 1.0, 10)
    with pytest.raises(ValueError):
        Grid(1, -1.0, 10)


def test_potential_values():
    p = PotentialSpec.power_law(2.0)
    np.testing.assert_allclose(p(np.array([[3.0]])), [9.0])
    a = PotentialSpec.anisotropic(2.0, 1)
    np.testing.assert_allclose(a(np.array([[2.0, 5.0]])), [4.0])
    with pytest.raises(ValueError):
        PotentialSpec.power_law(-1.0)


def test_potential_descriptor_roundtrip():
    p = PotentialSpec.anisotropic(4.0, 1)
    q = PotentialSpec.from_descriptor(p.descriptor())
    assert q.descriptor() == p.descriptor()


def test_halfwidth_formula():
    p = PotentialSpec.power_law(2.0)
    assert localization_halfwidth(1.0, p, 2.0) == pytest.approx(2 * math.sqrt(3) + 2)
    assert localization_halfwidth(1.0, p, 1.0) == pytest.approx(math.sqrt(3) + 2)


def test_assemble_1d_is_tridiagonal(harmonic):
    ham = assemble(Grid(1, 5.0, 50), harmonic)
    assert isinstance(ham.matrix, SymTridiag)


def test_harmonic_ground_state(harmonic):
    sys = eigendecompose(assemble(Grid(1, 10.0, 1500), harmonic), 2.0)
    assert abs(sys.eigenvalues[0] - 1) <= 1e-4


def test_harmonic_normalization_and_residual(harmonic_sys, harmonic):
    g = harmonic_sys.grid
    V = harmonic_sys.vectors
    np.testing.assert_allclose(g.inner(V, V), np.eye(V.shape[1]), atol=1e-10)
    res = harmonic_sys.residuals(assemble(g, harmonic))
    assert res.max() <= 1e-8 * harmonic_sys.eigenvalues.max()


def test_refinement_order(harmonic):
    def err(n):
        s = eigendecompose(assemble(Grid(1, 12.0, n), harmonic), 20.0)
        return np.abs(s.eigenvalues[:10] - (2 * np.arange(10) + 1))

    e1, e2 = err(1000), err(2001)  # h halves exactly
    ratio = e1 / e2
    assert np.all((ratio >= 3.5) & (ratio <= 4.5))


def test_domain_saturation(harmonic):
    lam_max = 20.0
    L = localization_halfwidth(lam_max, harmonic, 2.0)
    h = 0.02
    n1 = int(round(2 * L / h)) - 1
    n2 = int(round(2 * (L + 3) / h)) - 1
    a = eigendecompose(assemble(Grid(1, L, n1), harmonic), lam_max, buffer=0.0)
    b = eigendecompose(assemble(Grid(1, L + 3, n2), harmonic), lam_max, buffer=0.0)
    k = a.count(lam_max)
    assert np.max(np.abs(a.eigenvalues[:k] - b.eigenvalues[:k]) / b.eigenvalues[:k]) <= 1e-8


def test_counting_function(harmonic_sys):
    assert counting_function(harmonic_sys, 10.0) == 5
    assert counting_function(harmonic_sys, 0.5) == 0
    with pytest.raises(ValueError):
        counting_function(harmonic_sys, 1e6)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.5, 40.0), st.floats(0.5, 40.0))
def test_counting_monotone(harmonic_sys, a, b):
    lo, hi = sorted((a, b))
    assert counting_function(harmonic_sys, lo) <= counting_function(harmonic_sys, hi)


def test_counting_bound_zero_below_potential():
    # a potential that sits above lam + 1 everywhere on the box
    p = PotentialSpec.two_sided(1.0, 2.0, 1.0, 2.0, lambda x: np.full(len(x), 100.0))
    assert counting_bound(10.0, p, Grid(1, 5.0, 101)) == 0.0


def test_counting_bound_monotone_in_c1():
    grid = Grid(1, 10.0, 2000)
    p1 = PotentialSpec.two_sided(1.0, 2.0, 1.0, 2.0, lambda x: np.linalg.norm(x, axis=1) ** 2)
    p2 = PotentialSpec.two_sided(2.0, 2.0, 2.0, 2.0, lambda x: 2 * np.linalg.norm(x, axis=1) ** 2)
    assert counting_bound(16.0, p2, grid) < counting_bound(16.0, p1, grid)


def test_counting_bound_closed_form():
    # integral of (mu - x^2)_+^{3/2} over R equals (3 pi / 8) mu^2
    p = PotentialSpec.power_law(2.0)
    grid = Grid(1, 12.0, 24001)
    for lam in (4.0, 16.0, 64.0):
        assert counting_bound(lam, p, grid) == pytest.approx(3 * math.pi / 8 * (lam + 1) ** 2, rel=1e-5)


def test_counting_bound_slope_4_64():
    p = PotentialSpec.power_law(2.0)
    grid = Grid(1, 10.0, 4000)
    lams = np.geomspace(4, 64, 17)
    vals = [counting_bound(x, p, grid) for x in lams]
    slope = np.polyfit(np.log(lams), np.log(vals), 1)[0]
    assert counting_bound_exponent(p, 1) == 2.0
    assert abs(slope - 2.0) <= 0.05, f"slope {slope:.4f}"


def test_counting_ratio_bounded(harmonic_sys, harmonic):
    ratios = [counting_function(harmonic_sys, x) / counting_bound(x, harmonic, harmonic_sys.grid)
              for x in np.linspace(4, 40, 10)]
    assert max(ratios) < 1.0


def test_tensor_compose_matches_direct():
    g1 = Grid(1, 4.0, 40)
    h = PotentialSpec.power_law(2.0)
    s1 = eigendecompose(assemble(g1, h), 60.0)
    s2 = eigendecompose(assemble(g1, PotentialSpec.free()), 60.0)
    comp = tensor_compose(s1, s2, 30.0)
    direct = eigendecompose(assemble(Grid(2, 4.0, 40), PotentialSpec.anisotropic(2.0, 1)), 30.0,
                            buffer=0.0)
    k = min(len(comp), len(direct), 20)
    np.testing.assert_allclose(comp.eigenvalues[:k], direct.eigenvalues[:k], rtol=1e-6)
    # product count by enumeration
    brute = sum(1 for a in s1.eigenvalues for b in s2.eigenvalues if a + b <= 30.0)
    assert comp.count(30.0) == brute
    res = comp.residuals(assemble(Grid(2, 4.0, 40), PotentialSpec.anisotropic(2.0, 1)))
    assert res.max() <= 1e-8 * 30


def test_tensor_compose_incomplete_level():
    g1 = Grid(1, 4.0, 30)
    s1 = eigendecompose(assemble(g1, PotentialSpec.power_law(2.0)), 10.0)
    s2 = eigendecompose(assemble(g1, PotentialSpec.free()), 10.0)
    with pytest.raises(ValueError):
        tensor_compose(s1, s2, 1e4)


def test_assembly_rejects_unbounded_box():
    with pytest.raises((AssemblyError, ValueError)):
        assemble(Grid(1, 1e200, 10), PotentialSpec.power_law(4.0))


def test_eigensystem_blob_roundtrip(tmp_path, harmonic_sys):
    path = harmonic_sys.save(tmp_path / "e.splb")
    back = Eigensystem.load(path)
    np.testing.assert_array_equal(back.eigenvalues, harmonic_sys.eigenvalues)
    np.testing.assert_array_equal(back.vectors, harmonic_sys.vectors)
    assert back.threshold == harmonic_sys.threshold
