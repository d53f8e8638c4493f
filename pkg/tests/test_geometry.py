import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import COEFFS_2D
from oracles import fd_geometry
from semibloch.errors import GapClosureError, UnsupportedDimensionError
from semibloch.geometry import (
    BandInterpolant,
    berry_curvature_plaquette,
    berry_curvature_sos,
    chern_number,
    curvature_and_moment,
    gauge_sensitivity,
    geometry_grid,
    hall_current,
    magnetic_moment_sos,
    randomize_gauge,
)
from semibloch.lattice import TWO_PI, FourierPotential, Lattice, PlaneWaveBasis, solve_fiber


@pytest.mark.parametrize("k", [(0.1, -0.2), (0.37, 0.05), (-0.3, 0.41)])
def test_sos_matches_finite_differences(potential_2d, k):
    basis = PlaneWaveBasis.from_cutoff(potential_2d.lattice, 4.0 + 1e-9)
    nmax = int(np.ceil(4.0)) + 1
    # the oracle uses the full index box, so compare on a converged basis instead of the same truncation
    big = PlaneWaveBasis.from_cutoff(potential_2d.lattice, 9.0)
    om = berry_curvature_sos(k, potential_2d, big, 1)
    mo = magnetic_moment_sos(k, potential_2d, big, 1)
    om_fd, mo_fd = fd_geometry(np.array(k), COEFFS_2D, potential_2d.lattice.dual_basis, 7, 1)
    assert np.allclose(om, om_fd, atol=1e-6 * max(1, np.abs(om_fd).max()))
    assert np.allclose(mo, mo_fd, atol=1e-6 * max(1, np.abs(mo_fd).max()))
    assert basis.size < big.size and nmax > 0


def test_antisymmetry(potential_2d, basis_2d):
    f = solve_fiber([0.2, 0.1], potential_2d, basis_2d)
    om, mo, grad = curvature_and_moment(f, 1)
    assert np.allclose(om, -om.T) and np.allclose(mo, -mo.T)
    assert abs(om[0, 1]) > 1e-3 and abs(mo[0, 1]) > 1e-4
    assert np.allclose(grad, np.sum(np.abs(f.band(1)) ** 2 * (f.k + basis_2d.g_vectors).T, axis=1))


def test_one_dimension_vanishes():
    V = FourierPotential.cosine_1d(0.2)
    basis = PlaneWaveBasis.for_bands(V.lattice, 2)
    om, mo, _ = curvature_and_moment(solve_fiber([0.1], V, basis), 1)
    assert om.shape == (1, 1) and om[0, 0] == 0 and mo[0, 0] == 0


@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_time_reversal_antisymmetry(potential_2d, f1, f2):
    basis = PlaneWaveBasis.for_bands(potential_2d.lattice, 1)
    k = np.array([f1, f2]) @ potential_2d.lattice.dual_basis
    a = berry_curvature_sos(k, potential_2d, basis, 1)[0, 1]
    b = berry_curvature_sos(-k, potential_2d, basis, 1)[0, 1]
    assert abs(a + b) <= 1e-8


def test_plaquette_converges_to_sos(grid_2d):
    field = grid_2d.plaquettes
    # the plaquette value sits at the plaquette centre
    om = grid_2d.curvature[..., 0, 1]
    centre = 0.25 * (om + np.roll(om, -1, 0) + np.roll(om, -1, 1) + np.roll(np.roll(om, -1, 0), -1, 1))
    err = np.abs(field.curvature - centre).max()
    assert err < 0.02 * np.abs(om).max()
    c, resid = chern_number(field)
    assert c == 0 and resid < 1e-6


def test_gauge_randomization(potential_2d, basis_2d):
    out = gauge_sensitivity(potential_2d, basis_2d, 1, (8, 8), np.random.default_rng(1))
    assert max(out.values()) < 1e-10


def test_randomize_gauge_changes_vectors(potential_2d, basis_2d):
    f = solve_fiber([0.1, 0.1], potential_2d, basis_2d, 3)
    g = randomize_gauge(f, np.random.default_rng(0))
    assert not np.allclose(f.eigenvectors, g.eigenvectors)
    assert np.allclose(np.abs(f.eigenvectors), np.abs(g.eigenvectors))


def test_hall_current_convention():
    assert np.allclose(hall_current(TWO_PI * 1, [1.0, 0.0]), -TWO_PI * np.array([0.0, 1.0]))
    with pytest.raises(UnsupportedDimensionError):
        hall_current(1.0, [1.0])


def test_gap_closure_raises():
    lat = Lattice.square()
    basis = PlaneWaveBasis.from_cutoff(lat, 4.0)
    with pytest.raises(GapClosureError):
        geometry_grid(FourierPotential.zero(lat), basis, 1, (6, 6))


def test_interpolant_matches_direct_solve(potential_2d, basis_2d, band_2d):
    rng = np.random.default_rng(5)
    k = rng.uniform(-0.5, 0.5, size=(6, 2)) @ potential_2d.lattice.dual_basis
    E, gE, om, mo, gmo = band_2d.evaluate(k)
    for i, kk in enumerate(k):
        f = solve_fiber(kk, potential_2d, basis_2d)
        o, m, g = curvature_and_moment(f, 1)
        assert abs(E[i] - f.energies[0]) < 1e-6
        assert np.allclose(gE[i], g, atol=1e-5)
        assert np.allclose(om[i], o, atol=1e-4 * max(1, np.abs(o).max()))
        assert np.allclose(mo[i], m, atol=1e-4 * max(1, np.abs(m).max()))


def test_interpolant_gradient_is_exact_derivative(band_2d):
    k = np.array([[0.13, -0.27]])
    h = 1e-5
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        fd = (band_2d.evaluate(k + e)[0] - band_2d.evaluate(k - e)[0]) / (2 * h)
        assert abs(fd[0] - band_2d.evaluate(k)[1][0, i]) < 1e-8
        fdm = (band_2d.evaluate(k + e)[3] - band_2d.evaluate(k - e)[3]) / (2 * h)
        assert np.allclose(fdm[0], band_2d.evaluate(k)[4][0, :, :, i], atol=1e-8)


def test_interpolant_periodic(band_2d, potential_2d):
    k = np.array([[0.1, 0.2]])
    G = potential_2d.lattice.dual_basis.sum(axis=0)
    a, b = band_2d.evaluate(k), band_2d.evaluate(k + G)
    for x, y in zip(a, b):
        assert np.allclose(x, y, atol=1e-12)


def test_plaquette_one_dimension_is_zero():
    V = FourierPotential.cosine_1d(0.2)
    basis = PlaneWaveBasis.for_bands(V.lattice, 2)
    fibers = [solve_fiber([k], V, basis) for k in np.linspace(0, 1, 8, endpoint=False)]
    assert np.all(berry_curvature_plaquette(fibers, 1) == 0)
