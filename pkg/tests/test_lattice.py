import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import free_bands, perturbative_edge_gap
from semibloch.errors import ConfigError, GapClosureError
from semibloch.lattice import (
    TWO_PI,
    FourierPotential,
    Lattice,
    PlaneWaveBasis,
    band_energies,
    dump_potential,
    load_potential,
    min_gap,
    solve_fiber,
)


def test_dual_lattice_pairing():
    lat = Lattice([[1.0, 0.3], [0.2, 2.0]])
    assert np.allclose(lat.basis @ lat.dual_basis.T, TWO_PI * np.eye(2), atol=1e-13)


def test_unsupported_dimension():
    with pytest.raises(ConfigError):
        Lattice(np.eye(3))


def test_reality_condition_enforced(square):
    with pytest.raises(ConfigError):
        FourierPotential(square, {(1, 0): 0.3})
    with pytest.raises(ConfigError):
        FourierPotential(square, {(1, 0): 0.3, (-1, 0): 0.2})


def test_basis_closed_under_inversion(square):
    basis = PlaneWaveBasis.from_cutoff(square, 3.5)
    keys = {tuple(r) for r in basis.indices.tolist()}
    assert all(tuple(-x for x in k) in keys for k in keys)
    assert np.all(np.linalg.norm(basis.g_vectors, axis=1) <= 3.5 + 1e-12)


@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_free_bands_2d(f1, f2):
    lat = Lattice([[2.0, 0.0], [0.7, 1.5]])
    basis = PlaneWaveBasis.from_cutoff(lat, 12.0)
    k = np.array([f1, f2]) @ lat.dual_basis
    E = band_energies(k[None], FourierPotential.zero(lat), basis, 6)
    assert np.allclose(E, free_bands(k, basis.indices, lat.dual_basis, 6), atol=1e-12, rtol=0)


def test_free_bands_1d():
    lat = Lattice.chain()
    basis = PlaneWaveBasis.from_cutoff(lat, 10.0)
    k = np.linspace(-0.5, 0.5, 41)[:, None]
    E = band_energies(k, FourierPotential.zero(lat), basis, 5)
    assert np.allclose(E, free_bands(k, basis.indices, lat.dual_basis, 5), atol=1e-12, rtol=0)


@pytest.mark.parametrize("v", [0.02, 0.05, -0.05])
def test_perturbative_gap(v):
    V = FourierPotential.cosine_1d(v)
    basis = PlaneWaveBasis.for_bands(V.lattice, 4)
    E = band_energies(np.array([[0.5]]), V, basis, 2)[0]
    assert abs((E[1] - E[0]) / perturbative_edge_gap(v) - 1) < 0.05


@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.integers(-1, 1), st.integers(-1, 1))
def test_band_periodicity(potential_2d, f1, f2, m1, m2):
    lat = potential_2d.lattice
    basis = PlaneWaveBasis.for_bands(lat, 4)
    k = np.array([f1, f2]) @ lat.dual_basis
    G = np.array([m1, m2]) @ lat.dual_basis
    E = band_energies(np.stack([k, k + G]), potential_2d, basis, 4)
    assert np.allclose(E[0], E[1], atol=1e-9)


def test_fiber_residual_and_phase(potential_2d):
    basis = PlaneWaveBasis.for_bands(potential_2d.lattice, 2)
    f = solve_fiber([0.1, -0.2], potential_2d, basis, 4)
    for n in range(4):
        u = f.eigenvectors[:, n]
        assert abs(np.linalg.norm(u) - 1) < 1e-12
        pivot = u[np.argmax(np.abs(u))]
        assert abs(pivot.imag) < 1e-12 and pivot.real > 0
    assert np.all(np.diff(f.energies) >= 0)


def test_min_gap_detects_degeneracy():
    V = FourierPotential.zero(Lattice.chain())
    basis = PlaneWaveBasis.from_cutoff(V.lattice, 5.0)
    with pytest.raises(GapClosureError):
        min_gap(1, V, basis, np.linspace(-0.5, 0.5, 11)[:, None])
    Vc = FourierPotential.cosine_1d(0.2)
    assert min_gap(1, Vc, basis, np.linspace(-0.5, 0.5, 11)[:, None]) > 0.35


def test_potential_file_roundtrip(tmp_path, potential_2d):
    path = tmp_path / "v.txt"
    dump_potential(potential_2d, path)
    V = load_potential(path)
    assert np.allclose(V.lattice.basis, potential_2d.lattice.basis)
    assert V.coefficients.keys() == potential_2d.coefficients.keys()
    for key, c in V.coefficients.items():
        assert c == potential_2d.coefficients[key]
    y = np.random.default_rng(0).normal(size=(10, 2))
    assert np.allclose(V.value(y), potential_2d.value(y))


def test_missing_potential_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_potential(tmp_path / "absent.txt")
