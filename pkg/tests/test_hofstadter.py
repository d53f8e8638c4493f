import numpy as np
import pytest

from oracles import diophantine_chern
from semibloch.errors import InvalidFluxError
from semibloch.hofstadter import hofstadter_chern, hofstadter_grid, hofstadter_matrix, magnetic_bz, tknn_chern


def test_flux_third_cherns():
    out = hofstadter_chern(1, 3, (24, 24))
    cherns = [c for c, _ in out]
    assert cherns == [1, -2, 1]
    assert sum(cherns) == 0
    assert max(res for _, res in out) < 1e-6


@pytest.mark.parametrize("p,q", [(1, 3), (2, 3), (1, 5), (2, 5), (3, 7)])
def test_tknn_matches_brute_force_oracle(p, q):
    assert tknn_chern(p, q) == diophantine_chern(p, q)


@pytest.mark.parametrize("p,q", [(2, 3), (1, 5), (2, 5)])
def test_numerical_cherns_match_tknn(p, q):
    out = hofstadter_chern(p, q, (24, 24))
    assert [c for c, _ in out] == tknn_chern(p, q)
    assert sum(c for c, _ in out) == 0


def test_matrix_hermitian_and_periodic():
    k = np.array([0.3, -1.1])
    H = hofstadter_matrix(1, 3, k)
    assert np.allclose(H, H.conj().T)
    for G in magnetic_bz(3):
        assert np.allclose(hofstadter_matrix(1, 3, k + G), H)


def test_half_flux_spectrum_symmetric():
    E, _ = hofstadter_grid(1, 2, (6, 6))
    assert np.allclose(np.sort(E, axis=-1), -np.sort(E, axis=-1)[..., ::-1], atol=1e-12)


def test_zero_flux_is_square_lattice_band():
    E, _ = hofstadter_grid(0, 1, (8, 8))
    k = np.arange(8) / 8 * 2 * np.pi
    expected = -2 * np.cos(k)[:, None] - 2 * np.cos(k)[None, :]
    assert np.allclose(E[..., 0], expected)


@pytest.mark.parametrize("p,q", [(2, 4), (1, 0), (1, 65)])
def test_invalid_flux(p, q):
    with pytest.raises(InvalidFluxError):
        hofstadter_matrix(p, q, [0.0, 0.0])
