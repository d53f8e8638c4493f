from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from semibloch.fields import Cosine, ExternalFields, GaussianPolynomial, ScalarField, WindowedPolynomial
from semibloch.geometry import BandInterpolant, geometry_grid
from semibloch.lattice import FourierPotential, Lattice, PlaneWaveBasis
from semibloch.wigner import PeriodicObservable

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"

# V(y) with a complex (1, 1) coefficient: real-valued, no inversion symmetry
COEFFS_2D = {
    (1, 0): 0.3, (-1, 0): 0.3,
    (0, 1): 0.2, (0, -1): 0.2,
    (1, 1): 0.25 * np.exp(0.7j), (-1, -1): 0.25 * np.exp(-0.7j),
}
# same magnitudes with real coefficients: inversion symmetric
COEFFS_2D_EVEN = {key: abs(c) for key, c in COEFFS_2D.items()}


@pytest.fixture(scope="session")
def square():
    return Lattice.square()


@pytest.fixture(scope="session")
def potential_2d(square):
    return FourierPotential(square, COEFFS_2D)


@pytest.fixture(scope="session")
def potential_2d_even(square):
    return FourierPotential(square, COEFFS_2D_EVEN)


@pytest.fixture(scope="session")
def basis_2d(square):
    return PlaneWaveBasis.for_bands(square, 1)


@pytest.fixture(scope="session")
def grid_2d(potential_2d, basis_2d):
    return geometry_grid(potential_2d, basis_2d, 1, (24, 24))


@pytest.fixture(scope="session")
def band_2d(grid_2d):
    return BandInterpolant(grid_2d)


@pytest.fixture(scope="session")
def fields_2d():
    """Windowed uniform ``B = 0.5`` (symmetric gauge) and a windowed force plus a cosine."""
    win = dict(center=[0.0, 0.0], lower=[-20.0, -20.0], upper=[20.0, 20.0], ramp=[5.0, 5.0])
    phi = ScalarField(2, [WindowedPolynomial([((1, 0), -0.3), ((0, 1), -0.1)], **win), Cosine(0.05, [0.3, 0.2])])
    A = [
        ScalarField(2, [WindowedPolynomial([((0, 1), -0.25)], **win)]),
        ScalarField(2, [WindowedPolynomial([((1, 0), 0.25)], **win)]),
    ]
    return ExternalFields(2, phi, A)


@pytest.fixture(scope="session")
def cosine_1d():
    return FourierPotential.cosine_1d(0.2)


@pytest.fixture(scope="session")
def slope_fields_1d():
    return ExternalFields(1, ScalarField(1, [WindowedPolynomial([((1,), -0.5)], [0.0], [-9.0], [9.0], [4.0])]))


@pytest.fixture(scope="session")
def observable_1d(cosine_1d):
    g = ScalarField(1, [GaussianPolynomial([((0,), 1.0)], [0.0], 2.0)])
    f = ScalarField(1, [GaussianPolynomial([((1,), 1.0)], [0.0], 3.0)])
    lat = cosine_1d.lattice
    return PeriodicObservable.cosine(lat, (1,), g) + PeriodicObservable.position(lat, f)
