"""Semiclassical Bloch electron dynamics with first-order geometric corrections.

Bloch bands and their Berry curvature and magnetic moment, the corrected
semiclassical flow, Wigner transforms on the lattice torus, a split-step
Schrodinger solver and the harness comparing quantum and semiclassical
expectation values.
"""
from .errors import (
    ConfigError,
    InconsistencyError,
    NumericalValidityError,
    SemiBlochError,
)
from .fields import ExternalFields, ScalarField
from .geometry import BandInterpolant, chern_number, geometry_grid, hall_current
from .harness import EgorovExperiment, convergence_study, egorov_error, transport_wigner_demo
from .hofstadter import hofstadter_chern, tknn_chern
from .lattice import FourierPotential, Lattice, PlaneWaveBasis, solve_fiber
from .schrodinger import OracleSpec, evolve
from .semiflow import FlowSpec, flow_vector_field, integrate_flow
from .wigner import PeriodicObservable, WaveField, pair_observable, wigner_series, wigner_transform

__version__ = "0.1.0"
