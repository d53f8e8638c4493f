"""Semiclassical Hamiltonian ``H_sc``, symplectic matrix ``Theta`` and its flow.

Kinetic coordinates ``z = (r, kappa)``. The vector field solves
``Theta(z) z' = dH_sc(z)`` with ``Theta = [[B, -I], [I, eps Omega]]`` and
``H_sc = E(kappa) + phi(r) - eps sum_{i<j} M_ij B_ij``. All routines are
vectorized over a leading point axis so ensembles move in lockstep.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    InconsistencyError,
    NumericalValidityError,
    SymplecticDegeneracyError,
    TruncatedTrajectoryError,
)
from .fields import ExternalFields

DET_THRESHOLD = 1e-10
RESIDUAL_TOL = 1e-12


class FreeBand:
    """``E = |kappa|^2 / (2 mass)`` with no Berry curvature; a non-periodic test band."""

    def __init__(self, dim: int, mass: float = 1.0):
        self.dim = dim
        self.mass = float(mass)

    def evaluate(self, k):
        k = np.atleast_2d(np.asarray(k, dtype=float))
        P, d = k.shape
        z2 = np.zeros((P, d, d))
        return 0.5 * np.einsum("pi,pi->p", k, k) / self.mass, k / self.mass, z2, z2.copy(), np.zeros((P, d, d, d))

    def energy_grad(self, k):
        E, g, *_ = self.evaluate(k)
        return E, g


@dataclass(frozen=True)
class PhasePointKinetic:
    r: np.ndarray
    kappa: np.ndarray

    def to_canonical(self, fields: ExternalFields) -> "CanonicalPoint":
        A = fields.vector_potential(self.r)[0].reshape(np.shape(self.r))
        return CanonicalPoint(np.asarray(self.r, float), np.asarray(self.kappa, float) + A)


@dataclass(frozen=True)
class CanonicalPoint:
    r: np.ndarray
    k: np.ndarray

    def to_kinetic(self, fields: ExternalFields) -> PhasePointKinetic:
        A = fields.vector_potential(self.r)[0].reshape(np.shape(self.r))
        return PhasePointKinetic(np.asarray(self.r, float), np.asarray(self.k, float) - A)


@dataclass
class FlowSpec:
    """``order = 0`` runs the leading-order flow (``eps`` is ignored in the vector field)."""

    epsilon: float
    band: object
    fields: ExternalFields
    order: int = 1
    dt: float = 1e-3
    integrator: str = "rk4"

    def __post_init__(self):
        if self.epsilon < 0:
            raise ConfigError("epsilon must be non-negative")
        if self.order not in (0, 1):
            raise ConfigError("order must be 0 or 1")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.integrator not in ("rk4", "midpoint"):
            raise ConfigError(f"unknown integrator {self.integrator!r}")
        if self.band.dim != self.fields.dim:
            raise ConfigError("band and fields have different dimensions")

    @property
    def eps(self) -> float:
        return self.epsilon if self.order == 1 else 0.0

    @property
    def dim(self) -> int:
        return self.fields.dim


@dataclass
class Trajectory:
    times: np.ndarray
    r: np.ndarray
    kappa: np.ndarray
    energy: np.ndarray
    k: np.ndarray = field(default=None)

    def point(self, i: int = -1) -> PhasePointKinetic:
        return PhasePointKinetic(self.r[i], self.kappa[i])

    @property
    def energy_drift(self) -> float:
        return float(np.abs(self.energy - self.energy[0]).max() / max(1.0, abs(self.energy[0])))


def _pairs(d):
    return [(i, j) for i in range(d) for j in range(i + 1, d)]


def _local(r, kappa, spec: FlowSpec):
    d = spec.dim
    r = np.asarray(r, dtype=float).reshape(-1, d)
    kappa = np.asarray(kappa, dtype=float).reshape(-1, d)
    phi, gphi = spec.fields.potential(r)
    B, gB = spec.fields.magnetic(r)
    E, gE, Om, M, gM = spec.band.evaluate(kappa)
    return r, kappa, phi, gphi, B, gB, E, gE, Om, M, gM


def _energy_terms(spec, phi, gphi, B, gB, E, gE, M, gM):
    eps = spec.eps
    H = E + phi
    dHr, dHk = gphi.copy(), gE.copy()
    if eps:
        for i, j in _pairs(spec.dim):
            H = H - eps * M[:, i, j] * B[:, i, j]
            dHr -= eps * M[:, i, j, None] * gB[:, i, j]
            dHk -= eps * gM[:, i, j] * B[:, i, j, None]
    return H, dHr, dHk


def hsc_energy(r, kappa, spec: FlowSpec) -> np.ndarray:
    """``H_sc`` at each point (shape ``(P,)``)."""
    _, _, phi, gphi, B, gB, E, gE, _, M, gM = _local(r, kappa, spec)
    return _energy_terms(spec, phi, gphi, B, gB, E, gE, M, gM)[0]


def _theta(B, Om, eps):
    P, d, _ = B.shape
    T = np.zeros((P, 2 * d, 2 * d))
    I = np.eye(d)
    T[:, :d, :d] = B
    T[:, :d, d:] = -I
    T[:, d:, :d] = I
    T[:, d:, d:] = eps * Om
    return T


def symplectic_matrix(r, kappa, spec: FlowSpec) -> np.ndarray:
    """``Theta`` at each point, shape ``(P, 2d, 2d)``."""
    r = np.asarray(r, dtype=float).reshape(-1, spec.dim)
    kappa = np.asarray(kappa, dtype=float).reshape(-1, spec.dim)
    B, _ = spec.fields.magnetic(r)
    Om = spec.band.evaluate(kappa)[2]
    return _theta(B, Om, spec.eps)


def flow_vector_field(r, kappa, spec: FlowSpec, check: bool = True):
    """Return ``(r', kappa')`` solving ``Theta z' = dH_sc``.

    Eliminating ``r'`` gives ``(I + eps B Omega) kappa' = B grad_kappa H - grad_r H``
    and ``r' = grad_kappa H - eps Omega kappa'``; ``det Theta = det(I + eps B Omega)``.
    """
    r, kappa, phi, gphi, B, gB, E, gE, Om, M, gM = _local(r, kappa, spec)
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(kappa))):
        raise NumericalValidityError("non-finite phase point")
    _, dHr, dHk = _energy_terms(spec, phi, gphi, B, gB, E, gE, M, gM)
    eps = spec.eps
    d = spec.dim
    rhs = (B @ dHk[..., None])[..., 0] - dHr
    if eps:
        K = np.eye(d) + eps * B @ Om
        det = np.linalg.det(K)
        if np.any(np.abs(det) < DET_THRESHOLD):
            raise SymplecticDegeneracyError(f"|det Theta| = {np.abs(det).min():.2e} below {DET_THRESHOLD}; epsilon too large")
        kdot = np.linalg.solve(K, rhs[..., None])[..., 0]
        rdot = dHk - eps * (Om @ kdot[..., None])[..., 0]
    else:
        kdot, rdot = rhs, dHk
    if check:
        res_r = (B @ rdot[..., None])[..., 0] - kdot - dHr
        res_k = rdot + eps * (Om @ kdot[..., None])[..., 0] - dHk
        res = max(np.abs(res_r).max(), np.abs(res_k).max())
        scale = max(1.0, np.abs(dHr).max(), np.abs(dHk).max(), np.abs(rdot).max(), np.abs(kdot).max())
        if res > RESIDUAL_TOL * scale:
            raise InconsistencyError(f"symplectic solve residual {res:.2e}")
    return rdot, kdot


def _step_rk4(r, k, h, spec):
    a1, b1 = flow_vector_field(r, k, spec)
    a2, b2 = flow_vector_field(r + 0.5 * h * a1, k + 0.5 * h * b1, spec)
    a3, b3 = flow_vector_field(r + 0.5 * h * a2, k + 0.5 * h * b2, spec)
    a4, b4 = flow_vector_field(r + h * a3, k + h * b3, spec)
    return r + h / 6 * (a1 + 2 * a2 + 2 * a3 + a4), k + h / 6 * (b1 + 2 * b2 + 2 * b3 + b4)


def _step_midpoint(r, k, h, spec, tol=1e-14, max_iter=100):
    r1, k1 = _step_rk4(r, k, h, spec)
    for _ in range(max_iter):
        a, b = flow_vector_field(0.5 * (r + r1), 0.5 * (k + k1), spec)
        rn, kn = r + h * a, k + h * b
        delta = max(np.abs(rn - r1).max(), np.abs(kn - k1).max())
        r1, k1 = rn, kn
        if delta <= tol * max(1.0, np.abs(r1).max(), np.abs(k1).max()):
            return r1, k1
    raise NumericalValidityError("implicit midpoint fixed-point iteration did not converge")


def _steps(t_final, dt):
    n = max(1, int(np.ceil(abs(t_final) / dt - 1e-9)))
    return n, t_final / n


def flow_map(r, kappa, t_final: float, spec: FlowSpec):
    """Evolve a batch of kinetic points for time ``t_final``; returns ``(r, kappa)``."""
    d = spec.dim
    r = np.array(r, dtype=float).reshape(-1, d)
    k = np.array(kappa, dtype=float).reshape(-1, d)
    if t_final == 0:
        return r, k
    n, h = _steps(t_final, spec.dt)
    step = _step_rk4 if spec.integrator == "rk4" else _step_midpoint
    for _ in range(n):
        r, k = step(r, k, h, spec)
    return r, k


def integrate_flow(z0: PhasePointKinetic, t_final: float, spec: FlowSpec, record_every: int = 1) -> Trajectory:
    """Integrate a single trajectory, recording every ``record_every`` steps."""
    d = spec.dim
    r = np.asarray(z0.r, dtype=float).reshape(1, d)
    k = np.asarray(z0.kappa, dtype=float).reshape(1, d)
    n, h = _steps(t_final, spec.dt) if t_final else (0, 0.0)
    step = _step_rk4 if spec.integrator == "rk4" else _step_midpoint
    times, rs, ks = [0.0], [r[0]], [k[0]]

    def build():
        R, Kp = np.array(rs), np.array(ks)
        H = hsc_energy(R, Kp, spec)
        A = spec.fields.vector_potential(R)[0]
        return Trajectory(np.array(times), R, Kp, H, Kp + A)

    for s in range(1, n + 1):
        try:
            r, k = step(r, k, h, spec)
        except NumericalValidityError as exc:
            raise TruncatedTrajectoryError(f"flow stopped at t={times[-1]:.6g}: {exc}", partial=build()) from exc
        if s % record_every == 0 or s == n:
            times.append(s * h)
            rs.append(r[0])
            ks.append(k[0])
    return build()


def canonical_flow(p: CanonicalPoint, t: float, spec: FlowSpec) -> CanonicalPoint:
    """Flow in ``(r, k)``: ``k(t) = kappa(t) + A(r(t))`` with ``A`` at the evolved position."""
    r, k = canonical_flow_map(p.r, p.k, t, spec)
    shape = np.shape(p.r)
    return CanonicalPoint(r.reshape(shape), k.reshape(shape))


def canonical_flow_map(r, k, t: float, spec: FlowSpec):
    d = spec.dim
    r = np.asarray(r, dtype=float).reshape(-1, d)
    k = np.asarray(k, dtype=float).reshape(-1, d)
    kappa = k - spec.fields.vector_potential(r)[0]
    rt, kt = flow_map(r, kappa, t, spec)
    return rt, kt + spec.fields.vector_potential(rt)[0]
