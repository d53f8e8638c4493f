"""Split-step spectral solver for ``i eps d_t psi = (1/2 (-i eps grad - A)^2 + V(x/eps) + phi(x)) psi``.

Standard mode has ``A = 0``. The optional two-dimensional uniform-field mode
uses the Landau gauge ``A = (0, B x_1)`` on a square lattice and splits the
kinetic energy per axis; it is meant for qualitative checks only because the
gauge is not periodic across the box.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, InstabilityError
from .fields import ExternalFields
from .lattice import FourierPotential
from .wigner import WaveField

log = logging.getLogger(__name__)

C_STAB = 0.1


@dataclass
class OracleSpec:
    """``dt`` defaults to ``C_STAB * epsilon`` and may not exceed it."""

    potential: FourierPotential
    epsilon: float
    fields: ExternalFields | None = None
    dt: float | None = None
    uniform_b: float | None = None
    margin_sigmas: float = 5.0
    margin_mass: float = 1e-8
    norm_tol: float = 1e-8
    check_every: int = 100

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if self.dt is None:
            self.dt = C_STAB * self.epsilon
        if self.dt <= 0 or self.dt > C_STAB * self.epsilon * (1 + 1e-12):
            raise ConfigError(f"dt={self.dt} must lie in (0, {C_STAB} * epsilon]")
        if self.fields is not None and self.fields.has_vector_potential:
            raise ConfigError("the oracle supports A = 0 or the uniform_b Landau-gauge mode only")
        if self.uniform_b is not None:
            basis = self.potential.lattice.basis
            if self.potential.lattice.dim != 2 or abs(basis[0] @ basis[1]) > 1e-12:
                raise ConfigError("uniform_b mode needs a rectangular 2D lattice")


def _potential_values(psi: WaveField, spec: OracleSpec) -> np.ndarray:
    x = psi.positions().reshape(-1, psi.dim)
    v = spec.potential.value(x / spec.epsilon).real
    if spec.fields is not None:
        v = v + spec.fields.phi(x)
    return v.reshape(psi.shape)


def _landau_axes(psi: WaveField):
    """``x_1`` on the grid and the axis-wise wave numbers (rectangular lattice)."""
    x1 = psi.positions()[..., 0]
    steps = np.linalg.norm(psi.steps, axis=1)
    xi = [2 * np.pi * np.fft.fftfreq(n, d=s) for n, s in zip(psi.shape, steps)]
    return x1, xi


def packet_width(psi: WaveField) -> float:
    """Largest per-axis position standard deviation of ``|psi|^2``."""
    rho = np.abs(psi.samples) ** 2
    rho = rho / rho.sum()
    x = psi.positions()
    widths = []
    for j in range(psi.dim):
        mean = np.sum(rho * x[..., j])
        widths.append(np.sqrt(np.sum(rho * (x[..., j] - mean) ** 2)))
    return float(max(widths))


def boundary_mass(psi: WaveField, margin: float) -> float:
    """Fraction of ``|psi|^2`` within ``margin`` of a box face (box-frame coordinates)."""
    rho = np.abs(psi.samples) ** 2
    frac = np.stack(np.meshgrid(*[np.arange(n) / n for n in psi.shape], indexing="ij"), axis=-1)
    lengths = np.linalg.norm(psi.steps, axis=1) * np.array(psi.shape)
    near = np.zeros(psi.shape, dtype=bool)
    for j in range(psi.dim):
        w = margin / lengths[j]
        near |= (frac[..., j] < w) | (frac[..., j] > 1 - w)
    return float(rho[near].sum() / rho.sum())


class SplitStepper:
    """Strang splitting ``exp(-i U dt/2eps) exp(-i T dt/eps) exp(-i U dt/2eps)``."""

    def __init__(self, psi0: WaveField, spec: OracleSpec, dt: float):
        self.spec = spec
        self.template = psi0
        eps = spec.epsilon
        U = _potential_values(psi0, spec)
        self.half_potential = np.exp(-0.5j * dt * U / eps)
        if spec.uniform_b is None:
            xi = psi0.frequencies()
            self.kinetic = np.exp(-0.5j * eps * dt * np.einsum("...i,...i->...", xi, xi))
        else:
            x1, xi = _landau_axes(psi0)
            k1 = xi[0][:, None]
            k2 = xi[1][None, :]
            self.kinetic_1 = np.exp(-0.25j * eps * dt * k1**2) * np.ones_like(k2)
            self.kinetic_2 = np.exp(-0.5j * dt * (eps * k2 - spec.uniform_b * x1) ** 2 / eps)

    def step(self, psi: np.ndarray) -> np.ndarray:
        psi = self.half_potential * psi
        if self.spec.uniform_b is None:
            psi = np.fft.ifftn(self.kinetic * np.fft.fftn(psi))
        else:
            psi = np.fft.ifft(self.kinetic_1 * np.fft.fft(psi, axis=0), axis=0)
            psi = np.fft.ifft(self.kinetic_2 * np.fft.fft(psi, axis=1), axis=1)
            psi = np.fft.ifft(self.kinetic_1 * np.fft.fft(psi, axis=0), axis=0)
        return self.half_potential * psi


def evolve(psi0: WaveField, t_final: float, spec: OracleSpec, snapshot_every: int | None = None, monitor: bool = True):
    """Propagate ``psi0`` for time ``t_final`` (either sign).

    Returns the final ``WaveField``; with ``snapshot_every`` set, returns
    ``(final, [(t, WaveField), ...])``.
    """
    if abs(psi0.epsilon - spec.epsilon) > 1e-15:
        raise ConfigError("wave field and oracle use different epsilon")
    n = max(1, int(np.ceil(abs(t_final) / spec.dt - 1e-9))) if t_final else 0
    dt = t_final / n if n else 0.0
    margin = spec.margin_sigmas * packet_width(psi0)

    def check(field: WaveField, t: float):
        drift = abs(field.norm_sq - psi0.norm_sq) / psi0.norm_sq
        if drift > spec.norm_tol:
            raise InstabilityError(f"norm drift {drift:.2e} at t={t:.4g}")
        if monitor:
            mass = boundary_mass(field, margin)
            if mass > spec.margin_mass:
                raise DomainError(f"packet mass {mass:.2e} within {margin:.3g} of the box boundary at t={t:.4g}")

    check(psi0, 0.0)
    snaps = [(0.0, psi0)] if snapshot_every else None
    if n == 0:
        return (psi0, snaps) if snapshot_every else psi0
    stepper = SplitStepper(psi0, spec, dt)
    psi = psi0.samples.copy()
    for s in range(1, n + 1):
        psi = stepper.step(psi)
        if s % spec.check_every == 0 or s == n or (snapshot_every and s % snapshot_every == 0):
            field = psi0.with_samples(psi)
            check(field, s * dt)
            if snapshot_every and (s % snapshot_every == 0 or s == n):
                snaps.append((s * dt, field))
    final = psi0.with_samples(psi)
    log.debug("evolved %d steps, dt=%.3g", n, dt)
    return (final, snaps) if snapshot_every else final


def energy_expectation(psi: WaveField, spec: OracleSpec) -> float:
    """``<psi, H psi>``: spectral kinetic term plus grid quadrature of the potentials."""
    eps = spec.epsilon
    U = _potential_values(psi, spec)
    pot = psi.dx * np.sum(U * np.abs(psi.samples) ** 2)
    if spec.uniform_b is None:
        xi = psi.frequencies()
        C = np.fft.fftn(psi.samples) / psi.samples.size
        kin = 0.5 * eps**2 * psi.box_volume * np.sum(np.einsum("...i,...i->...", xi, xi) * np.abs(C) ** 2)
    else:
        x1, xi = _landau_axes(psi)
        d1 = np.fft.ifft(1j * eps * xi[0][:, None] * np.fft.fft(psi.samples, axis=0), axis=0)
        p2 = np.fft.ifft(eps * xi[1][None, :] * np.fft.fft(psi.samples, axis=1), axis=1) - spec.uniform_b * x1 * psi.samples
        kin = 0.5 * psi.dx * (np.sum(np.abs(d1) ** 2) + np.sum(np.abs(p2) ** 2))
    return float(kin + pot)
