"""Quantum-versus-semiclassical experiments and convergence studies.

The Egorov error at scale ``eps`` compares

* LHS: ``<psi_t, a^W psi_t>`` with ``psi_t`` from the split-step oracle, and
* RHS: ``int (a o Phi^t)(r, k) w_red^{psi_0}(r, k) dr dk``,

where ``Phi^t`` is the semiclassical flow in canonical coordinates. The RHS is
evaluated in the Fourier basis of the torus: ``w_red = |M*|^-1 sum_m e^{i gamma_m k} C_m(r)``
with ``C_m`` the shift correlations of ``psi_0``, so only the low Fourier modes of
the flowed observable (sampled on a ``K_b``-point grid of ``M*``) are needed.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigError, NumericalValidityError
from .fields import ExternalFields
from .geometry import BandInterpolant, geometry_grid
from .lattice import FourierPotential, PlaneWaveBasis
from .schrodinger import OracleSpec, evolve
from .semiflow import FlowSpec, FreeBand, canonical_flow_map
from .wigner import (
    PeriodicObservable,
    ReducedWigner,
    WaveField,
    build_band_wavepacket,
    grid_basis,
    pair_observable,
    pair_reduced,
    shift_correlations,
    wigner_series,
)

log = logging.getLogger(__name__)


@dataclass
class EgorovExperiment:
    """One scenario evaluated at several ``epsilon``.

    ``packet_width`` is the macroscopic position standard deviation, so the
    momentum width is ``sigma = eps / (2 packet_width)``. ``box_length`` sets the
    number of cells (rounded up to even) at each ``eps``.
    """

    potential: FourierPotential
    band: int
    fields: ExternalFields
    observable: PeriodicObservable | None
    k0: np.ndarray
    packet_width: float
    box_length: float
    epsilons: list
    t_final: float = 1.0
    order: int = 0
    center: np.ndarray | None = None
    points_per_cell: int = 16
    dt_ratio: float = 0.02
    flow_dt: float = 0.02
    geometry_points: int = 64
    k_samples: int = 32
    free_band: bool = False
    name: str = "scenario"

    def __post_init__(self):
        d = self.potential.lattice.dim
        self.k0 = np.asarray(self.k0, dtype=float).reshape(d)
        self.center = np.zeros(d) if self.center is None else np.asarray(self.center, dtype=float).reshape(d)
        self.epsilons = sorted((float(e) for e in self.epsilons), reverse=True)
        if any(e <= 0 for e in self.epsilons):
            raise ConfigError("epsilons must be positive")
        if self.order not in (0, 1):
            raise ConfigError("order must be 0 or 1")
        if self.fields.dim != d:
            raise ConfigError("fields and lattice dimensions differ")

    @property
    def lattice(self):
        return self.potential.lattice

    def cells(self, eps: float) -> tuple:
        lengths = np.linalg.norm(self.lattice.basis, axis=1) * eps
        box = np.broadcast_to(np.asarray(self.box_length, dtype=float), lengths.shape)
        return tuple(int(2 * np.ceil(b / (2 * l))) for b, l in zip(box, lengths))

    @cached_property
    def band_model(self):
        if self.free_band:
            return FreeBand(self.lattice.dim)
        basis = PlaneWaveBasis.for_bands(self.lattice, self.band + 1)
        shape = (self.geometry_points,) * self.lattice.dim
        grid = geometry_grid(self.potential, basis, self.band, shape)
        return BandInterpolant(grid)

    def flow_spec(self, eps: float, order: int | None = None) -> FlowSpec:
        order = self.order if order is None else order
        return FlowSpec(eps, self.band_model, self.fields, order=order, dt=self.flow_dt)

    def initial_state(self, eps: float) -> WaveField:
        sigma = eps / (2.0 * self.packet_width)
        basis = grid_basis(self.lattice, self.points_per_cell)
        return build_band_wavepacket(
            self.band, self.k0, sigma, eps, self.potential, basis, self.cells(eps), self.points_per_cell, self.center
        )

    def oracle(self, eps: float) -> OracleSpec:
        return OracleSpec(self.potential, eps, self.fields, dt=self.dt_ratio * eps)

    def settings(self) -> dict:
        return {
            "name": self.name,
            "band": self.band,
            "k0": self.k0.tolist(),
            "packet_width": self.packet_width,
            "box_length": np.asarray(self.box_length).tolist(),
            "t_final": self.t_final,
            "order": self.order,
            "points_per_cell": self.points_per_cell,
            "dt_ratio": self.dt_ratio,
            "flow_dt": self.flow_dt,
            "geometry_points": self.geometry_points,
            "k_samples": self.k_samples,
            "free_band": self.free_band,
        }


def _support_mask(C: np.ndarray, d: int, rel: float = 1e-14) -> np.ndarray:
    mag = np.abs(C).reshape(-1, *C.shape[d:]).max(axis=0)
    return mag > rel * mag.max()


def transported_pairing(
    psi0: WaveField, a: PeriodicObservable, t: float, spec: FlowSpec, k_samples: int, k_tail_tol: float = 1e-6
) -> float:
    """``int (a o Phi^t) w_red^{psi0}`` using ``k_samples`` points of ``M*`` per dimension."""
    d = psi0.dim
    lattice = psi0.lattice
    K = k_samples
    if K % 2 or K <= 2 * a.max_label:
        raise ConfigError("k_samples must be even and exceed twice the observable's largest label")
    labels = np.rint(np.fft.fftfreq(K) * K).astype(int)
    C = shift_correlations(psi0, [labels] * d)
    mask = _support_mask(C, d)
    r = psi0.positions()[mask]
    l_axes = np.stack(np.meshgrid(*[np.arange(K)] * d, indexing="ij"), axis=-1).reshape(-1, d)
    kk = (l_axes / K) @ lattice.dual_basis
    R = np.repeat(r, kk.shape[0], axis=0)
    Kp = np.tile(kk, (r.shape[0], 1))
    if t:
        R, Kp = canonical_flow_map(R, Kp, t, spec)
    b = a.value(R, Kp).reshape((r.shape[0],) + (K,) * d)
    bhat = np.fft.fftn(b, axes=tuple(range(1, d + 1))) / K**d
    edge = np.abs(labels) >= K // 4
    outer = np.zeros((K,) * d, dtype=bool)
    for j in range(d):
        outer |= edge.reshape([-1 if i == j else 1 for i in range(d)])
    tail = float(np.abs(bhat[:, outer]).max() / max(np.abs(bhat).max(), 1e-300))
    if tail > k_tail_tol:
        log.warning("transported observable under-resolved in k: relative tail %.1e with %d samples", tail, K)
    neg = tuple(np.mod(-np.arange(K), K) for _ in range(d))
    bneg = bhat[(slice(None),) + np.ix_(*neg)]
    Cm = np.moveaxis(C[..., mask], -1, 0)
    return float(np.real(np.sum(Cm * bneg)) * psi0.dx)


@dataclass
class EgorovResult:
    epsilon: float
    order: int
    t: float
    lhs: float
    rhs: float
    error: float
    floor: float
    runtime: float


def egorov_terms(exp: EgorovExperiment, eps: float, order: int | None = None, t: float | None = None) -> EgorovResult:
    if exp.free_band:
        raise ConfigError("the Egorov pairing integrates over the Brillouin zone and needs a periodic band, not free_band")
    order = exp.order if order is None else order
    t = exp.t_final if t is None else t
    start = time.perf_counter()
    try:
        psi0 = exp.initial_state(eps)
        spec = exp.flow_spec(eps, order)
        a = exp.observable
        floor = abs(pair_observable(psi0, a, cross_check=False) - transported_pairing(psi0, a, 0.0, spec, exp.k_samples))
        psi_t = evolve(psi0, t, exp.oracle(eps)) if t else psi0
        lhs = pair_observable(psi_t, a)
        rhs = transported_pairing(psi0, a, t, spec, exp.k_samples)
    except NumericalValidityError as exc:
        raise type(exc)(f"eps={eps:g}: {exc}") from exc
    return EgorovResult(eps, order, t, lhs, rhs, abs(lhs - rhs), floor, time.perf_counter() - start)


def egorov_error(exp: EgorovExperiment, eps: float, order: int | None = None) -> float:
    return egorov_terms(exp, eps, order).error


def fit_power_law(eps, errors) -> tuple[float, float, np.ndarray]:
    """Least-squares fit ``log e = slope log eps + intercept``; returns ``(slope, intercept, residuals)``."""
    x = np.log(np.asarray(eps, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    if x.size < 2:
        raise ConfigError("need at least two points for a slope")
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept), y - (slope * x + intercept)


def fit_linear_constant(eps, errors) -> float:
    """``C`` minimizing ``sum (e - C eps)^2``."""
    eps = np.asarray(eps, dtype=float)
    return float(np.dot(errors, eps) / np.dot(eps, eps))


@dataclass
class ConvergenceReport:
    epsilons: list
    errors: list
    floors: list
    slope: float
    intercept: float
    residuals: list
    constant: float
    monotone: bool
    above_floor: list
    inconclusive: bool
    order: int
    runtime: float
    settings: dict = field(default_factory=dict)
    results: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["results"] = [asdict(r) for r in self.results]
        return out


def summarize(eps, errors, floors, order=0, runtime=0.0, settings=None, results=None, floor_factor=3.0) -> ConvergenceReport:
    eps = [float(e) for e in eps]
    errors = [float(e) for e in errors]
    floors = [float(f) for f in floors]
    if len(eps) < 3:
        raise ConfigError("a convergence study needs at least three epsilon values")
    order_idx = np.argsort(eps)[::-1]
    e_sorted = np.array(errors)[order_idx]
    monotone = bool(np.all(np.diff(e_sorted) < 0))
    above = [e > floor_factor * f for e, f in zip(errors, floors)]
    slope, intercept, resid = fit_power_law(eps, errors) if min(errors) > 0 else (float("nan"), float("nan"), np.array([]))
    return ConvergenceReport(
        eps, errors, floors, slope, intercept, list(map(float, resid)), fit_linear_constant(eps, errors),
        monotone, above, not (monotone and all(above)), order, runtime, settings or {}, list(results or []),
    )


def convergence_study(exp: EgorovExperiment, order: int | None = None, threads: int = 1) -> ConvergenceReport:
    """Egorov errors over ``exp.epsilons`` with a log-log slope fit."""
    order = exp.order if order is None else order
    start = time.perf_counter()
    exp.band_model
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda e: egorov_terms(exp, e, order), exp.epsilons))
    else:
        results = [egorov_terms(exp, e, order) for e in exp.epsilons]
    for r in results:
        log.info("eps=%g order=%d error=%.3e floor=%.1e (%.1fs)", r.epsilon, r.order, r.error, r.floor, r.runtime)
    return summarize(
        [r.epsilon for r in results], [r.error for r in results], [r.floor for r in results], order,
        time.perf_counter() - start, exp.settings(), results,
    )


def _psi_at(psi: WaveField, x: np.ndarray, upsample: int) -> np.ndarray:
    """Band-limited interpolation of a 1D wave field: FFT upsampling then linear interpolation."""
    N = psi.shape[0]
    C = np.fft.fft(psi.samples)
    M = N * upsample
    big = np.zeros(M, dtype=complex)
    half = N // 2
    big[:half] = C[:half]
    big[-half:] = C[-half:]
    fine = np.fft.ifft(big) * upsample
    step = psi.steps[0, 0] / upsample
    u = (x - psi.origin[0]) / step
    inside = (u >= 0) & (u <= M - 1)
    u = np.clip(u, 0, M - 1)
    grid = np.arange(M)
    out = np.interp(u, grid, fine.real) + 1j * np.interp(u, grid, fine.imag)
    return np.where(inside, out, 0.0)


@dataclass
class TransportSnapshot:
    t: float
    quantum: ReducedWigner
    transported: np.ndarray
    l1_distance: float
    pairings_quantum: list
    pairings_transported: list


def transport_wigner_demo(
    exp: EgorovExperiment,
    eps: float,
    observables: list,
    times=None,
    upsample: int = 16,
    k_margin: float = 10.0,
) -> list[TransportSnapshot]:
    """Pull back ``w_red^{psi_0}`` along the order-0 flow and compare with ``w_red^{psi_t}`` (1D).

    ``w_0`` is evaluated at back-propagated grid points from its lattice-sum
    form with ``psi_0`` interpolated spectrally. Grid points whose quasi-momentum
    lies more than ``k_margin`` momentum widths from the transported packet
    centre are treated as carrying no transported density.
    """
    if exp.lattice.dim != 1:
        raise ConfigError("the transport demo is implemented for d = 1")
    times = [0.0, exp.t_final] if times is None else list(times)
    psi0 = exp.initial_state(eps)
    spec = exp.flow_spec(eps, order=0)
    oracle = exp.oracle(eps)
    lattice = exp.lattice
    bz = float(lattice.dual_basis[0, 0])
    sigma = eps / (2.0 * exp.packet_width)
    C0 = shift_correlations(psi0, [np.arange(-(4 * psi0.cells[0]) // 2, (4 * psi0.cells[0]) // 2)])
    mag = np.abs(C0).max(axis=1)
    m_used = np.arange(-(4 * psi0.cells[0]) // 2, (4 * psi0.cells[0]) // 2)[mag > 1e-14 * mag.max()]
    snaps = []
    current, last_t = psi0, 0.0
    for t in sorted(times):
        if t != last_t:
            current = evolve(current, t - last_t, oracle)
            last_t = t
        wq = wigner_series(current)
        centre = canonical_flow_map(exp.center[None], exp.k0[None], t, spec)[1][0, 0] if t else exp.k0[0]
        kq = wq.k_points[..., 0]
        dist = np.abs((kq - centre + 0.5 * bz) % bz - 0.5 * bz)
        kmask = dist <= k_margin * sigma
        rmask = np.abs(wq.values).max(axis=1) > 1e-12 * np.abs(wq.values).max()
        r_sel = wq.r_points[rmask, 0]
        k_sel = kq[kmask]
        R = np.repeat(r_sel, k_sel.size)[:, None]
        Kp = np.tile(k_sel, r_sel.size)[:, None]
        if t:
            R, Kp = canonical_flow_map(R, Kp, -t, spec)
        w_tr = np.zeros_like(wq.values)
        vals = np.zeros(R.shape[0])
        gam = m_used * float(lattice.basis[0, 0])
        chunk = max(1, int(4e6 // max(1, m_used.size)))
        for s in range(0, R.shape[0], chunk):
            rr = R[s:s + chunk, 0]
            kk = Kp[s:s + chunk, 0]
            shift = 0.5 * eps * gam[None, :]
            plus = _psi_at(psi0, (rr[:, None] + shift).ravel(), upsample).reshape(rr.size, -1)
            minus = _psi_at(psi0, (rr[:, None] - shift).ravel(), upsample).reshape(rr.size, -1)
            series = np.sum(np.exp(1j * kk[:, None] * gam[None, :]) * np.conj(plus) * minus, axis=1)
            vals[s:s + chunk] = series.real / lattice.bz_volume
        w_tr[np.ix_(rmask, kmask)] = vals.reshape(r_sel.size, k_sel.size)
        l1 = float(np.sum(np.abs(w_tr - wq.values)) * wq.dr * wq.dk)
        pq = [pair_observable(current, a, cross_check=False) for a in observables]
        transported = ReducedWigner(eps, wq.r_points, wq.k_points, w_tr, wq.dr, wq.dk, lattice)
        pt = [pair_reduced(transported, a) for a in observables]
        snaps.append(TransportSnapshot(t, wq, w_tr, l1, pq, pt))
    return snaps


@dataclass
class TransportReport:
    epsilons: list
    errors: list
    constants: list
    slopes: list
    decreasing: list
    l1: list
    runtime: float


def transport_study(exp: EgorovExperiment, observables: list, epsilons=None) -> TransportReport:
    """Paired-observable gap between quantum and pulled-back densities at ``t_final`` over ``eps``."""
    start = time.perf_counter()
    epsilons = sorted(epsilons or exp.epsilons, reverse=True)
    errs, l1 = [], []
    for eps in epsilons:
        snap = transport_wigner_demo(exp, eps, observables, times=[exp.t_final])[-1]
        errs.append([abs(q - p) for q, p in zip(snap.pairings_quantum, snap.pairings_transported)])
        l1.append(snap.l1_distance)
    errs = np.array(errs)
    consts, slopes, dec = [], [], []
    for j in range(errs.shape[1]):
        consts.append(float(np.max(errs[:, j] / np.array(epsilons))))
        slopes.append(fit_power_law(epsilons, errs[:, j])[0])
        dec.append(bool(np.all(np.diff(errs[:, j]) < 0)))
    return TransportReport(epsilons, errs.tolist(), consts, slopes, dec, l1, time.perf_counter() - start)
