"""Gauge-invariant geometry of an isolated Bloch band.

Conventions
-----------
* Berry connection ``A_i = i <u, d_i u>``, curvature ``Omega_ij = d_i A_j - d_j A_i``.
* Magnetic moment ``M_ij = Re (i/2) <d_i u, (H_per - E) d_j u>``.
* Both are stored as antisymmetric ``d x d`` arrays; in ``d = 1`` they vanish.
* ``chern = (1/2 pi) * integral of Omega_12 over M*``.

Two independent routes to ``Omega`` are provided: plaquette link products on a
grid (exactly quantized Chern numbers) and the sum over states with velocity
matrix elements ``<u_n| d_i H |u_m>``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateDenominatorError,
    GapClosureError,
    GridTooCoarseError,
    NonQuantizedError,
    UnsupportedDimensionError,
)
from .lattice import (
    TWO_PI,
    BlochFiber,
    FourierPotential,
    Lattice,
    PlaneWaveBasis,
    bz_grid,
    solve_fiber,
    velocity_matrices,
)

DEFAULT_GAP_THRESHOLD = 1e-6


def default_n_sum(band: int, basis_size: int) -> int:
    # 4 * band misses ~10% of Omega for typical test potentials; the full
    # truncated basis costs nothing extra since every fiber is diagonalized densely
    return basis_size


# ---------------------------------------------------------------------------
# sum over states


def _velocity_elements(fiber: BlochFiber, n_sum: int) -> np.ndarray:
    """``v[i, n, m] = <u_n| d_i H |u_m>`` for the lowest ``n_sum`` bands."""
    C = fiber.eigenvectors[:, :n_sum]
    vel = velocity_matrices(fiber.k, fiber.basis)
    return np.stack([C.conj().T @ (v[:, None] * C) for v in vel])


def _sos_products(fiber: BlochFiber, band: int, n_sum: int):
    n = band - 1
    if n_sum > fiber.n_bands:
        raise ValueError(f"fiber holds {fiber.n_bands} bands, sum needs {n_sum}")
    v = _velocity_elements(fiber, n_sum)
    dE = fiber.energies[:n_sum] - fiber.energies[n]
    others = np.arange(n_sum) != n
    if np.any(np.abs(dE[others]) < 1e-8):
        m = int(np.argmin(np.where(others, np.abs(dE), np.inf)))
        raise DegenerateDenominatorError(
            f"band {band} nearly degenerate with band {m + 1} at k={fiber.k.tolist()} (|dE|={abs(dE[m]):.2e})"
        )
    # X[i, j, m] = <n|d_i H|m><m|d_j H|n>
    X = np.einsum("im,jm->ijm", v[:, n, :], v[:, :, n])[..., others]
    return X, dE[others], v[:, n, n].real


def curvature_and_moment(fiber: BlochFiber, band: int, n_sum: int | None = None):
    """``(Omega, M, grad E)`` at one fiber by sum over states."""
    n_sum = default_n_sum(band, fiber.n_bands) if n_sum is None else n_sum
    X, dE, grad = _sos_products(fiber, band, n_sum)
    omega = -2.0 * np.imag(X / dE**2).sum(axis=-1)
    moment = -0.5 * np.imag(X / dE).sum(axis=-1)
    return _antisym(omega), _antisym(moment), grad


def _antisym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a - np.swapaxes(a, -1, -2))


def berry_curvature_sos(k, V: FourierPotential, basis: PlaneWaveBasis, band: int, n_sum: int | None = None) -> np.ndarray:
    """Berry curvature of ``band`` at ``k`` via the sum over states.

    ``Omega_ij = -2 Im sum_{m != n} <n|d_i H|m><m|d_j H|n> / (E_n - E_m)^2``
    truncated to the lowest ``n_sum`` bands (default: every band of the basis).
    """
    n_sum = default_n_sum(band, basis.size) if n_sum is None else n_sum
    fiber = solve_fiber(k, V, basis, n_sum)
    return curvature_and_moment(fiber, band, n_sum)[0]


def magnetic_moment_sos(k, V: FourierPotential, basis: PlaneWaveBasis, band: int, n_sum: int | None = None) -> np.ndarray:
    """Rammal-Wilkinson moment of ``band`` at ``k`` via the sum over states.

    Inserting ``d_j u_n = sum_{m != n} |m><m|d_j H|n>/(E_n - E_m) + (...)|n>``
    into ``Re (i/2) <d_i u, (H - E_n) d_j u>`` kills the ``|n>`` component and gives
    ``M_ij = 1/2 Im sum_{m != n} <n|d_i H|m><m|d_j H|n> / (E_n - E_m)``.
    """
    n_sum = default_n_sum(band, basis.size) if n_sum is None else n_sum
    fiber = solve_fiber(k, V, basis, n_sum)
    return curvature_and_moment(fiber, band, n_sum)[1]


# ---------------------------------------------------------------------------
# plaquettes


@dataclass(frozen=True, eq=False)
class PlaquetteField:
    """Berry flux through each grid plaquette (lower-left corner indexing)."""

    flux: np.ndarray
    plaquette_area: float
    link_phases: tuple | None = None

    @property
    def curvature(self) -> np.ndarray:
        return self.flux / self.plaquette_area

    @property
    def total_flux(self) -> float:
        # pairwise summation in a fixed order keeps the result reproducible
        return float(np.sum(self.flux))


def continuum_wrap(basis: PlaneWaveBasis):
    """Map coefficients of ``u(k)`` to those of ``u(k + gamma*_axis) = e^{-i gamma*.y} u(k)``."""
    maps = [basis.shift_map(np.eye(basis.lattice.dim, dtype=int)[ax]) for ax in range(basis.lattice.dim)]

    def wrap(axis: int, vecs: np.ndarray) -> np.ndarray:
        src, dst = maps[axis]
        out = np.zeros_like(vecs)
        out[..., src] = vecs[..., dst]
        return out

    return wrap


def _links(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ov = np.einsum("...g,...g->...", a.conj(), b)
    small = np.abs(ov) < 1e-10
    if np.any(small):
        raise GridTooCoarseError(f"vanishing overlap on {int(small.sum())} links; refine the k-grid")
    return ov / np.abs(ov)


def plaquette_flux(vectors: np.ndarray, dual_basis: np.ndarray, wrap=None) -> PlaquetteField:
    """Plaquette Berry flux for band vectors on a full periodic 2D grid.

    ``vectors`` has shape ``(N1, N2, n_basis)``; the grid is ``k = (i/N1) b1 + (j/N2) b2``.
    ``wrap(axis, vecs)`` returns the vectors at the translated point ``k + b_axis``
    expressed in the same basis (identity if ``None``).
    """
    vectors = np.asarray(vectors)
    N1, N2 = vectors.shape[:2]
    wrap = wrap or (lambda axis, v: v)
    nxt1 = np.concatenate([vectors[1:], wrap(0, vectors[:1])], axis=0)
    nxt2 = np.concatenate([vectors[:, 1:], wrap(1, vectors[:, :1])], axis=1)
    U1 = _links(vectors, nxt1)  # k -> k + d1
    U2 = _links(vectors, nxt2)  # k -> k + d2
    # U1 at k + d2 and U2 at k + d1, including the wrapped row/column
    nxt12 = np.concatenate([nxt2[1:], wrap(0, nxt2[:1])], axis=0)
    U1_up = _links(nxt2, nxt12)
    U2_right = _links(nxt1, nxt12)
    loop = U1 * U2_right * U1_up.conj() * U2.conj()
    orient = np.sign(np.linalg.det(dual_basis))
    flux = -orient * np.angle(loop)
    area = abs(np.linalg.det(dual_basis)) / (N1 * N2)
    return PlaquetteField(flux, area, (np.angle(U1), np.angle(U2)))


def berry_curvature_plaquette(fibers, band: int, lattice: Lattice | None = None, wrap=None) -> PlaquetteField | np.ndarray:
    """Plaquette curvature of ``band`` from fibers on a uniform grid over M*.

    ``fibers`` is an array (object dtype or nested lists) of :class:`BlochFiber`
    indexed like :func:`bz_grid`. In ``d = 1`` there are no plaquettes and an all-zero
    curvature array is returned.
    """
    fibers = np.asarray(fibers, dtype=object)
    if fibers.ndim == 1:
        return np.zeros(fibers.shape + (1, 1))
    if fibers.ndim != 2:
        raise UnsupportedDimensionError("plaquettes are implemented for d <= 2")
    vecs = np.stack([[f.band(band) for f in row] for row in fibers])
    first = fibers[0, 0]
    if wrap is None and first.basis is not None:
        wrap = continuum_wrap(first.basis)
    if lattice is None:
        lattice = first.basis.lattice
    return plaquette_flux(vecs, lattice.dual_basis, wrap)


def chern_number(field: PlaquetteField, tol: float = 1e-3) -> tuple[int, float]:
    """Chern number and its pre-rounding residual from a full-BZ plaquette field."""
    value = field.total_flux / TWO_PI
    c = int(np.rint(value))
    resid = abs(value - c)
    if resid > tol:
        raise NonQuantizedError(f"Chern sum {value:.6f} is not near an integer (grid too coarse or gap closing)")
    return c, resid


def rotate_ccw(vec) -> np.ndarray:
    """Counterclockwise rotation by pi/2: ``(x, y) -> (-y, x)``."""
    x, y = np.asarray(vec, dtype=float)
    return np.array([-y, x])


def hall_current(field: PlaquetteField | float, efield) -> np.ndarray:
    """Filled-band current ``j = -E_perp * integral(Omega)`` with ``E_perp`` rotated counterclockwise.

    ``field`` is a plaquette field or directly the integrated curvature.
    """
    efield = np.asarray(efield, dtype=float)
    if efield.shape != (2,):
        raise UnsupportedDimensionError("Hall current is defined for d = 2 only")
    flux = field.total_flux if isinstance(field, PlaquetteField) else float(field)
    return -rotate_ccw(efield) * flux


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True, eq=False)
class GeometryGrid:
    lattice: Lattice
    band: int
    shape: tuple
    k_points: np.ndarray
    energy: np.ndarray
    grad_energy: np.ndarray
    curvature: np.ndarray
    moment: np.ndarray
    plaquettes: PlaquetteField | None = None
    n_sum: int = 0

    @property
    def min_gap(self) -> float:
        return float(self._gap)


def solve_grid(V: FourierPotential, basis: PlaneWaveBasis, shape, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Fibers on the uncentered uniform grid; returns ``(k_grid, fibers)``."""
    k_grid = bz_grid(V.lattice, shape)
    fibers = np.empty(k_grid.shape[:-1], dtype=object)
    for idx in np.ndindex(*fibers.shape):
        fibers[idx] = solve_fiber(k_grid[idx], V, basis, n_max)
    return k_grid, fibers


def geometry_grid(
    V: FourierPotential,
    basis: PlaneWaveBasis,
    band: int,
    shape,
    n_sum: int | None = None,
    gap_threshold: float = DEFAULT_GAP_THRESHOLD,
) -> GeometryGrid:
    """Sample ``E, grad E, Omega, M`` of an isolated band on a uniform BZ grid."""
    d = V.lattice.dim
    shape = tuple(int(n) for n in np.atleast_1d(shape))
    n_sum = default_n_sum(band, basis.size) if n_sum is None else n_sum
    n_sum = max(n_sum, band + 1)
    k_grid, fibers = solve_grid(V, basis, shape, n_sum)
    E = np.empty(shape)
    grad = np.empty(shape + (d,))
    omega = np.zeros(shape + (d, d))
    moment = np.zeros(shape + (d, d))
    gap = np.inf
    for idx in np.ndindex(*shape):
        f = fibers[idx]
        e = f.energies
        g = e[band] - e[band - 1]
        if band > 1:
            g = min(g, e[band - 1] - e[band - 2])
        gap = min(gap, g)
        if gap < gap_threshold:
            raise GapClosureError(f"band {band} is not isolated near k={f.k.tolist()} (gap {g:.3e})")
        om, mo, gr = curvature_and_moment(f, band, n_sum)
        E[idx], grad[idx] = e[band - 1], gr
        if d > 1:
            omega[idx], moment[idx] = om, mo
    plaq = berry_curvature_plaquette(fibers, band, V.lattice) if d == 2 else None
    grid = GeometryGrid(V.lattice, band, shape, k_grid, E, grad, omega, moment, plaq, n_sum)
    object.__setattr__(grid, "_gap", gap)
    return grid


# ---------------------------------------------------------------------------
# interpolation


class BandInterpolant:
    """Trigonometric interpolant of ``E``, ``Omega`` and ``M`` over the torus M*.

    Each quantity ``q`` sampled on a uniform grid is expanded as
    ``q(k) = sum_R c_R exp(i gamma_R . k)`` over direct-lattice vectors, so the
    gradient is analytic and exactly consistent with the energy, which keeps the
    flow energy-conserving up to integrator error.
    """

    def __init__(self, grid: GeometryGrid, grad_tol: float = 1e-4, prune: float = 1e-14):
        self.lattice = grid.lattice
        self.band = grid.band
        d = self.lattice.dim
        self.dim = d
        pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
        self._pairs = pairs
        cols = [grid.energy]
        cols += [grid.curvature[..., i, j] for i, j in pairs]
        cols += [grid.moment[..., i, j] for i, j in pairs]
        samples = np.stack(cols, axis=-1)
        R, C = _fourier_terms(samples, grid.shape)
        scale = np.abs(C).max(axis=0, keepdims=True)
        keep = np.any(np.abs(C) > prune * np.maximum(scale, 1e-300), axis=1)
        keep[np.all(R == 0, axis=1)] = True
        self._R, self._C = R[keep], C[keep]
        self._gammaR = self._R @ self.lattice.basis
        self._rmax = np.abs(self._R).max(axis=0)
        nq = self._C.shape[1]
        grad_coef = (self._C[:, :, None] * 1j * self._gammaR[:, None, :]).reshape(len(self._R), nq * d)
        self._stack = np.concatenate([self._C, grad_coef], axis=1)
        self._egrad = np.concatenate([self._C[:, :1], grad_coef[:, :d]], axis=1)
        spectral = self.energy_grad(grid.k_points.reshape(-1, d))[1]
        self.grad_mismatch = float(np.abs(spectral - grid.grad_energy.reshape(-1, d)).max())
        if self.grad_mismatch > grad_tol * max(1.0, np.abs(grid.grad_energy).max()):
            raise GridTooCoarseError(
                f"spectral and Hellmann-Feynman band velocities differ by {self.grad_mismatch:.2e}; refine the geometry grid"
            )

    def _phases(self, k: np.ndarray) -> np.ndarray:
        if k.shape[0] <= 32:
            return np.exp(1j * (k @ self._gammaR.T))
        f = self.lattice.frac_k(k)
        out = None
        for ax in range(self.dim):
            rm = int(self._rmax[ax])
            powers = np.empty((2 * rm + 1, f.shape[0]), dtype=complex)
            powers[rm] = 1.0
            if rm:
                powers[rm + 1] = np.exp(TWO_PI * 1j * f[:, ax])
            for p in range(2, rm + 1):
                np.multiply(powers[rm + p - 1], powers[rm + 1], out=powers[rm + p])
            np.conjugate(powers[rm + 1:][::-1], out=powers[:rm])
            rows = powers[self._R[:, ax] + rm]
            out = rows if out is None else out * rows
        return out.T

    def evaluate(self, k):
        """Return ``(E, grad E, Omega, M, grad M)`` at points ``k`` of shape ``(P, d)``.

        ``Omega`` and ``M`` are ``(P, d, d)``; ``grad M`` is ``(P, d, d, d)`` with
        the derivative index last.
        """
        k = np.atleast_2d(np.asarray(k, dtype=float))
        out = (self._phases(k) @ self._stack).real
        nq = self._C.shape[1]
        vals = out[:, :nq]
        grads = out[:, nq:].reshape(-1, nq, self.dim)
        P, d = k.shape[0], self.dim
        npair = len(self._pairs)
        omega = np.zeros((P, d, d))
        moment = np.zeros((P, d, d))
        gmoment = np.zeros((P, d, d, d))
        for c, (i, j) in enumerate(self._pairs):
            omega[:, i, j], omega[:, j, i] = vals[:, 1 + c], -vals[:, 1 + c]
            moment[:, i, j], moment[:, j, i] = vals[:, 1 + npair + c], -vals[:, 1 + npair + c]
            gmoment[:, i, j], gmoment[:, j, i] = grads[:, 1 + npair + c], -grads[:, 1 + npair + c]
        return vals[:, 0], grads[:, 0], omega, moment, gmoment

    def energy_grad(self, k):
        k = np.atleast_2d(np.asarray(k, dtype=float))
        out = (self._phases(k) @ self._egrad).real
        return out[:, 0], out[:, 1:]


def _fourier_terms(samples: np.ndarray, shape: tuple) -> tuple[np.ndarray, np.ndarray]:
    """Integer frequencies and coefficients of the real trigonometric interpolant.

    Even-length Nyquist coefficients are split evenly between ``+N/2`` and ``-N/2``.
    """
    d = len(shape)
    coef = np.fft.fftn(samples, axes=tuple(range(d))) / np.prod(shape)
    freqs = [np.rint(np.fft.fftfreq(n) * n).astype(int) for n in shape]
    R = np.stack(np.meshgrid(*freqs, indexing="ij"), axis=-1).reshape(-1, d)
    C = coef.reshape(-1, samples.shape[-1])
    for ax, n in enumerate(shape):
        if n % 2:
            continue
        nyq = R[:, ax] == -(n // 2)
        C = C.copy()
        C[nyq] *= 0.5
        R2 = R[nyq].copy()
        R2[:, ax] = n // 2
        R = np.concatenate([R, R2])
        C = np.concatenate([C, C[nyq]])
    return R, C


def randomize_gauge(fiber: BlochFiber, rng: np.random.Generator) -> BlochFiber:
    """Multiply every eigenvector by an independent random phase."""
    phases = np.exp(1j * rng.uniform(0.0, TWO_PI, fiber.n_bands))
    U = fiber.eigenvectors * phases[None, :]
    U.setflags(write=False)
    return BlochFiber(fiber.k, fiber.energies, U, fiber.basis)


def gauge_sensitivity(V: FourierPotential, basis: PlaneWaveBasis, band: int, shape, rng: np.random.Generator) -> dict:
    """Largest change of ``Omega``, ``M`` and the plaquette Chern sum under random fiber phases (d = 2)."""
    if V.lattice.dim != 2:
        raise UnsupportedDimensionError("gauge sensitivity is defined for d = 2")
    n_sum = default_n_sum(band, basis.size)
    _, fibers = solve_grid(V, basis, shape, n_sum)
    shuffled = np.empty_like(fibers)
    d_om = d_m = 0.0
    for idx in np.ndindex(*fibers.shape):
        shuffled[idx] = randomize_gauge(fibers[idx], rng)
        o1, m1, _ = curvature_and_moment(fibers[idx], band, n_sum)
        o2, m2, _ = curvature_and_moment(shuffled[idx], band, n_sum)
        d_om = max(d_om, float(np.abs(o1 - o2).max()))
        d_m = max(d_m, float(np.abs(m1 - m2).max()))
    f1 = berry_curvature_plaquette(fibers, band, V.lattice)
    f2 = berry_curvature_plaquette(shuffled, band, V.lattice)
    return {
        "omega": d_om,
        "moment": d_m,
        "plaquette": float(np.abs(f1.flux - f2.flux).max()),
        "chern": abs(f1.total_flux - f2.total_flux) / TWO_PI,
    }
