"""Wave fields on a periodic box, band wave packets and phase-space transforms.

Positions are macroscopic (``x = eps y``). A box holds ``cells_j`` lattice cells
along basis vector ``a_j`` with ``P`` samples per cell, so the sample step is
``eps a_j / P``. Shifts by ``eps gamma / 2`` are exact index shifts when ``P`` is
even. Wigner-type sums treat ``psi`` as zero outside the box (zero padding),
which avoids ghost copies from the periodic wrap.

Discrete conventions (d = 1, ``h = eps a / P``, ``N = cells P``, ``M = 2N``)::

    w(q_n, p_l) = a/(pi P) sum_{s in Z_M} exp(2 pi i s l / M) conj(psi[n+s]) psi[n-s]
    p_l = l gamma* / (4 cells)
    w_red(r_n, k_j) = |M*|^-1 sum_{m in Z_K} exp(2 pi i m j / K) conj(psi[n+mP/2]) psi[n-mP/2]
    k_j = j gamma* / K,  K = 4 cells

Folding ``w`` over its ``P/2`` Brillouin-zone copies reproduces ``w_red``
exactly, and ``sum_l w dp = |psi_n|^2`` exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AliasingError, ConfigError, GridAlignmentError, InconsistencyError, WidthError
from .lattice import TWO_PI, FourierPotential, Lattice, PlaneWaveBasis, bloch_hamiltonian

MIN_POINTS_PER_CELL = 16


@dataclass
class WaveField:
    """Samples of ``psi`` on the box grid ``x_n = origin + sum_j n_j eps a_j / P``."""

    epsilon: float
    lattice: Lattice
    cells: tuple
    points_per_cell: int
    samples: np.ndarray
    origin: np.ndarray = None
    min_points_per_cell: int = MIN_POINTS_PER_CELL
    norm_sq: float = field(init=False)

    def __post_init__(self):
        d = self.lattice.dim
        self.cells = tuple(int(c) for c in np.atleast_1d(self.cells))
        if len(self.cells) != d:
            raise ConfigError(f"need {d} cell counts")
        P = int(self.points_per_cell)
        if P < self.min_points_per_cell:
            raise ConfigError(f"points_per_cell={P} below the floor {self.min_points_per_cell}")
        if P % 2 or any(c % 2 for c in self.cells):
            raise GridAlignmentError("points_per_cell and cell counts must be even for half-lattice shifts")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        self.samples = np.asarray(self.samples, dtype=complex)
        if self.samples.shape != self.shape:
            raise ConfigError(f"samples have shape {self.samples.shape}, grid is {self.shape}")
        if self.origin is None:
            self.origin = default_origin(self.lattice, self.cells, self.epsilon)
        self.origin = np.asarray(self.origin, dtype=float).reshape(d)
        self.norm_sq = self.compute_norm_sq()
        if not np.isfinite(self.norm_sq):
            raise ConfigError("wave field has non-finite norm")

    @property
    def dim(self) -> int:
        return self.lattice.dim

    @property
    def shape(self) -> tuple:
        return tuple(c * self.points_per_cell for c in self.cells)

    @property
    def steps(self) -> np.ndarray:
        """Grid step vectors (rows)."""
        return self.epsilon * self.lattice.basis / self.points_per_cell

    @property
    def dx(self) -> float:
        return float(abs(np.linalg.det(self.steps)))

    @property
    def box_volume(self) -> float:
        return self.dx * self.samples.size

    def compute_norm_sq(self) -> float:
        return float(self.dx * np.sum(np.abs(self.samples) ** 2))

    def positions(self) -> np.ndarray:
        idx = np.stack(np.meshgrid(*[np.arange(n) for n in self.shape], indexing="ij"), axis=-1)
        return self.origin + idx @ self.steps

    def frequencies(self) -> np.ndarray:
        """Macroscopic wave vectors ``xi`` of the FFT modes, shape ``(*shape, d)``."""
        nu = np.stack(np.meshgrid(*[np.rint(np.fft.fftfreq(n) * n) for n in self.shape], indexing="ij"), axis=-1)
        return (nu / np.array(self.cells)) @ self.lattice.dual_basis / self.epsilon

    def with_samples(self, samples) -> "WaveField":
        return WaveField(self.epsilon, self.lattice, self.cells, self.points_per_cell, samples, self.origin, self.min_points_per_cell)

    def normalized(self) -> "WaveField":
        return self.with_samples(self.samples / np.sqrt(self.norm_sq))

    def padded(self) -> np.ndarray:
        """``psi`` embedded in a zero array of twice the size per dimension."""
        out = np.zeros(tuple(2 * n for n in self.shape), dtype=complex)
        out[tuple(slice(0, n) for n in self.shape)] = self.samples
        return out


def default_origin(lattice: Lattice, cells, epsilon: float) -> np.ndarray:
    """Origin that centres the box on ``x = 0``; a lattice point for even ``cells``."""
    return -0.5 * epsilon * (np.asarray(cells, dtype=float) @ lattice.basis)


def grid_basis(lattice: Lattice, points_per_cell: int) -> PlaneWaveBasis:
    """All reciprocal indices strictly inside the grid Nyquist range."""
    h = points_per_cell // 2 - 1
    axes = [np.arange(-h, h + 1)] * lattice.dim
    idx = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, lattice.dim)
    return PlaneWaveBasis(lattice, idx, float(np.linalg.norm(lattice.dual_basis, axis=1).max() * h))


def box_quasi_momenta(lattice: Lattice, cells, k0) -> tuple[np.ndarray, np.ndarray]:
    """Box-allowed quasi-momenta in the cell of ``M*`` centred on ``k0``.

    Returns integer labels ``m`` (``k = sum_j m_j b_j / cells_j``) and the momenta.
    """
    cells = np.asarray(cells)
    centre = np.rint((np.atleast_2d(k0) @ lattice.basis.T / TWO_PI)[0] * cells).astype(int)
    axes = [c0 + np.arange(-(c // 2), c - c // 2) for c0, c in zip(centre, cells)]
    m = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(cells))
    return m, (m / cells) @ lattice.dual_basis


def _grid_index(nu: np.ndarray, shape) -> tuple | None:
    idx = []
    for j, n in enumerate(shape):
        if np.any(np.abs(nu[:, j]) >= n // 2):
            return None
        idx.append(np.mod(nu[:, j], n))
    return tuple(idx)


def build_band_wavepacket(
    n: int,
    k0,
    sigma: float,
    epsilon: float,
    V: FourierPotential,
    basis: PlaneWaveBasis,
    cells,
    points_per_cell: int = MIN_POINTS_PER_CELL,
    center=None,
    width_tol: float = 1e-8,
) -> WaveField:
    """``psi(x) ~ sum_k g(k - k0) exp(i k.(x - r0)/eps) u_n(k, x/eps)``, unit norm.

    ``g(k) = exp(-|k|^2 / (4 sigma^2))`` so ``|g|^2`` has standard deviation
    ``sigma`` and the position envelope has standard deviation ``eps / (2 sigma)``.
    ``u_n(k)`` is aligned with ``u_n(k0)`` so the envelope is not distorted by
    gauge jumps.
    """
    lattice = V.lattice
    d = lattice.dim
    k0 = np.asarray(k0, dtype=float).reshape(d)
    r0 = np.zeros(d) if center is None else np.asarray(center, dtype=float).reshape(d)
    m, ks = box_quasi_momenta(lattice, cells, k0)
    dk = ks - k0
    g = np.exp(-np.einsum("pi,pi->p", dk, dk) / (4.0 * sigma**2))
    cells_arr = np.asarray(cells)
    lo = m.min(axis=0)
    hi = m.max(axis=0)
    edge = np.any((m == lo) | (m == hi), axis=1)
    if g[edge].max() > width_tol * g.max():
        raise WidthError(f"envelope reaches {g[edge].max() / g.max():.1e} of its peak at the zone boundary; reduce sigma")
    ref = _band_vector(k0, V, basis, n)
    psi = WaveField(epsilon, lattice, cells, points_per_cell, np.zeros(tuple(c * points_per_cell for c in cells_arr)))
    coef = np.zeros(psi.shape, dtype=complex)
    keep = g > 1e-16 * g.max()
    for mm, k, gk in zip(m[keep], ks[keep], g[keep]):
        u = _band_vector(k, V, basis, n)
        ov = np.vdot(ref, u)
        u = u * (np.conj(ov) / abs(ov)) if abs(ov) > 1e-12 else u
        nu = mm + basis.indices * cells_arr
        xi = (nu / cells_arr) @ lattice.dual_basis / epsilon
        idx = _grid_index(nu, psi.shape)
        if idx is None:
            raise AliasingError("plane-wave basis exceeds the grid Nyquist range; raise points_per_cell")
        phase = np.exp(1j * (xi @ psi.origin - (k @ r0) / epsilon))
        coef[idx] += gk * u * phase
    samples = np.fft.ifftn(coef) * coef.size
    return psi.with_samples(samples).normalized()


def _band_vector(k, V, basis, n):
    E, U = np.linalg.eigh(bloch_hamiltonian(np.asarray(k, dtype=float), V, basis))
    return U[:, n - 1]


def bloch_floquet(psi: WaveField):
    """Fiber decomposition of ``psi``.

    Returns ``(labels, fibers)``: ``labels`` are the integer quasi-momentum labels
    ``m`` with ``k_m = sum_j m_j b_j / cells_j`` in the box cell centred at 0, and
    ``fibers[i, g]`` is the coefficient of plane wave ``k_m + G_g`` where ``G_g``
    runs over the reciprocal indices ``[-P/2, P/2]^d`` (each FFT mode lands once). Normalized so that
    ``sum |fibers|^2 = ||psi||^2 / |box|``.
    """
    d = psi.dim
    C = np.fft.fftn(psi.samples) / psi.samples.size
    xi = psi.frequencies()
    C = C * np.exp(-1j * (xi @ psi.origin))
    cells = np.array(psi.cells)
    P = psi.points_per_cell
    nu = np.stack(np.meshgrid(*[np.rint(np.fft.fftfreq(n) * n).astype(int) for n in psi.shape], indexing="ij"), axis=-1)
    m = np.mod(nu + cells // 2, cells) - cells // 2
    G = (nu - m) // cells
    labels = np.stack(np.meshgrid(*[np.arange(-(c // 2), c - c // 2) for c in cells], indexing="ij"), axis=-1).reshape(-1, d)
    Gs = np.stack(np.meshgrid(*[np.arange(-(P // 2), P // 2 + 1)] * d, indexing="ij"), axis=-1).reshape(-1, d)
    li = np.ravel_multi_index(tuple((m + cells // 2).reshape(-1, d).T), tuple(cells))
    gi = np.ravel_multi_index(tuple((G + P // 2).reshape(-1, d).T), (P + 1,) * d)
    fibers = np.zeros((labels.shape[0], Gs.shape[0]), dtype=complex)
    fibers[li, gi] = C.reshape(-1)
    return labels, Gs, fibers


def band_leakage(psi: WaveField, n: int, V: FourierPotential, basis: PlaneWaveBasis, tiny: float = 1e-30) -> float:
    """``1 - ||P_n psi||^2 / ||psi||^2`` with ``P_n`` the fiberwise projector onto band ``n`` of ``basis``."""
    if V.lattice is not psi.lattice and not np.allclose(V.lattice.basis, psi.lattice.basis):
        raise ConfigError("potential and wave field live on different lattices")
    labels, Gs, fibers = bloch_floquet(psi)
    total = float(np.sum(np.abs(fibers) ** 2))
    P = psi.points_per_cell
    d = psi.dim
    pos = np.ravel_multi_index(tuple((basis.indices + P // 2).T), (P + 1,) * d)
    if np.any(np.abs(basis.indices) >= P // 2):
        raise AliasingError("plane-wave basis exceeds the grid Nyquist range")
    weights = np.sum(np.abs(fibers) ** 2, axis=1)
    kept = 0.0
    for lab, w, row in zip(labels, weights, fibers):
        if w <= tiny * total:
            continue
        k = (lab / np.array(psi.cells)) @ psi.lattice.dual_basis
        u = _band_vector(k, V, basis, n)
        kept += abs(np.vdot(u, row[pos])) ** 2
    return float(max(0.0, 1.0 - kept / total))


@dataclass
class WignerGrid:
    """``w(q, p)`` on the box grid times a centred momentum grid (``values[*q, *p]``)."""

    epsilon: float
    q_points: np.ndarray
    p_points: np.ndarray
    values: np.ndarray
    dq: float
    dp: float
    cells: tuple
    points_per_cell: int
    lattice: Lattice

    @property
    def dim(self):
        return self.lattice.dim


@dataclass
class ReducedWigner:
    """``w_red(r, k)`` on the box grid times a centred grid of ``M*``."""

    epsilon: float
    r_points: np.ndarray
    k_points: np.ndarray
    values: np.ndarray
    dr: float
    dk: float
    lattice: Lattice


def _momentum_grid(lattice, counts, step_vectors):
    axes = [np.arange(-(c // 2), c - c // 2) for c in counts]
    idx = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return idx @ step_vectors


def _check_real(z, tol, what):
    scale = max(float(np.abs(z.real).max()), 1e-300)
    resid = float(np.abs(z.imag).max())
    if resid > tol * scale:
        raise AliasingError(f"{what}: imaginary residue {resid:.2e} relative to {scale:.2e}; grid too coarse")
    return z.real.copy()


def wigner_transform(psi: WaveField, imag_tol: float = 1e-10) -> WignerGrid:
    """Full Wigner function; memory grows like ``N^d (2N)^d``, meant for small grids."""
    d = psi.dim
    shape = psi.shape
    M = tuple(2 * n for n in shape)
    pad = psi.padded()
    q_idx = np.meshgrid(*[np.arange(n) for n in shape], indexing="ij")
    s_idx = np.meshgrid(*[np.arange(m) for m in M], indexing="ij")
    plus = tuple(
        np.mod(q_idx[j].reshape(shape + (1,) * d) + s_idx[j].reshape((1,) * d + M), M[j]) for j in range(d)
    )
    minus = tuple(
        np.mod(q_idx[j].reshape(shape + (1,) * d) - s_idx[j].reshape((1,) * d + M), M[j]) for j in range(d)
    )
    F = np.conj(pad[plus]) * pad[minus]
    axes = tuple(range(d, 2 * d))
    P = psi.points_per_cell
    pref = (2.0 / psi.epsilon) ** d * psi.dx / TWO_PI**d
    W = pref * np.prod(M) * np.fft.ifftn(F, axes=axes)
    W = np.fft.fftshift(W, axes=axes)
    values = _check_real(W, imag_tol, "Wigner transform")
    pstep = psi.lattice.dual_basis / (4.0 * np.array(psi.cells))[:, None]
    p_points = _momentum_grid(psi.lattice, M, pstep)
    return WignerGrid(
        psi.epsilon, psi.positions(), p_points, values, psi.dx, float(abs(np.linalg.det(pstep))),
        psi.cells, P, psi.lattice,
    )


def fold_wigner(w: WignerGrid) -> ReducedWigner:
    """Sum ``w`` over the ``P/2`` Brillouin-zone copies of its momentum grid."""
    d = w.dim
    P = w.points_per_cell
    if P % 2:
        raise GridAlignmentError("momentum grid is not commensurate with the dual lattice")
    K = tuple(4 * c for c in w.cells)
    vals = np.fft.ifftshift(w.values, axes=tuple(range(d, 2 * d)))
    qshape = vals.shape[:d]
    split = qshape + tuple(x for k in K for x in (P // 2, k))
    vals = vals.reshape(split).sum(axis=tuple(d + 2 * j for j in range(d)))
    vals = np.fft.fftshift(vals, axes=tuple(range(d, 2 * d)))
    kstep = w.lattice.dual_basis / np.array(K)[:, None]
    return ReducedWigner(
        w.epsilon, w.q_points, _momentum_grid(w.lattice, K, kstep), vals, w.dq,
        float(abs(np.linalg.det(kstep))), w.lattice,
    )


def shift_correlations(psi: WaveField, m_range) -> np.ndarray:
    """``C[m, n] = conj(psi[n + m P/2]) psi[n - m P/2]`` (zero padded) for lattice labels ``m``.

    ``m_range`` is a sequence of per-dimension integer arrays; the result has shape
    ``(*len(m_range[j]), *grid_shape)``.
    """
    d = psi.dim
    shape = psi.shape
    half = psi.points_per_cell // 2
    M = tuple(2 * n for n in shape)
    pad = psi.padded()
    n_idx = np.meshgrid(*[np.arange(n) for n in shape], indexing="ij")
    mm = np.meshgrid(*[np.asarray(r) for r in m_range], indexing="ij")
    mshape = mm[0].shape
    plus, minus = [], []
    for j in range(d):
        n_b = n_idx[j].reshape((1,) * d + shape)
        m_b = mm[j].reshape(mshape + (1,) * d) * half
        plus.append(np.mod(n_b + m_b, M[j]))
        minus.append(np.mod(n_b - m_b, M[j]))
    return np.conj(pad[tuple(plus)]) * pad[tuple(minus)]


def wigner_series(psi: WaveField, imag_tol: float = 1e-10) -> ReducedWigner:
    """Reduced Wigner function from the lattice sum over ``gamma``."""
    d = psi.dim
    lattice = psi.lattice
    K = tuple(4 * c for c in psi.cells)
    C = shift_correlations(psi, [np.arange(k) for k in K])
    axes = tuple(range(d))
    S = np.prod(K) * np.fft.ifftn(C, axes=axes) / lattice.bz_volume
    S = np.moveaxis(np.fft.fftshift(S, axes=axes), axes, tuple(range(d, 2 * d)))
    values = _check_real(S, imag_tol, "Wigner series")
    kstep = lattice.dual_basis / np.array(K)[:, None]
    return ReducedWigner(
        psi.epsilon, psi.positions(), _momentum_grid(lattice, K, kstep), values, psi.dx,
        float(abs(np.linalg.det(kstep))), lattice,
    )


def marginals(w: WignerGrid | ReducedWigner):
    """``(position density, momentum density, total mass)``."""
    d = w.lattice.dim
    if isinstance(w, WignerGrid):
        dq, dp = w.dq, w.dp
    else:
        dq, dp = w.dr, w.dk
    pos = w.values.sum(axis=tuple(range(d, 2 * d))) * dp
    mom = w.values.sum(axis=tuple(range(d))) * dq
    return pos, mom, float(pos.sum() * dq)


def wigner_l2_norm(w: WignerGrid) -> float:
    return float(np.sqrt(np.sum(w.values**2) * w.dq * w.dp))


@dataclass
class PeriodicObservable:
    """``a(q, p) = sum c_t f_t(q) exp(i gamma_t . p)`` with ``gamma_t`` lattice vectors.

    ``terms`` holds ``(m, c, f)``: integer lattice label ``m`` (``gamma = m @ basis``),
    complex weight ``c`` and a real scalar field ``f`` (anything with ``eval``).
    Reality requires the partner ``(-m, conj c, f)`` for every term.
    """

    lattice: Lattice
    terms: list

    def __post_init__(self):
        d = self.lattice.dim
        norm = []
        for m, c, f in self.terms:
            m = tuple(int(x) for x in np.atleast_1d(m))
            if len(m) != d:
                raise ConfigError("observable label has the wrong dimension")
            norm.append((m, complex(c), f))
        self.terms = norm
        for m, c, f in self.terms:
            partner = tuple(-x for x in m)
            total = sum(cc for mm, cc, ff in self.terms if mm == m and ff is f)
            back = sum(cc for mm, cc, ff in self.terms if mm == partner and ff is f)
            if abs(total - np.conj(back)) > 1e-14 * max(1.0, abs(total)):
                raise ConfigError(f"observable term {m} lacks its conjugate partner")

    @classmethod
    def position(cls, lattice, f) -> "PeriodicObservable":
        return cls(lattice, [((0,) * lattice.dim, 1.0, f)])

    @classmethod
    def cosine(cls, lattice, m, f, amplitude: float = 1.0) -> "PeriodicObservable":
        """``amplitude f(q) cos(gamma_m . p)``."""
        m = tuple(np.atleast_1d(m))
        return cls(lattice, [(m, amplitude / 2, f), (tuple(-x for x in m), amplitude / 2, f)])

    @classmethod
    def sine(cls, lattice, m, f, amplitude: float = 1.0) -> "PeriodicObservable":
        m = tuple(np.atleast_1d(m))
        return cls(lattice, [(m, -0.5j * amplitude, f), (tuple(-x for x in m), 0.5j * amplitude, f)])

    def __add__(self, other: "PeriodicObservable") -> "PeriodicObservable":
        return PeriodicObservable(self.lattice, self.terms + other.terms)

    def scaled(self, s: float) -> "PeriodicObservable":
        return PeriodicObservable(self.lattice, [(m, c * s, f) for m, c, f in self.terms])

    @property
    def max_label(self) -> int:
        return max(max(abs(x) for x in m) for m, _, _ in self.terms)

    def value(self, q, p) -> np.ndarray:
        d = self.lattice.dim
        q = np.asarray(q, dtype=float).reshape(-1, d)
        p = np.asarray(p, dtype=float).reshape(-1, d)
        out = np.zeros(q.shape[0], dtype=complex)
        cache = {}
        for m, c, f in self.terms:
            if id(f) not in cache:
                cache[id(f)] = f(q)
            gamma = np.asarray(m, dtype=float) @ self.lattice.basis
            out += c * cache[id(f)] * np.exp(1j * (p @ gamma))
        return out.real


def _shifted(pad: np.ndarray, shape, shift) -> np.ndarray:
    """``psi[n + shift]`` for ``n`` on the box, zero outside."""
    M = pad.shape
    idx = np.meshgrid(*[np.mod(np.arange(n) + s, m) for n, s, m in zip(shape, shift, M)], indexing="ij")
    return pad[tuple(idx)]


def pair_direct(psi: WaveField, a: PeriodicObservable) -> float:
    """``<psi, a^W psi>`` with ``(f e^{i gamma p})^W psi(x) = f(x + eps gamma/2) psi(x + eps gamma)``."""
    P = psi.points_per_cell
    pad = psi.padded()
    x = psi.positions().reshape(-1, psi.dim)
    conj = np.conj(psi.samples).reshape(-1)
    total = 0.0 + 0.0j
    for m, c, f in a.terms:
        gamma = np.asarray(m, dtype=float) @ psi.lattice.basis
        shifted = _shifted(pad, psi.shape, np.asarray(m) * P).reshape(-1)
        fv = f(x + 0.5 * psi.epsilon * gamma)
        total += c * np.sum(conj * fv * shifted)
    return float((total * psi.dx).real)


def pair_reduced(w: ReducedWigner, a: PeriodicObservable) -> float:
    """Grid integral ``int a w_red dr dk``."""
    d = w.lattice.dim
    nr = int(np.prod(w.values.shape[:d]))
    nk = int(np.prod(w.values.shape[d:]))
    q = w.r_points.reshape(-1, d)
    k = w.k_points.reshape(-1, d)
    vals = w.values.reshape(nr, nk)
    total = 0.0
    for m, c, f in a.terms:
        gamma = np.asarray(m, dtype=float) @ w.lattice.basis
        total += (c * (f(q) @ vals @ np.exp(1j * (k @ gamma)))).real
    return float(total * w.dr * w.dk)


def pair_observable(
    psi: WaveField,
    a: PeriodicObservable,
    cross_check: bool = True,
    agree_tol: float = 1e-4,
    max_cells: float = 5e7,
) -> float:
    """``<psi, a^W psi>`` via the shift representation, cross-checked against ``int a w_red``.

    The cross-check is skipped when the reduced Wigner grid would exceed
    ``max_cells`` entries.
    """
    direct = pair_direct(psi, a)
    if cross_check and psi.samples.size * np.prod([4 * c for c in psi.cells]) <= max_cells:
        via = pair_reduced(wigner_series(psi), a)
        scale = max(1.0, psi.norm_sq)
        if abs(via - direct) > agree_tol * scale:
            raise InconsistencyError(f"pairing routes disagree: {direct!r} vs {via!r}")
    return direct
