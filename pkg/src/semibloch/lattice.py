"""Bravais lattices, Fourier-sum periodic potentials and the fiber eigenproblem.

All quantities are in microscopic units: the periodic potential lives on
``y`` with period lattice ``Gamma``, quasi-momenta ``k`` live in ``R^d / Gamma*``.
The fiber Hamiltonian acting on the periodic part ``u(y)`` of a Bloch function is

    H_per(k) = 1/2 (-i grad_y + k)^2 + V(y),

which in the plane-wave basis ``u = sum_G c_G exp(i G.y)`` has matrix elements
``1/2 |k+G|^2 delta_GG' + V_{G-G'}``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import ConfigError, DegenerateLatticeError, EigensolverError, GapClosureError

TWO_PI = 2.0 * np.pi


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


def dual_lattice(basis) -> np.ndarray:
    """Dual basis vectors (rows) with ``basis[i] . dual[j] = 2 pi delta_ij``."""
    b = np.atleast_2d(np.asarray(basis, dtype=float))
    if b.shape[0] != b.shape[1]:
        raise DegenerateLatticeError(f"basis must be square, got shape {b.shape}")
    det = np.linalg.det(b)
    if abs(det) < 1e-12 * max(1.0, np.abs(b).max() ** b.shape[0]):
        raise DegenerateLatticeError(f"lattice basis is singular (det={det:.3e})")
    return TWO_PI * np.linalg.inv(b).T


@dataclass(frozen=True, eq=False)
class Lattice:
    """Direct lattice ``Gamma`` (rows of ``basis``) and its dual ``Gamma*``."""

    basis: np.ndarray
    dual_basis: np.ndarray = field(init=False)

    def __post_init__(self):
        b = np.atleast_2d(np.asarray(self.basis, dtype=float))
        if b.shape[0] not in (1, 2):
            raise ConfigError(f"only d in {{1, 2}} is supported, got d={b.shape[0]}")
        object.__setattr__(self, "basis", _frozen(b))
        object.__setattr__(self, "dual_basis", _frozen(dual_lattice(b)))

    @classmethod
    def chain(cls, a: float = TWO_PI) -> "Lattice":
        return cls([[a]])

    @classmethod
    def square(cls, a: float = TWO_PI) -> "Lattice":
        return cls([[a, 0.0], [0.0, a]])

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def cell_volume(self) -> float:
        return float(abs(np.linalg.det(self.basis)))

    @property
    def bz_volume(self) -> float:
        """``|M*| = (2 pi)^d / |cell|``."""
        return float(abs(np.linalg.det(self.dual_basis)))

    def gvec(self, index) -> np.ndarray:
        """Dual-lattice vector(s) for integer index tuple(s)."""
        return np.asarray(index, dtype=float) @ self.dual_basis

    def lvec(self, index) -> np.ndarray:
        return np.asarray(index, dtype=float) @ self.basis

    def frac_k(self, k) -> np.ndarray:
        """Fractional coordinates of ``k`` with respect to the dual basis."""
        return np.asarray(k, dtype=float) @ self.basis.T / TWO_PI

    def fold_k(self, k) -> np.ndarray:
        """Translate ``k`` by dual-lattice vectors into the cell ``[-1/2, 1/2)^d``."""
        f = self.frac_k(k)
        return (f - np.floor(f + 0.5)) @ self.dual_basis


def bz_grid(lattice: Lattice, shape, centered: bool = False) -> np.ndarray:
    """Uniform grid over M*, shape ``(*shape, d)``; ``k = sum_j (i_j/N_j) gamma*_j``."""
    shape = tuple(int(n) for n in np.atleast_1d(shape))
    if len(shape) != lattice.dim:
        raise ConfigError(f"grid shape {shape} does not match lattice dimension {lattice.dim}")
    axes = []
    for n in shape:
        i = np.arange(n, dtype=float)
        if centered:
            i = i - n // 2
        axes.append(i / n)
    frac = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return frac @ lattice.dual_basis


@dataclass(frozen=True, eq=False)
class FourierPotential:
    """``V(y) = sum_G V_G exp(i G.y)`` with finitely many coefficients.

    Keys of ``coefficients`` are integer index tuples ``m`` with
    ``G = sum_j m_j gamma*_j``.
    """

    lattice: Lattice
    coefficients: Mapping[tuple, complex]

    def __post_init__(self):
        d = self.lattice.dim
        coeffs = {}
        for key, val in dict(self.coefficients).items():
            key = tuple(int(x) for x in np.atleast_1d(key))
            if len(key) != d:
                raise ConfigError(f"coefficient index {key} has wrong dimension (d={d})")
            coeffs[key] = complex(val)
        for key, val in coeffs.items():
            partner = coeffs.get(tuple(-x for x in key))
            if partner is None or abs(partner - np.conj(val)) > 1e-12 * max(1.0, abs(val)):
                raise ConfigError(f"reality condition V(-G) = conj V(G) violated at G index {key}")
        object.__setattr__(self, "coefficients", coeffs)

    @classmethod
    def zero(cls, lattice: Lattice) -> "FourierPotential":
        return cls(lattice, {})

    @classmethod
    def cosine_1d(cls, v: float, a: float = TWO_PI) -> "FourierPotential":
        """``V(y) = 2 v cos(2 pi y / a)``."""
        return cls(Lattice.chain(a), {(1,): v, (-1,): v})

    @property
    def is_real_symmetric(self) -> bool:
        """True if all coefficients are real (``V`` even, inversion symmetric)."""
        return all(abs(c.imag) <= 1e-15 for c in self.coefficients.values())

    def value(self, y) -> np.ndarray:
        """Evaluate ``V`` at microscopic positions ``y`` of shape ``(..., d)``."""
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape[:-1])
        for key, c in self.coefficients.items():
            out = out + (c * np.exp(1j * (y @ self.lattice.gvec(key)))).real
        return out


def load_potential(path) -> FourierPotential:
    """Read a potential file.

    Format (``#`` starts a comment, blank lines ignored)::

        basis <x> [<y>]          # one line per lattice vector gamma_j
        coeff <m_1> [<m_2>] <re> <im>

    A missing ``-G`` partner is filled in as the complex conjugate; an
    inconsistent partner is an error.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"potential file not found: {path}")
    basis, rows = [], []
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *vals = line.split()
        try:
            if tag == "basis":
                basis.append([float(v) for v in vals])
            elif tag == "coeff":
                rows.append(vals)
            else:
                raise ValueError(f"unknown record {tag!r}")
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
    if not basis:
        raise ConfigError(f"{path}: no 'basis' lines")
    lattice = Lattice(basis)
    d = lattice.dim
    coeffs: dict = {}
    for vals in rows:
        if len(vals) != d + 2:
            raise ConfigError(f"{path}: coeff row {vals} needs {d} indices + re + im")
        key = tuple(int(v) for v in vals[:d])
        coeffs[key] = complex(float(vals[d]), float(vals[d + 1]))
    for key, val in list(coeffs.items()):
        coeffs.setdefault(tuple(-x for x in key), np.conj(val))
    return FourierPotential(lattice, coeffs)


def dump_potential(V: FourierPotential, path) -> None:
    lines = ["# semibloch potential file"]
    for row in V.lattice.basis:
        lines.append("basis " + " ".join(repr(float(x)) for x in row))
    for key in sorted(V.coefficients):
        c = V.coefficients[key]
        lines.append("coeff " + " ".join(str(m) for m in key) + f" {c.real!r} {c.imag!r}")
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True, eq=False)
class PlaneWaveBasis:
    """Ordered set of dual-lattice vectors (lexicographic in the index tuples)."""

    lattice: Lattice
    indices: np.ndarray
    cutoff: float = np.inf

    def __post_init__(self):
        idx = np.atleast_2d(np.asarray(self.indices, dtype=int))
        order = np.lexsort(idx.T[::-1])
        idx = idx[order]
        keys = {tuple(r) for r in idx.tolist()}
        if tuple([0] * self.lattice.dim) not in keys:
            raise ConfigError("plane-wave basis must contain G = 0")
        if any(tuple(-x for x in key) not in keys for key in keys):
            raise ConfigError("plane-wave basis must be closed under G -> -G")
        object.__setattr__(self, "indices", _frozen(idx, int))
        object.__setattr__(self, "_lookup", {key: i for i, key in enumerate(map(tuple, idx.tolist()))})

    @classmethod
    def from_cutoff(cls, lattice: Lattice, cutoff: float) -> "PlaneWaveBasis":
        """All ``G`` with ``|G| <= cutoff`` (isotropic shell truncation)."""
        gmin = np.linalg.svd(lattice.dual_basis, compute_uv=False).min()
        nmax = int(np.ceil(cutoff / gmin)) + 1
        rng = range(-nmax, nmax + 1)
        idx = np.array(list(itertools.product(rng, repeat=lattice.dim)))
        keep = np.linalg.norm(lattice.gvec(idx), axis=1) <= cutoff * (1 + 1e-12)
        return cls(lattice, idx[keep], float(cutoff))

    @classmethod
    def for_bands(cls, lattice: Lattice, n_bands: int, extra_radius: float = 6.0) -> "PlaneWaveBasis":
        """Smallest shell basis holding ``n_bands`` plane waves, widened by ``extra_radius`` dual-basis lengths.

        A fixed basis breaks the exact periodicity of ``E_n(k)`` by the truncation
        error at ``|k| ~ |b|``; the margin keeps that seam below the interpolation tolerances.
        """
        b = np.linalg.norm(lattice.dual_basis, axis=1).max()
        probe = cls.from_cutoff(lattice, b * (n_bands + 2))
        radii = np.sort(np.linalg.norm(probe.g_vectors, axis=1))
        return cls.from_cutoff(lattice, float(radii[n_bands - 1]) + extra_radius * b)

    @property
    def size(self) -> int:
        return self.indices.shape[0]

    @property
    def g_vectors(self) -> np.ndarray:
        return self.lattice.gvec(self.indices)

    def position(self, index) -> int | None:
        return self._lookup.get(tuple(int(x) for x in index))

    def shift_map(self, shift) -> tuple[np.ndarray, np.ndarray]:
        """Pairs ``(i, j)`` with ``indices[j] = indices[i] + shift``."""
        shift = np.asarray(shift, dtype=int)
        src, dst = [], []
        for i, key in enumerate(self.indices.tolist()):
            j = self._lookup.get(tuple(np.add(key, shift).tolist()))
            if j is not None:
                src.append(i)
                dst.append(j)
        return np.array(src, dtype=int), np.array(dst, dtype=int)


@lru_cache(maxsize=64)
def potential_matrix(V: FourierPotential, basis: PlaneWaveBasis) -> np.ndarray:
    """k-independent part ``V_{G-G'}`` of the fiber Hamiltonian."""
    n = basis.size
    M = np.zeros((n, n), dtype=complex)
    for key, c in V.coefficients.items():
        src, dst = basis.shift_map(key)
        M[dst, src] = c
    M.setflags(write=False)
    return M


def bloch_hamiltonian(k, V: FourierPotential, basis: PlaneWaveBasis) -> np.ndarray:
    """Fiber Hamiltonian ``H_per(k)`` in the plane-wave basis."""
    kg = np.asarray(k, dtype=float) + basis.g_vectors
    H = potential_matrix(V, basis).copy()
    H[np.diag_indices(basis.size)] += 0.5 * np.einsum("ij,ij->i", kg, kg)
    return H


def velocity_matrices(k, basis: PlaneWaveBasis) -> np.ndarray:
    """Diagonals of ``dH/dk_i = diag((k+G)_i)``, shape ``(d, n_G)``."""
    return (np.asarray(k, dtype=float) + basis.g_vectors).T


@dataclass(frozen=True, eq=False)
class BlochFiber:
    """Eigenpairs of one fiber; ``eigenvectors[:, n]`` is band ``n+1``."""

    k: np.ndarray
    energies: np.ndarray
    eigenvectors: np.ndarray
    basis: PlaneWaveBasis | None = None

    @property
    def n_bands(self) -> int:
        return self.energies.shape[0]

    def band(self, n: int) -> np.ndarray:
        """Coefficient vector of band ``n`` (1-based)."""
        return self.eigenvectors[:, n - 1]


def fix_phases(vecs: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude component is real positive."""
    vecs = np.array(vecs, dtype=complex)
    # argmax on rounded magnitudes keeps the choice stable under rounding noise
    mag = np.round(np.abs(vecs), 12)
    pivot = vecs[np.argmax(mag, axis=0), np.arange(vecs.shape[1])]
    return vecs * (np.abs(pivot) / pivot)[None, :]


def _order_degenerate(energies, vecs, tol):
    order = list(range(len(energies)))
    start = 0
    while start < len(order):
        stop = start + 1
        while stop < len(order) and energies[stop] - energies[start] <= tol * max(1.0, abs(energies[start])):
            stop += 1
        if stop - start > 1:
            block = sorted(
                range(start, stop),
                key=lambda c: tuple(np.round(np.column_stack([vecs[:, c].real, vecs[:, c].imag]).ravel(), 10)),
            )
            order[start:stop] = block
        start = stop
    return np.asarray(order)


def solve_fiber(k, V: FourierPotential, basis: PlaneWaveBasis, n_max: int | None = None) -> BlochFiber:
    """Lowest ``n_max`` eigenpairs of ``H_per(k)`` with a deterministic phase convention."""
    n_max = basis.size if n_max is None else int(n_max)
    if not 1 <= n_max <= basis.size:
        raise ConfigError(f"n_max={n_max} must lie in [1, {basis.size}]")
    k = np.asarray(k, dtype=float).reshape(basis.lattice.dim)
    H = bloch_hamiltonian(k, V, basis)
    try:
        E, U = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(f"eigensolver failed at k={k.tolist()} (cutoff={basis.cutoff}): {exc}") from exc
    E, U = E[:n_max], fix_phases(U[:, :n_max])
    order = _order_degenerate(E, U, 1e-10)
    E, U = E[order], U[:, order]
    resid = np.linalg.norm(H @ U - U * E[None, :], axis=0)
    if np.any(resid > 1e-8 * np.maximum(1.0, np.abs(E))):
        raise EigensolverError(
            f"eigenpair residual {resid.max():.2e} too large at k={k.tolist()} (cutoff={basis.cutoff})"
        )
    E.setflags(write=False)
    U.setflags(write=False)
    return BlochFiber(_frozen(k), E, U, basis)


def band_energies(kpoints, V: FourierPotential, basis: PlaneWaveBasis, n_bands: int) -> np.ndarray:
    """Energies of the lowest ``n_bands`` bands at each k, shape ``(*kshape, n_bands)``."""
    kpoints = np.asarray(kpoints, dtype=float)
    flat = kpoints.reshape(-1, basis.lattice.dim)
    out = np.empty((flat.shape[0], n_bands))
    Vm = potential_matrix(V, basis)
    diag = np.diag_indices(basis.size)
    for i, k in enumerate(flat):
        H = Vm.copy()
        kg = k + basis.g_vectors
        H[diag] += 0.5 * np.einsum("ij,ij->i", kg, kg)
        out[i] = np.linalg.eigvalsh(H)[:n_bands]
    return out.reshape(kpoints.shape[:-1] + (n_bands,))


def min_gap(band: int, V: FourierPotential, basis: PlaneWaveBasis, k_grid, threshold: float = 1e-6) -> float:
    """Smallest distance of band ``band`` (1-based) to its neighbours over ``k_grid``.

    Raises :class:`GapClosureError` if the gap falls below ``threshold``.
    """
    E = band_energies(k_grid, V, basis, band + 1).reshape(-1, band + 1)
    gaps = E[:, band] - E[:, band - 1]
    if band > 1:
        gaps = np.minimum(gaps, E[:, band - 1] - E[:, band - 2])
    gap = float(gaps.min())
    if gap < threshold:
        raise GapClosureError(f"band {band} is not isolated: min gap {gap:.3e} < {threshold:.1e}")
    return gap


def iter_grid(k_grid: np.ndarray) -> Iterable[tuple[tuple, np.ndarray]]:
    shape = k_grid.shape[:-1]
    for idx in np.ndindex(*shape):
        yield idx, k_grid[idx]
