"""Harper-Hofstadter tight-binding model at rational flux ``p/q``.

Unit hoppings on the square lattice with Landau-gauge Peierls phases; the
magnetic unit cell holds ``q`` sites along axis 1. The Bloch matrix is built in
the periodic gauge (the whole ``k_1`` phase sits on the bond closing the
magnetic cell), so it is ``2 pi/q``-periodic in ``k_1`` and ``2 pi``-periodic in
``k_2``. Its bands carry nonzero Chern numbers, which the continuum
time-reversal-symmetric potentials cannot.
"""
from __future__ import annotations

from math import gcd

import numpy as np

from .errors import InvalidFluxError
from .geometry import PlaquetteField, chern_number, plaquette_flux
from .lattice import TWO_PI, BlochFiber, fix_phases

MAX_Q = 64


def check_flux(p: int, q: int) -> None:
    if q < 1 or q > MAX_Q:
        raise InvalidFluxError(f"q={q} outside [1, {MAX_Q}]")
    if gcd(p, q) != 1:
        raise InvalidFluxError(f"flux {p}/{q} is not in lowest terms")


def hofstadter_matrix(p: int, q: int, k) -> np.ndarray:
    """``q x q`` Bloch Hamiltonian at quasi-momentum ``k`` in the magnetic BZ."""
    check_flux(p, q)
    k1, k2 = np.asarray(k, dtype=float)
    m = np.arange(q)
    H = np.diag(-2.0 * np.cos(k2 + TWO_PI * p * m / q)).astype(complex)
    for site in range(q):
        nxt = (site + 1) % q
        hop = -np.exp(1j * q * k1) if nxt == 0 else -1.0
        H[site, nxt] += hop
        H[nxt, site] += np.conj(hop)
    return H


def magnetic_bz(q: int) -> np.ndarray:
    """Reciprocal basis of the magnetic cell: rows ``(2 pi/q, 0)`` and ``(0, 2 pi)``."""
    return np.array([[TWO_PI / q, 0.0], [0.0, TWO_PI]])


def hofstadter_fibers(p: int, q: int, k) -> BlochFiber:
    H = hofstadter_matrix(p, q, k)
    E, U = np.linalg.eigh(H)
    U = fix_phases(U)
    E.setflags(write=False)
    U.setflags(write=False)
    return BlochFiber(np.asarray(k, dtype=float), E, U, None)


def hofstadter_grid(p: int, q: int, shape=(24, 24)) -> tuple[np.ndarray, np.ndarray]:
    """Energies ``(N1, N2, q)`` and eigenvectors ``(N1, N2, q, q)`` on the magnetic BZ."""
    check_flux(p, q)
    N1, N2 = shape
    dual = magnetic_bz(q)
    E = np.empty((N1, N2, q))
    U = np.empty((N1, N2, q, q), dtype=complex)
    for i in range(N1):
        for j in range(N2):
            f = hofstadter_fibers(p, q, (i / N1) * dual[0] + (j / N2) * dual[1])
            E[i, j], U[i, j] = f.energies, f.eigenvectors
    return E, U


def band_fluxes(p: int, q: int, shape=(24, 24)) -> list[PlaquetteField]:
    _, U = hofstadter_grid(p, q, shape)
    dual = magnetic_bz(q)
    return [plaquette_flux(U[..., :, r], dual) for r in range(q)]


def hofstadter_chern(p: int, q: int, shape=(24, 24)) -> list[tuple[int, float]]:
    """``(chern, residual)`` for every band, lowest first."""
    return [chern_number(f) for f in band_fluxes(p, q, shape)]


def tknn_chern(p: int, q: int) -> list[int]:
    """Band Chern numbers from the Diophantine equation ``r = q s_r + p t_r``.

    ``t_r`` is the solution of ``p t_r = r (mod q)`` with ``|t_r| <= q/2`` and
    ``c_r = t_r - t_{r-1}`` (``t_0 = 0``, ``t_q = 0``). Valid for odd ``q``; for even
    ``q`` the middle gap is closed and the two central bands share a Chern number.
    """
    check_flux(p, q)
    t = [0]
    for r in range(1, q + 1):
        sol = [tt for tt in range(-q, q + 1) if (p * tt - r) % q == 0 and abs(tt) <= q / 2]
        t.append(min(sol, key=abs) if r < q else 0)
    return [t[r] - t[r - 1] for r in range(1, q + 1)]
