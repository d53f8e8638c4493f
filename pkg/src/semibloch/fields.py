"""Bounded smooth external potentials ``phi(r)`` and ``A(r)``.

Every field is a finite sum of primitives with exact first and second
derivatives, so ``B_ij = d_i A_j - d_j A_i`` and its gradient are exact.
Fields that are linear or quadratic where the dynamics happens (a driving
electric field, a harmonic trap) are multiplied by a flat-top window that is
identically 1 on a box and vanishes smoothly outside it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError


def _as_points(r, d: int) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    return r.reshape(-1, d)


class Polynomial:
    """``p(x) = sum_alpha c_alpha x^alpha`` with exact gradient and Hessian.

    Value, gradient and Hessian are all linear maps of one shared monomial
    table, so evaluation is a single power and a single matrix product.
    """

    def __init__(self, coeffs):
        items = coeffs.items() if isinstance(coeffs, dict) else coeffs
        self.terms = [(tuple(int(e) for e in np.atleast_1d(a)), float(c)) for a, c in items]
        if not self.terms:
            raise ConfigError("polynomial needs at least one term")
        d = self.dim = len(self.terms[0][0])
        if any(len(a) != d or min(a) < 0 for a, _ in self.terms):
            raise ConfigError("polynomial exponents must be non-negative with a common length")
        table: dict[tuple, np.ndarray] = {}

        def add(alpha, slot, value):
            row = table.setdefault(alpha, np.zeros(1 + d + d * d))
            row[slot] += value

        for alpha, c in self.terms:
            add(alpha, 0, c)
            for i in range(d):
                if alpha[i] == 0:
                    continue
                gi = tuple(a - (m == i) for m, a in enumerate(alpha))
                add(gi, 1 + i, c * alpha[i])
                for j in range(d):
                    if gi[j] == 0:
                        continue
                    hij = tuple(a - (m == j) for m, a in enumerate(gi))
                    add(hij, 1 + d + i * d + j, c * alpha[i] * gi[j])
        self._exps = np.array(list(table), dtype=float).reshape(-1, d)
        self._coef = np.array(list(table.values()))

    def __call__(self, x):
        P, d = x.shape
        out = np.prod(x[:, None, :] ** self._exps, axis=-1) @ self._coef
        return out[:, 0], out[:, 1:1 + d], out[:, 1 + d:].reshape(P, d, d)

    def bound_on(self, radius: np.ndarray) -> float:
        return float(sum(abs(c) * np.prod(np.asarray(radius, float) ** np.array(a)) for a, c in self.terms))


def _bump(x):
    """``exp(-1/x)`` for ``x > 0`` and its first two derivatives."""
    safe = x > 1e-2
    xs = np.where(safe, x, 1.0)
    f = np.where(safe, np.exp(-1.0 / xs), 0.0)
    return f, f / xs**2, f * (1.0 / xs**4 - 2.0 / xs**3)


def smoothstep(x):
    """C-infinity step: 0 for ``x <= 0``, 1 for ``x >= 1``; returns ``(S, S', S'')``."""
    f, f1, f2 = _bump(x)
    g, g1, g2 = _bump(1.0 - x)
    g1 = -g1
    s = f + g
    N = f1 * g - f * g1
    S = f / s
    S1 = N / s**2
    S2 = (f2 * g - f * g2) / s**2 - 2.0 * N * (f1 + g1) / s**3
    return S, S1, S2


class Primitive:
    dim: int

    def eval(self, r: np.ndarray):
        """``(value, grad, hessian)`` at points ``r`` of shape ``(P, d)``."""
        raise NotImplementedError

    @property
    def bound(self) -> float:
        raise NotImplementedError


@dataclass
class Constant(Primitive):
    value: float
    dim: int = 1

    def eval(self, r):
        P, d = r.shape
        return np.full(P, float(self.value)), np.zeros((P, d)), np.zeros((P, d, d))

    @property
    def bound(self):
        return abs(self.value)


@dataclass
class Cosine(Primitive):
    """``amplitude * cos(wavevector . r + phase)``."""

    amplitude: float
    wavevector: Sequence[float]
    phase: float = 0.0

    @property
    def dim(self):
        return len(np.atleast_1d(self.wavevector))

    def eval(self, r):
        q = np.atleast_1d(np.asarray(self.wavevector, dtype=float))
        arg = r @ q + self.phase
        c, s = np.cos(arg), np.sin(arg)
        a = self.amplitude
        return a * c, -a * s[:, None] * q, -a * c[:, None, None] * np.outer(q, q)

    @property
    def bound(self):
        return abs(self.amplitude)


@dataclass
class GaussianPolynomial(Primitive):
    """``p(r - center) * exp(-|r - center|^2 / (2 width^2))``."""

    coeffs: object
    center: Sequence[float]
    width: float

    def __post_init__(self):
        self.poly = Polynomial(self.coeffs)

    @property
    def dim(self):
        return self.poly.dim

    def eval(self, r):
        x = r - np.asarray(self.center, dtype=float)
        w2 = float(self.width) ** 2
        p, dp, hp = self.poly(x)
        g = np.exp(-0.5 * np.einsum("pi,pi->p", x, x) / w2)
        dg = -x / w2 * g[:, None]
        hg = (np.einsum("pi,pj->pij", x, x) / w2**2 - np.eye(x.shape[1]) / w2) * g[:, None, None]
        return _product(p, dp, hp, g, dg, hg)

    @property
    def bound(self):
        w = float(self.width)
        total = 0.0
        for alpha, c in self.poly.terms:
            s = 1.0
            for n in alpha:
                s *= (n * w * w) ** (n / 2) * np.exp(-n / 2) if n else 1.0
            total += abs(c) * s
        return total


@dataclass
class WindowedPolynomial(Primitive):
    """``p(r - center) * W(r)``, ``W = 1`` on the box ``[lower, upper]`` and 0 beyond ``ramp``."""

    coeffs: object
    center: Sequence[float]
    lower: Sequence[float]
    upper: Sequence[float]
    ramp: Sequence[float]

    def __post_init__(self):
        self.poly = Polynomial(self.coeffs)
        for name in ("center", "lower", "upper", "ramp"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if arr.shape != (self.poly.dim,):
                raise ConfigError(f"windowed polynomial: {name} must have {self.poly.dim} components")
            setattr(self, name, arr)
        if np.any(self.ramp <= 0) or np.any(self.upper < self.lower):
            raise ConfigError("windowed polynomial: need ramp > 0 and upper >= lower")

    @property
    def dim(self):
        return self.poly.dim

    def window(self, r):
        P, d = r.shape
        if np.all((r >= self.lower) & (r <= self.upper)):
            return np.ones(P), np.zeros((P, d)), np.zeros((P, d, d))
        w = np.ones((P, d))
        w1 = np.zeros((P, d))
        w2 = np.zeros((P, d))
        for j in range(d):
            a = (r[:, j] - (self.lower[j] - self.ramp[j])) / self.ramp[j]
            b = ((self.upper[j] + self.ramp[j]) - r[:, j]) / self.ramp[j]
            ramp = (a < 1.0) | (b < 1.0)
            if not ramp.any():
                continue
            Sa, Sa1, Sa2 = smoothstep(a)
            Sb, Sb1, Sb2 = smoothstep(b)
            h = self.ramp[j]
            w[:, j] = Sa * Sb
            w1[:, j] = (Sa1 * Sb - Sa * Sb1) / h
            w2[:, j] = (Sa2 * Sb - 2.0 * Sa1 * Sb1 + Sa * Sb2) / h**2
        W = np.prod(w, axis=1)
        dW = np.zeros((P, d))
        hW = np.zeros((P, d, d))
        for i in range(d):
            others = np.prod(w[:, [m for m in range(d) if m != i]], axis=1)
            dW[:, i] = w1[:, i] * others
            hW[:, i, i] = w2[:, i] * others
            for j in range(d):
                if j != i:
                    rest = np.prod(w[:, [m for m in range(d) if m not in (i, j)]], axis=1)
                    hW[:, i, j] = w1[:, i] * w1[:, j] * rest
        return W, dW, hW

    def eval(self, r):
        p, dp, hp = self.poly(r - self.center)
        if np.all((r >= self.lower) & (r <= self.upper)):
            return p, dp, hp
        return _product(p, dp, hp, *self.window(r))

    @property
    def bound(self):
        reach = np.maximum(np.abs(self.lower - self.ramp - self.center), np.abs(self.upper + self.ramp - self.center))
        return self.poly.bound_on(reach)


def _product(p, dp, hp, g, dg, hg):
    val = p * g
    grad = dp * g[:, None] + p[:, None] * dg
    hess = (
        hp * g[:, None, None]
        + np.einsum("pi,pj->pij", dp, dg)
        + np.einsum("pi,pj->pij", dg, dp)
        + p[:, None, None] * hg
    )
    return val, grad, hess


@dataclass
class ScalarField:
    """Finite sum of primitives."""

    dim: int
    terms: list = field(default_factory=list)

    def __post_init__(self):
        for t in self.terms:
            if t.dim != self.dim:
                raise ConfigError(f"primitive {t!r} has dimension {t.dim}, field has {self.dim}")

    def eval(self, r):
        r = _as_points(r, self.dim)
        P = r.shape[0]
        val, grad, hess = np.zeros(P), np.zeros((P, self.dim)), np.zeros((P, self.dim, self.dim))
        for t in self.terms:
            v, g, h = t.eval(r)
            val, grad, hess = val + v, grad + g, hess + h
        return val, grad, hess

    def __call__(self, r):
        return self.eval(r)[0]

    @property
    def bound(self) -> float:
        return float(sum(t.bound for t in self.terms))


@dataclass
class ExternalFields:
    """Scalar potential ``phi`` and vector potential ``A`` (``None`` means ``A = 0``)."""

    dim: int
    phi: ScalarField | None = None
    A: list | None = None

    def __post_init__(self):
        if self.phi is None:
            self.phi = ScalarField(self.dim)
        if self.A is not None and len(self.A) != self.dim:
            raise ConfigError(f"vector potential needs {self.dim} components")

    @property
    def has_vector_potential(self) -> bool:
        return self.A is not None and any(c.terms for c in self.A)

    def potential(self, r):
        """``(phi, grad phi)``."""
        v, g, _ = self.phi.eval(r)
        return v, g

    def vector_potential(self, r):
        """``(A, J, H)`` with ``J[p, j, i] = d_i A_j`` and ``H[p, j, i, l] = d_i d_l A_j``."""
        r = _as_points(r, self.dim)
        P, d = r.shape
        A = np.zeros((P, d))
        J = np.zeros((P, d, d))
        H = np.zeros((P, d, d, d))
        if self.A is not None:
            for j, comp in enumerate(self.A):
                A[:, j], J[:, j], H[:, j] = comp.eval(r)
        return A, J, H

    def magnetic(self, r):
        """``(B, grad B)``: ``B[p, i, j] = d_i A_j - d_j A_i``, ``gradB[p, i, j, l] = d_l B_ij``."""
        _, J, H = self.vector_potential(r)
        B = np.swapaxes(J, 1, 2) - J
        gradB = np.swapaxes(H, 1, 2) - H
        return B, gradB


def uniform_field(dim: int) -> ExternalFields:
    return ExternalFields(dim)
