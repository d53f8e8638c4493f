"""YAML scenario files shared by all CLI subcommands.

Top-level keys (all optional except ``lattice`` and ``potential``)::

    name: cosine1d
    lattice: {basis: [[6.283185307179586]]}      # or {kind: chain|square, a: ...}
    potential:                                    # one of the three forms
      cosine: 0.2                                 #   V(y) = 2 v cos(2 pi y / a), d = 1
      coefficients: [[[1], 0.2, 0.0], ...]        #   [index, re, im]; -G partners filled in
      file: potential.txt                         #   relative to the scenario file
    band: 1
    free_band: false                              # use E = |k|^2/2 instead of the lattice band
    fields:
      phi: [<primitive>, ...]
      A: [[<primitive>, ...], [<primitive>, ...]] # one list per component
    packet: {k0: [-0.1], width: 1.25, center: [0.0], box_length: 28.0}
    observable: [{kind: cosine|sine|position, label: [1], amplitude: 1.0, field: [<primitive>, ...]}]
    epsilons: [0.125, 0.0625, 0.03125, 0.015625]
    t_final: 1.0
    order: 0
    grids: {geometry_points: 64, k_samples: 32, points_per_cell: 16, oracle_dt_ratio: 0.02, flow_dt: 0.02}
    bands: {n_bands: 4, k_points: 201}
    geometry: {grid: [48, 48], bands: [1]}
    hofstadter: {p: 1, q: 3, grid: [24, 24]}
    flow: {epsilon: 0.2, order: 1, dt: 0.001, t_final: 10.0, r: [0, 0], kappa: [0.1, 0.2], integrator: rk4, record_every: 10}
    wigner: {epsilon: 0.125}
    evolve: {epsilon: 0.0625, t_final: 1.0, snapshots: 4}

Primitives::

    {type: constant, value: 1.0}
    {type: cosine, amplitude: 0.1, wavevector: [1, 0], phase: 0}
    {type: gaussian_polynomial, coeffs: [[[1], 1.0]], center: [0], width: 3}
    {type: windowed_polynomial, coeffs: [[[1], -0.5]], center: [0], lower: [-9], upper: [9], ramp: [4]}

``coeffs`` lists ``[exponent tuple, coefficient]`` pairs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError
from .fields import Constant, Cosine, ExternalFields, GaussianPolynomial, ScalarField, WindowedPolynomial
from .harness import EgorovExperiment
from .lattice import TWO_PI, FourierPotential, Lattice, load_potential
from .wigner import PeriodicObservable

PRIMITIVES = {
    "constant": Constant,
    "cosine": Cosine,
    "gaussian_polynomial": GaussianPolynomial,
    "windowed_polynomial": WindowedPolynomial,
}


@dataclass
class Scenario:
    name: str
    path: Path | None
    raw: dict
    potential: FourierPotential
    fields: ExternalFields
    band: int = 1
    free_band: bool = False
    observable: PeriodicObservable | None = None
    sections: dict = field(default_factory=dict)

    @property
    def lattice(self) -> Lattice:
        return self.potential.lattice

    @property
    def dim(self) -> int:
        return self.lattice.dim

    def section(self, key: str) -> dict:
        val = self.raw.get(key) or {}
        if not isinstance(val, dict):
            raise ConfigError(f"section {key!r} must be a mapping")
        return val

    def experiment(self, epsilons=None, order=None, t_final=None, require_observable=True) -> EgorovExperiment:
        packet = self.section("packet")
        grids = self.section("grids")
        for key in ("k0", "width", "box_length"):
            if key not in packet:
                raise ConfigError(f"packet.{key} is required for experiments")
        if require_observable and self.observable is None:
            raise ConfigError("an observable is required for experiments")
        eps = epsilons if epsilons is not None else self.raw.get("epsilons")
        if not eps:
            raise ConfigError("epsilons are required for experiments")
        return EgorovExperiment(
            potential=self.potential,
            band=self.band,
            fields=self.fields,
            observable=self.observable,
            k0=_vector(packet["k0"], self.dim, "packet.k0"),
            packet_width=_positive(packet["width"], "packet.width"),
            box_length=packet["box_length"],
            epsilons=list(eps),
            t_final=float(self.raw.get("t_final", 1.0) if t_final is None else t_final),
            order=int(self.raw.get("order", 0) if order is None else order),
            center=_vector(packet.get("center", [0.0] * self.dim), self.dim, "packet.center"),
            points_per_cell=int(grids.get("points_per_cell", 16)),
            dt_ratio=float(grids.get("oracle_dt_ratio", 0.02)),
            flow_dt=float(grids.get("flow_dt", 0.02)),
            geometry_points=int(grids.get("geometry_points", 64)),
            k_samples=int(grids.get("k_samples", 32)),
            free_band=self.free_band,
            name=self.name,
        )


def _vector(v, d: int, what: str) -> np.ndarray:
    try:
        arr = np.asarray(v, dtype=float).reshape(-1)
    except (TypeError, ValueError):
        raise ConfigError(f"{what} must be a list of numbers") from None
    if arr.shape != (d,):
        raise ConfigError(f"{what} must have {d} components")
    return arr


def _positive(v, what: str) -> float:
    try:
        x = float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{what} must be a number") from None
    if not x > 0:
        raise ConfigError(f"{what} must be positive")
    return x


def _coeffs(rows, what: str):
    try:
        return [(tuple(int(e) for e in np.atleast_1d(alpha)), float(c)) for alpha, c in rows]
    except (TypeError, ValueError):
        raise ConfigError(f"{what}: coeffs must be [[exponents], value] pairs") from None


def build_primitive(spec: dict, d: int):
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError(f"primitive needs a 'type': {spec!r}")
    kind = spec["type"]
    args = {k: v for k, v in spec.items() if k != "type"}
    if kind not in PRIMITIVES:
        raise ConfigError(f"unknown primitive type {kind!r}; choose from {sorted(PRIMITIVES)}")
    if "coeffs" in args:
        args["coeffs"] = _coeffs(args["coeffs"], kind)
    if kind == "constant":
        args.setdefault("dim", d)
    try:
        prim = PRIMITIVES[kind](**args)
    except TypeError as exc:
        raise ConfigError(f"{kind}: {exc}") from None
    if prim.dim != d:
        raise ConfigError(f"{kind} primitive has dimension {prim.dim}, scenario has {d}")
    return prim


def build_field(items, d: int) -> ScalarField:
    if items is None:
        return ScalarField(d)
    if isinstance(items, dict):
        items = [items]
    return ScalarField(d, [build_primitive(p, d) for p in items])


def build_lattice(spec) -> Lattice:
    if not isinstance(spec, dict):
        raise ConfigError("lattice must be a mapping")
    if "basis" in spec:
        return Lattice(spec["basis"])
    kind = spec.get("kind")
    a = float(spec.get("a", TWO_PI))
    if kind == "chain":
        return Lattice.chain(a)
    if kind == "square":
        return Lattice.square(a)
    raise ConfigError("lattice needs 'basis' or kind: chain|square")


def build_potential(spec, lattice: Lattice | None, base: Path | None) -> FourierPotential:
    if spec is None or spec == "zero" or spec == {}:
        if lattice is None:
            raise ConfigError("a zero potential needs an explicit lattice")
        return FourierPotential.zero(lattice)
    if not isinstance(spec, dict):
        raise ConfigError("potential must be a mapping")
    if "file" in spec:
        path = Path(spec["file"])
        if base is not None and not path.is_absolute():
            path = base / path
        V = load_potential(path)
        if lattice is not None and not np.allclose(V.lattice.basis, lattice.basis):
            raise ConfigError(f"lattice in {path} differs from the scenario lattice")
        return V
    if lattice is None:
        raise ConfigError("potential needs a lattice")
    if "cosine" in spec:
        if lattice.dim != 1:
            raise ConfigError("potential.cosine is a 1D shorthand")
        return FourierPotential(lattice, {(1,): float(spec["cosine"]), (-1,): float(spec["cosine"])})
    if "coefficients" in spec:
        coeffs = {}
        for row in spec["coefficients"]:
            try:
                idx, re, im = row
                key = tuple(int(i) for i in np.atleast_1d(idx))
            except (TypeError, ValueError):
                raise ConfigError(f"potential coefficient {row!r} must be [index, re, im]") from None
            coeffs[key] = complex(float(re), float(im))
        for key, val in list(coeffs.items()):
            coeffs.setdefault(tuple(-x for x in key), np.conj(val))
        return FourierPotential(lattice, coeffs)
    raise ConfigError("potential needs one of: cosine, coefficients, file")


def build_observable(items, lattice: Lattice) -> PeriodicObservable:
    if isinstance(items, dict):
        items = [items]
    d = lattice.dim
    total = None
    for item in items:
        kind = item.get("kind", "cosine")
        f = build_field(item.get("field", [{"type": "constant", "value": 1.0}]), d)
        amp = float(item.get("amplitude", 1.0))
        if kind == "position":
            term = PeriodicObservable.position(lattice, f).scaled(amp)
        elif kind in ("cosine", "sine"):
            label = tuple(int(x) for x in np.atleast_1d(item.get("label", [1] + [0] * (d - 1))))
            term = getattr(PeriodicObservable, kind)(lattice, label, f, amp)
        else:
            raise ConfigError(f"unknown observable kind {kind!r}")
        total = term if total is None else total + term
    if total is None:
        raise ConfigError("observable list is empty")
    return total


def scenario_from_dict(raw: dict, path: Path | None = None) -> Scenario:
    if not isinstance(raw, dict):
        raise ConfigError("scenario must be a mapping")
    base = path.parent if path is not None else None
    lattice = build_lattice(raw["lattice"]) if "lattice" in raw else None
    V = build_potential(raw.get("potential"), lattice, base)
    d = V.lattice.dim
    fspec = raw.get("fields") or {}
    A = fspec.get("A")
    if A is not None:
        if len(A) != d:
            raise ConfigError(f"fields.A needs {d} components")
        A = [build_field(c, d) for c in A]
    fields = ExternalFields(d, build_field(fspec.get("phi"), d), A)
    band = int(raw.get("band", 1))
    if band < 1:
        raise ConfigError("band indices start at 1")
    obs = build_observable(raw["observable"], V.lattice) if raw.get("observable") else None
    return Scenario(
        name=str(raw.get("name", path.stem if path else "scenario")),
        path=path,
        raw=raw,
        potential=V,
        fields=fields,
        band=band,
        free_band=bool(raw.get("free_band", False)),
        observable=obs,
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"scenario file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    return scenario_from_dict(raw, path)
