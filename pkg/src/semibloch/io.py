"""CSV and JSON exports.

Every CSV starts with ``# key: value`` comment lines holding the settings that
produced it, followed by a header row. Floats are written with ``repr`` so
identical runs give byte-identical files. JSON reports are written with sorted
keys; numpy scalars and arrays become plain numbers and lists, non-finite
values become ``null``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .lattice import Lattice
from .wigner import ReducedWigner, WaveField, WignerGrid


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def to_jsonable(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return to_jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_csv(path, header, rows, meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        for key in sorted(meta or {}):
            fh.write(f"# {key}: {json.dumps(to_jsonable(meta[key]), sort_keys=True)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


def read_csv(path) -> tuple[dict, list, np.ndarray]:
    """Return ``(meta, header, data)`` from a file written by :func:`write_csv`."""
    meta, lines = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# "):
            key, _, val = line[2:].partition(": ")
            meta[key] = json.loads(val)
        elif line:
            lines.append(line)
    rows = list(csv.reader(lines))
    data = np.array([[float(x) for x in r] for r in rows[1:]]) if len(rows) > 1 else np.zeros((0, len(rows[0])))
    return meta, rows[0], data


def _axes(prefix: str, d: int) -> list[str]:
    return [f"{prefix}{i + 1}" for i in range(d)]


def bands_csv(path, k, energies, meta=None) -> Path:
    k = np.atleast_2d(np.asarray(k, dtype=float))
    d = k.shape[1]
    header = _axes("k", d) + [f"E{n + 1}" for n in range(energies.shape[1])]
    return write_csv(path, header, np.hstack([k, energies]), meta)


def geometry_csv(path, grid, meta=None) -> Path:
    """Columns: k, E, grad E, Omega_ij and M_ij (``i < j``)."""
    d = grid.lattice.dim
    k = grid.k_points.reshape(-1, d)
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    cols = [k, grid.energy.reshape(-1, 1), grid.grad_energy.reshape(-1, d)]
    cols += [grid.curvature[..., i, j].reshape(-1, 1) for i, j in pairs]
    cols += [grid.moment[..., i, j].reshape(-1, 1) for i, j in pairs]
    header = _axes("k", d) + ["E"] + _axes("dE", d)
    header += [f"Omega{i + 1}{j + 1}" for i, j in pairs] + [f"M{i + 1}{j + 1}" for i, j in pairs]
    return write_csv(path, header, np.hstack(cols), meta)


def trajectory_csv(path, traj, meta=None) -> Path:
    d = traj.r.shape[1]
    header = ["t"] + _axes("r", d) + _axes("kappa", d) + _axes("k", d) + ["H_sc"]
    data = np.hstack([traj.times[:, None], traj.r, traj.kappa, traj.k, traj.energy[:, None]])
    return write_csv(path, header, data, meta)


def wavefield_meta(psi: WaveField) -> dict:
    return {
        "epsilon": psi.epsilon,
        "lattice": psi.lattice.basis.tolist(),
        "cells": list(psi.cells),
        "points_per_cell": psi.points_per_cell,
        "origin": psi.origin.tolist(),
    }


def wavefield_csv(path, psi: WaveField, meta=None) -> Path:
    """Grid header in the comment block, then one row per sample: position, re, im."""
    x = psi.positions().reshape(-1, psi.dim)
    s = psi.samples.reshape(-1)
    data = np.hstack([x, s.real[:, None], s.imag[:, None]])
    return write_csv(path, _axes("x", psi.dim) + ["re", "im"], data, {**(meta or {}), **wavefield_meta(psi)})


def read_wavefield_csv(path) -> WaveField:
    meta, _, data = read_csv(path)
    try:
        lattice = Lattice(meta["lattice"])
        cells = tuple(meta["cells"])
        P = int(meta["points_per_cell"])
    except KeyError as exc:
        raise ConfigError(f"{path}: missing grid header {exc}") from None
    shape = tuple(c * P for c in cells)
    samples = (data[:, -2] + 1j * data[:, -1]).reshape(shape)
    return WaveField(float(meta["epsilon"]), lattice, cells, P, samples, np.asarray(meta["origin"], dtype=float))


def wigner_csv(path, w: WignerGrid | ReducedWigner, meta=None) -> Path:
    """Columns ``q, p, w`` (or ``r, k, w`` for the reduced function); cell volumes in the header."""
    d = w.lattice.dim
    if isinstance(w, WignerGrid):
        q, p, cell = w.q_points, w.p_points, {"dq": w.dq, "dp": w.dp}
        names = _axes("q", d) + _axes("p", d)
    else:
        q, p, cell = w.r_points, w.k_points, {"dr": w.dr, "dk": w.dk}
        names = _axes("r", d) + _axes("k", d)
    nq = int(np.prod(w.values.shape[:d]))
    npts = int(np.prod(w.values.shape[d:]))
    Q = np.repeat(q.reshape(nq, d), npts, axis=0)
    Pm = np.tile(p.reshape(npts, d), (nq, 1))
    data = np.hstack([Q, Pm, w.values.reshape(-1, 1)])
    header_meta = {**(meta or {}), **cell, "epsilon": w.epsilon, "shape": list(w.values.shape)}
    return write_csv(path, names + ["w"], data, header_meta)
