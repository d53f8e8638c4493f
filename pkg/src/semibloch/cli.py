"""Command-line entry point ``semibloch``.

Exit codes: 0 success, 2 configuration error, 3 numerical-validity error,
4 inconclusive convergence.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericalValidityError
from .io import bands_csv, geometry_csv, trajectory_csv, wavefield_csv, wigner_csv, write_csv, write_json

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_INCONCLUSIVE = 0, 2, 3, 4

log = logging.getLogger("semibloch")


def _common(args, sc) -> dict:
    return {"scenario": str(sc.path), "name": sc.name, "seed": args.seed, "command": args.command}


def cmd_bands(args, sc) -> int:
    from .lattice import PlaneWaveBasis, band_energies, bz_grid

    sec = sc.section("bands")
    n_bands = int(sec.get("n_bands", 4))
    basis = PlaneWaveBasis.for_bands(sc.lattice, n_bands)
    if sc.dim == 1:
        nk = int(sec.get("k_points", 201))
        b = float(sc.lattice.dual_basis[0, 0])
        k = np.linspace(-0.5 * b, 0.5 * b, nk)[:, None]
    else:
        shape = tuple(int(n) for n in sec.get("grid", [24, 24]))
        k = bz_grid(sc.lattice, shape, centered=True).reshape(-1, 2)
    E = band_energies(k, sc.potential, basis, n_bands)
    edge = sc.lattice.dual_basis[0] / 2
    E_edge = band_energies(edge[None], sc.potential, basis, n_bands)[0]
    meta = {**_common(args, sc), "n_bands": n_bands, "basis_size": basis.size, "cutoff": basis.cutoff}
    bands_csv(args.output / "bands.csv", k, E, meta)
    gaps = [float(E[:, n + 1].min() - E[:, n].max()) for n in range(n_bands - 1)]
    write_json(args.output / "bands.json", {**meta, "edge_energies": E_edge, "edge_gaps": np.diff(E_edge), "band_gaps": gaps})
    print(f"edge gap (bands 1-2): {E_edge[1] - E_edge[0]:.10g}")
    return EXIT_OK


def cmd_geometry(args, sc) -> int:
    from .geometry import chern_number, gauge_sensitivity, geometry_grid
    from .lattice import PlaneWaveBasis

    sec = sc.section("geometry")
    bands = [int(b) for b in sec.get("bands", [sc.band])]
    shape = tuple(int(n) for n in np.atleast_1d(sec.get("grid", [24] * sc.dim)))
    basis = PlaneWaveBasis.for_bands(sc.lattice, max(bands) + 1)
    report = {**_common(args, sc), "grid": shape, "basis_size": basis.size, "bands": []}
    for n in bands:
        grid = geometry_grid(sc.potential, basis, n, shape)
        geometry_csv(args.output / f"geometry_band{n}.csv", grid, {**report, "band": n, "n_sum": grid.n_sum})
        entry = {"band": n, "min_gap": grid.min_gap, "n_sum": grid.n_sum}
        if sc.dim == 2:
            c, resid = chern_number(grid.plaquettes)
            entry.update(chern=c, residual=resid, max_abs_omega=float(np.abs(grid.curvature).max()))
            if args.seed is not None:
                entry["gauge_change"] = gauge_sensitivity(sc.potential, basis, n, shape, np.random.default_rng(args.seed))
        report["bands"].append(entry)
        print(f"band {n}: " + ", ".join(f"{k}={v}" for k, v in entry.items() if k != "gauge_change"))
    write_json(args.output / "geometry.json", report)
    return EXIT_OK


def cmd_hofstadter(args, sc) -> int:
    from .hofstadter import hofstadter_chern, tknn_chern

    sec = sc.section("hofstadter")
    p, q = int(sec.get("p", 1)), int(sec.get("q", 3))
    shape = tuple(int(n) for n in sec.get("grid", [24, 24]))
    cherns = hofstadter_chern(p, q, shape)
    oracle = tknn_chern(p, q)
    rows = [(r + 1, c, res, t) for r, ((c, res), t) in enumerate(zip(cherns, oracle))]
    meta = {**_common(args, sc), "flux": [p, q], "grid": shape}
    write_csv(args.output / "hofstadter.csv", ["band", "chern", "residual", "tknn"], rows, meta)
    records = [{"flux": [p, q], "band": r, "chern": c, "residual": res, "tknn": t} for r, c, res, t in rows]
    ok = [c for c, _ in cherns] == oracle
    write_json(args.output / "hofstadter.json", {**meta, "bands": records, "matches_tknn": ok, "sum": sum(c for c, _ in cherns)})
    print(f"flux {p}/{q}: chern {[c for c, _ in cherns]} tknn {oracle}")
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_flow(args, sc) -> int:
    from .semiflow import FlowSpec, PhasePointKinetic, integrate_flow

    sec = sc.section("flow")
    spec = FlowSpec(
        float(sec.get("epsilon", 0.1)), _band_model(sc), sc.fields, order=int(sec.get("order", 1)),
        dt=float(sec.get("dt", 1e-3)), integrator=str(sec.get("integrator", "rk4")),
    )
    z0 = PhasePointKinetic(np.asarray(sec.get("r", [0.0] * sc.dim), float), np.asarray(sec.get("kappa", [0.0] * sc.dim), float))
    traj = integrate_flow(z0, float(sec.get("t_final", 1.0)), spec, int(sec.get("record_every", 1)))
    meta = {**_common(args, sc), **{k: sec[k] for k in sorted(sec)}}
    trajectory_csv(args.output / "trajectory.csv", traj, meta)
    write_json(args.output / "flow.json", {**meta, "energy_drift": traj.energy_drift, "final_r": traj.r[-1], "final_kappa": traj.kappa[-1]})
    print(f"relative H_sc drift {traj.energy_drift:.3e}")
    return EXIT_OK


def _band_model(sc, points: int | None = None):
    from .geometry import BandInterpolant, geometry_grid
    from .lattice import PlaneWaveBasis
    from .semiflow import FreeBand

    if sc.free_band:
        return FreeBand(sc.dim)
    grids = sc.section("grids")
    n = int(points or grids.get("geometry_points", 64 if sc.dim == 1 else 24))
    basis = PlaneWaveBasis.for_bands(sc.lattice, sc.band + 1)
    return BandInterpolant(geometry_grid(sc.potential, basis, sc.band, (n,) * sc.dim))


def _packet(sc, eps: float):
    exp = sc.experiment(epsilons=[eps], require_observable=False)
    return exp, exp.initial_state(eps)


def cmd_wigner(args, sc) -> int:
    from .wigner import band_leakage, fold_wigner, grid_basis, marginals, wigner_l2_norm, wigner_series, wigner_transform

    eps = float(sc.section("wigner").get("epsilon", 0.125))
    exp, psi = _packet(sc, eps)
    w = wigner_transform(psi)
    red = fold_wigner(w)
    series = wigner_series(psi)
    _, _, mass = marginals(w)
    meta = {**_common(args, sc), "epsilon": eps, **exp.settings()}
    wigner_csv(args.output / "wigner.csv", w, meta)
    wigner_csv(args.output / "wigner_reduced.csv", series, meta)
    report = {
        **meta,
        "mass": mass,
        "l2_norm": wigner_l2_norm(w),
        "l2_expected": (2 * np.pi * eps) ** (-psi.dim / 2) * psi.norm_sq,
        "fold_vs_series": float(np.abs(red.values - series.values).max()),
        "leakage": band_leakage(psi, sc.band, sc.potential, grid_basis(sc.lattice, psi.points_per_cell)),
    }
    write_json(args.output / "wigner.json", report)
    print(f"mass {mass:.12f}, fold-vs-series {report['fold_vs_series']:.2e}")
    return EXIT_OK


def cmd_evolve(args, sc) -> int:
    from .schrodinger import energy_expectation, evolve

    sec = sc.section("evolve")
    eps = float(sec.get("epsilon", 0.0625))
    t_final = float(sec.get("t_final", 1.0))
    exp, psi0 = _packet(sc, eps)
    spec = exp.oracle(eps)
    n_steps = int(np.ceil(t_final / spec.dt - 1e-9))
    every = max(1, n_steps // max(1, int(sec.get("snapshots", 4))))
    final, snaps = evolve(psi0, t_final, spec, snapshot_every=every)
    meta = {**_common(args, sc), "epsilon": eps, "t_final": t_final, "dt": spec.dt, **exp.settings()}
    for i, (t, field) in enumerate(snaps):
        wavefield_csv(args.output / f"snapshot_{i:03d}.csv", field, {**meta, "t": t})
    e0, e1 = energy_expectation(psi0, spec), energy_expectation(final, spec)
    report = {**meta, "snapshot_times": [t for t, _ in snaps], "norm_drift": abs(final.norm_sq - psi0.norm_sq), "energy": [e0, e1]}
    write_json(args.output / "evolve.json", report)
    print(f"{len(snaps)} snapshots, energy {e0:.10g} -> {e1:.10g}")
    return EXIT_OK


def cmd_egorov(args, sc) -> int:
    from .harness import egorov_terms

    exp = sc.experiment(order=args.order)
    eps = float(args.epsilon if args.epsilon is not None else exp.epsilons[0])
    res = egorov_terms(exp, eps, t=args.time)
    result = {k: v for k, v in vars(res).items() if k != "runtime"}
    write_json(args.output / "egorov.json", {**_common(args, sc), **exp.settings(), "result": result})
    print(f"eps={eps:g} error={res.error:.6e} floor={res.floor:.2e}")
    return EXIT_OK


def cmd_converge(args, sc) -> int:
    from .harness import convergence_study

    exp = sc.experiment(order=args.order)
    rep = convergence_study(exp, threads=args.threads)
    rows = [(r.epsilon, r.error, r.floor, r.lhs, r.rhs, int(a)) for r, a in zip(rep.results, rep.above_floor)]
    meta = {**_common(args, sc), **exp.settings()}
    write_csv(args.output / "convergence.csv", ["epsilon", "error", "floor", "lhs", "rhs", "above_floor"], rows, meta)
    payload = {**meta, "report": rep.to_dict()}
    payload["report"].pop("runtime")
    for r in payload["report"]["results"]:
        r.pop("runtime")
    log.info("converge took %.1fs", rep.runtime)
    write_json(args.output / "convergence.json", payload)
    print(f"slope {rep.slope:.4f}, C {rep.constant:.4g}, monotone {rep.monotone}, inconclusive {rep.inconclusive}")
    return EXIT_INCONCLUSIVE if rep.inconclusive else EXIT_OK


COMMANDS = {
    "bands": (cmd_bands, "band structure CSV"),
    "geometry": (cmd_geometry, "Berry curvature, magnetic moment and Chern export"),
    "hofstadter": (cmd_hofstadter, "Hofstadter Chern table"),
    "flow": (cmd_flow, "semiclassical trajectory CSV"),
    "wigner": (cmd_wigner, "Wigner transform and fold exports"),
    "evolve": (cmd_evolve, "Schrodinger oracle run with snapshots"),
    "egorov": (cmd_egorov, "single Egorov error"),
    "converge": (cmd_converge, "convergence study with JSON report"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semibloch", description=__doc__.splitlines()[0])
    parser.add_argument("-s", "--scenario", type=Path, required=True, help="YAML scenario file")
    parser.add_argument("-o", "--output", type=Path, default=Path("out"), help="output directory")
    parser.add_argument("-j", "--threads", type=int, default=1, help="worker threads for independent runs")
    parser.add_argument("--seed", type=int, default=None, help="seed for randomized gauge checks")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("-q", "--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        if name in ("egorov", "converge"):
            p.add_argument("--order", type=int, choices=(0, 1), default=None)
        if name == "egorov":
            p.add_argument("--epsilon", type=float, default=None)
            p.add_argument("--time", type=float, default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    level = logging.WARNING - 10 * args.verbose if not args.quiet else logging.ERROR
    logging.basicConfig(level=max(level, logging.DEBUG), format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    os.environ.setdefault("OMP_NUM_THREADS", str(args.threads))
    from .scenario import load_scenario

    start = time.perf_counter()
    try:
        sc = load_scenario(args.scenario)
        args.output.mkdir(parents=True, exist_ok=True)
        code = COMMANDS[args.command][0](args, sc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalValidityError as exc:
        print(f"numerical validity error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    log.info("%s finished in %.2fs", args.command, time.perf_counter() - start)
    return code


if __name__ == "__main__":
    sys.exit(main())
