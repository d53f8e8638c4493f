"""Acceptance criteria 1-9, one test each, with a PASS/FAIL line per criterion."""
import time

import numpy as np
import pytest

from conftest import SCENARIOS
from oracles import leading_order_field, free_bands, free_gaussian, momentum_density, perturbative_edge_gap
from semibloch.fields import GaussianPolynomial, ScalarField
from semibloch.geometry import BandInterpolant, berry_curvature_sos, chern_number, gauge_sensitivity, geometry_grid
from semibloch.harness import convergence_study, transport_study
from semibloch.hofstadter import hofstadter_chern, tknn_chern
from semibloch.lattice import TWO_PI, FourierPotential, Lattice, PlaneWaveBasis, band_energies, bloch_hamiltonian, bz_grid
from semibloch.scenario import load_scenario
from semibloch.schrodinger import OracleSpec, evolve
from semibloch.semiflow import (
    FlowSpec,
    PhasePointKinetic,
    _energy_terms,
    _local,
    flow_map,
    flow_vector_field,
    integrate_flow,
    symplectic_matrix,
)
from semibloch.wigner import (
    PeriodicObservable,
    WaveField,
    build_band_wavepacket,
    fold_wigner,
    grid_basis,
    marginals,
    pair_direct,
    pair_reduced,
    wigner_l2_norm,
    wigner_series,
    wigner_transform,
)


@pytest.fixture
def verdict(capsys):
    def emit(n: int, checks: dict, elapsed: float, budget: float, info: str = ""):
        checks = {**checks, f"time {elapsed:.1f}s <= {budget:g}s": elapsed <= budget}
        ok = all(checks.values())
        parts = [f"{name} [{'ok' if v else 'FAIL'}]" for name, v in checks.items()]
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'} | " + "; ".join(parts)
        if info:
            line += f" | {info}"
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return emit


def test_criterion_1_free_bands(verdict):
    start = time.perf_counter()
    errs = []
    for lat, shape in ((Lattice.chain(), (41,)), (Lattice([[TWO_PI, 0.0], [2.0, 5.0]]), (9, 9))):
        basis = PlaneWaveBasis.for_bands(lat, 6)
        k = bz_grid(lat, shape, centered=True).reshape(-1, lat.dim)
        E = band_energies(k, FourierPotential.zero(lat), basis, 6)
        errs.append(float(np.abs(E - free_bands(k, basis.indices, lat.dual_basis, 6)).max()))
    elapsed = time.perf_counter() - start
    verdict(1, {f"1D max err {errs[0]:.1e} <= 1e-12": errs[0] <= 1e-12, f"2D max err {errs[1]:.1e} <= 1e-12": errs[1] <= 1e-12}, elapsed, 1)


def test_criterion_2_perturbative_gap(verdict):
    start = time.perf_counter()
    v = 0.05
    V = FourierPotential.cosine_1d(v)
    basis = PlaneWaveBasis.for_bands(V.lattice, 4)
    E = band_energies(V.lattice.dual_basis / 2, V, basis, 2)[0]
    gap = E[1] - E[0]
    rel = abs(gap - perturbative_edge_gap(v)) / perturbative_edge_gap(v)
    elapsed = time.perf_counter() - start
    verdict(2, {f"edge gap {gap:.6f} vs {2 * v} (rel {rel:.2%}) within 5%": rel <= 0.05}, elapsed, 1)


def test_criterion_3_geometry_invariants(verdict, potential_2d, potential_2d_even, basis_2d):
    start = time.perf_counter()
    gauge = gauge_sensitivity(potential_2d, basis_2d, 1, (24, 24), np.random.default_rng(2024))
    rng = np.random.default_rng(11)
    k = rng.uniform(-0.5, 0.5, size=(40, 2)) @ potential_2d.lattice.dual_basis
    om = np.array([berry_curvature_sos(kk, potential_2d, basis_2d, 1)[0, 1] for kk in k])
    om_neg = np.array([berry_curvature_sos(-kk, potential_2d, basis_2d, 1)[0, 1] for kk in k])
    tr = float(np.abs(om + om_neg).max())
    even = geometry_grid(potential_2d_even, PlaneWaveBasis.for_bands(potential_2d_even.lattice, 1), 1, (48, 48))
    inv = float(np.abs(even.curvature).max())
    elapsed = time.perf_counter() - start
    verdict(
        3,
        {
            f"gauge change {max(gauge.values()):.1e} < 1e-10": max(gauge.values()) < 1e-10,
            f"Omega(-k)+Omega(k) {tr:.1e} <= 1e-8": tr <= 1e-8,
            f"inversion max|Omega| {inv:.1e} <= 1e-6 on 48^2": inv <= 1e-6,
        },
        elapsed,
        30,
        f"max|Omega| without inversion symmetry {np.abs(om).max():.3e}",
    )


def test_criterion_4_chern(verdict, grid_2d):
    start = time.perf_counter()
    c_cont, r_cont = chern_number(grid_2d.plaquettes)
    hof = hofstadter_chern(1, 3, (24, 24))
    cherns = [c for c, _ in hof]
    resid = max([r for _, r in hof] + [r_cont])
    elapsed = time.perf_counter() - start
    verdict(
        4,
        {
            f"pre-rounding residual {resid:.1e} < 1e-6": resid < 1e-6,
            f"flux 1/3 Cherns {cherns} == (1, -2, 1)": cherns == [1, -2, 1],
            f"TKNN oracle {tknn_chern(1, 3)}": cherns == tknn_chern(1, 3),
            f"band sum {sum(cherns)} == 0": sum(cherns) == 0,
        },
        elapsed,
        10,
        f"continuum band-1 Chern {c_cont}",
    )


def test_criterion_5_flow_structure(verdict, potential_2d, basis_2d, fields_2d):
    start = time.perf_counter()
    band = BandInterpolant(geometry_grid(potential_2d, basis_2d, 1, (24, 24)))
    z0 = PhasePointKinetic(np.array([0.5, -0.3]), np.array([0.1, 0.2]))
    spec = FlowSpec(0.2, band, fields_2d, order=1, dt=1e-3)
    traj = integrate_flow(z0, 10.0, spec, record_every=100)
    drift = traj.energy_drift

    rdot, kdot = flow_vector_field(traj.r, traj.kappa, spec)
    _, _, phi, gphi, B, gB, E, gE, _, M, gM = _local(traj.r, traj.kappa, spec)
    _, dHr, dHk = _energy_terms(spec, phi, gphi, B, gB, E, gE, M, gM)
    lhs = np.einsum("pij,pj->pi", symplectic_matrix(traj.r, traj.kappa, spec), np.hstack([rdot, kdot]))
    resid = float(np.abs(lhs - np.hstack([dHr, dHk])).max())

    r1, k1 = flow_map(z0.r, z0.kappa, 1.0, spec)
    rb, kb = flow_map(r1, k1, -1.0, spec)
    rev = float(max(np.abs(rb - z0.r).max(), np.abs(kb - z0.kappa).max()))

    rng = np.random.default_rng(5)
    r = rng.uniform(-25, 25, size=(200, 2))
    kappa = rng.uniform(-1, 1, size=(200, 2))
    ro, ko = leading_order_field(r, kappa, band.evaluate(kappa)[1], fields_2d.potential(r)[1], fields_2d.magnetic(r)[0])
    rz, kz = flow_vector_field(r, kappa, FlowSpec(0.0, band, fields_2d, order=1))
    lead = float(max(np.abs(rz - ro).max(), np.abs(kz - ko).max()))
    elapsed = time.perf_counter() - start
    verdict(
        5,
        {
            f"H_sc drift {drift:.1e} <= 1e-8 (t=10, dt=1e-3)": drift <= 1e-8,
            f"Theta z' - dH {resid:.1e} <= 1e-12": resid <= 1e-12,
            f"reversibility {rev:.1e} <= 1e-8": rev <= 1e-8,
            f"eps=0 vs leading-order field {lead:.1e} <= 1e-12": lead <= 1e-12,
        },
        elapsed,
        30,
    )


def test_criterion_6_wigner(verdict, cosine_1d, observable_1d):
    start = time.perf_counter()
    eps = 0.125
    psi = build_band_wavepacket(1, [-0.1], eps / 2.5, eps, cosine_1d, grid_basis(cosine_1d.lattice, 16), (36,), 16)
    w = wigner_transform(psi)
    pos, mom, mass = marginals(w)
    x = psi.positions()[:, 0]
    pos_err = float(np.abs(pos - np.abs(psi.samples) ** 2).max())
    mom_err = float(np.abs(mom - momentum_density(x, psi.samples, psi.dx, w.p_points[:, 0], eps)).max())
    mass_err = abs(mass - psi.norm_sq)
    expected = psi.norm_sq / np.sqrt(TWO_PI * eps)
    l2 = abs(wigner_l2_norm(w) - expected) / expected
    series = wigner_series(psi)
    fold = float(np.abs(fold_wigner(w).values - series.values).max())
    pairing = abs(pair_direct(psi, observable_1d) - pair_reduced(series, observable_1d))
    elapsed = time.perf_counter() - start
    verdict(
        6,
        {
            f"position marginal {pos_err:.1e} <= 1e-6": pos_err <= 1e-6,
            f"momentum marginal {mom_err:.1e} <= 1e-6": mom_err <= 1e-6,
            f"mass {mass_err:.1e} <= 1e-6": mass_err <= 1e-6,
            f"L2 identity rel {l2:.1e} <= 1e-4": l2 <= 1e-4,
            f"fold vs series {fold:.1e} <= 1e-10": fold <= 1e-10,
            f"pairing cross-check {pairing:.1e} <= 1e-6": pairing <= 1e-6,
        },
        elapsed,
        60,
    )


def test_criterion_7_oracle(verdict, cosine_1d, slope_fields_1d):
    start = time.perf_counter()
    eps, s, p0, t = 0.1, 1.0, 0.5, 2.0
    lat = Lattice.chain()
    psi = WaveField(eps, lat, (64,), 16, np.zeros(1024))
    x = psi.positions()[:, 0]
    out = evolve(psi.with_samples(free_gaussian(x, 0.0, eps, s, -1.0, p0)), t, OracleSpec(FourierPotential.zero(lat), eps))
    free_err = float(np.sqrt(out.dx * np.sum(np.abs(out.samples - free_gaussian(x, t, eps, s, -1.0, p0)) ** 2)))

    eps = 1 / 16
    psi = build_band_wavepacket(1, [-0.1], eps / 2.5, eps, cosine_1d, grid_basis(cosine_1d.lattice, 16), (140,), 16)
    dt = OracleSpec(cosine_1d, eps).dt
    runs = {h: evolve(psi, 0.5, OracleSpec(cosine_1d, eps, slope_fields_1d, dt=dt / h)).samples for h in (1, 2, 4, 8)}
    err = lambda h, ref: np.sqrt(psi.dx * np.sum(np.abs(runs[h] - ref) ** 2))
    richardson = (4 * runs[8] - runs[4]) / 3
    ratio = err(1, richardson) / err(2, richardson)
    literal = err(1, runs[4]) / err(2, runs[4])

    V = FourierPotential.cosine_1d(0.2)
    eps, cells = 0.125, (32,)
    basis = grid_basis(V.lattice, 16)
    k = 6 / cells[0] * V.lattice.dual_basis[0]
    E, U = np.linalg.eigh(bloch_hamiltonian(k, V, basis))
    bw = WaveField(eps, V.lattice, cells, 16, np.zeros(512))
    xb = bw.positions()[:, 0]
    bw = bw.with_samples(np.exp(1j * np.outer(xb, (k + basis.g_vectors[:, 0]) / eps)) @ U[:, 0]).normalized()
    moved = evolve(bw, 1.0, OracleSpec(V, eps, dt=0.01 * eps), monitor=False)
    overlap = float((bw.dx * np.vdot(np.exp(-1j * E[0] / eps) * bw.samples, moved.samples)).real)
    elapsed = time.perf_counter() - start
    verdict(
        7,
        {
            f"free Gaussian L2 {free_err:.1e} <= 1e-8": free_err <= 1e-8,
            f"Strang ratio {ratio:.3f} in 4 +/- 20%": abs(ratio - 4) <= 0.8,
            f"Bloch overlap 1 - {1 - overlap:.1e} >= 1 - 1e-6": overlap >= 1 - 1e-6,
        },
        elapsed,
        300,
        f"ratio against the plain dt/4 run {literal:.3f} (pure dt^2 error gives 5)",
    )


def test_criterion_8_egorov_rate(verdict):
    start = time.perf_counter()
    exp = load_scenario(SCENARIOS / "cosine1d.yaml").experiment()
    assert exp.epsilons == [1 / 8, 1 / 16, 1 / 32, 1 / 64] and exp.t_final == 1.0 and exp.order == 0
    rep = convergence_study(exp, order=0)
    rep1 = convergence_study(exp, order=1)
    floor = max(rep.floors)
    errors = ", ".join(f"{e:.3e}" for e in rep.errors)
    elapsed = time.perf_counter() - start
    verdict(
        8,
        {
            f"errors strictly decreasing ({errors})": rep.monotone,
            f"slope {rep.slope:.3f} >= 0.9": rep.slope >= 0.9,
            f"t=0 floor {floor:.1e} <= 1e-6": floor <= 1e-6,
            "errors above 3x floor": all(rep.above_floor),
        },
        elapsed,
        600,
        f"order-1 slope {rep1.slope:.3f} (informational; the flows coincide in d = 1)",
    )


def test_criterion_9_transport(verdict, cosine_1d):
    start = time.perf_counter()
    exp = load_scenario(SCENARIOS / "cosine1d.yaml").experiment()
    lat = cosine_1d.lattice
    observables = [
        PeriodicObservable.position(lat, ScalarField(1, [GaussianPolynomial([((1,), 1.0)], [0.0], 3.0)])),
        PeriodicObservable.cosine(lat, (1,), ScalarField(1, [GaussianPolynomial([((0,), 1.0)], [0.0], 2.0)])),
        PeriodicObservable.sine(lat, (1,), ScalarField(1, [GaussianPolynomial([((0,), 1.0)], [0.5], 1.5)])),
    ]
    rep = transport_study(exp, observables, [1 / 8, 1 / 16, 1 / 32])
    errs = np.array(rep.errors)
    bounded = bool(np.all(errs <= np.array(rep.constants)[None, :] * np.array(rep.epsilons)[:, None] * (1 + 1e-12)))
    elapsed = time.perf_counter() - start
    info = "; ".join(
        f"obs {j + 1}: C={c:.3g} slope={s:.2f} errors={', '.join(f'{e:.2e}' for e in errs[:, j])}"
        for j, (c, s) in enumerate(zip(rep.constants, rep.slopes))
    )
    verdict(
        9,
        {
            "errors <= C eps for all 3 observables": bounded,
            f"errors decreasing {rep.decreasing}": all(rep.decreasing),
        },
        elapsed,
        300,
        info + f" | reduced-density L1 gap {', '.join(f'{v:.2f}' for v in rep.l1)}",
    )
