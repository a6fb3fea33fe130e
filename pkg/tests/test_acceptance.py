"""Acceptance criteria 1-8 at full scale (HF and NH3, aug-cc-pVDZ).

Every criterion prints one ``criterion N: PASS|FAIL`` line with the measured
numbers; the lines are repeated in the pytest terminal summary. Expect about
an hour of single-core runtime, dominated by the ensemble Hessians and the
128x64 CPES scans.
"""

import json

import numpy as np
import pytest

from cbohf.cli import main
from cbohf.constants import HARTREE_TO_CM, cm_to_hartree
from cbohf.gradients import full_gradient
from cbohf.grid import (bond_axis, molecular_potential, photon_axis, polariton_decomposition, scan_cpes,
                        solve_eigenstates, uncoupled_reference)
from cbohf.hessian import base_state, harmonic_analysis
from cbohf.molecule import CavityMode, EnsembleSpec, build_ensemble, rescale_coupling
from cbohf.scf import SCFSettings, resolve_basis, scf_solve, solve_stationary
from cbohf.spectra import (SpectrumPeakSet, bare_fundamental, broaden, detuning_scan, fit_r2, frequency_grid,
                           rabi_analysis)

pytestmark = pytest.mark.acceptance

BASIS = "aug-cc-pvdz"
TIGHT = SCFSettings(e_conv=1e-12, d_conv=1e-10)
LAMBDAS = [0.009, 0.019, 0.029, 0.039]
GRID_STATES = 6


def report(log, n, checks):
    """Record one line per criterion; ``checks`` maps label -> (ok, detail)."""
    ok = all(c[0] for c in checks.values())
    detail = "; ".join(f"{k} {'ok' if c[0] else 'FAILED'} ({c[1]})" for k, c in checks.items())
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    log.append(line)
    return ok


@pytest.fixture(scope="module")
def hf_basis(hf_mol):
    return resolve_basis(hf_mol, BASIS)


@pytest.fixture(scope="module")
def bare_hf(hf_mol, hf_basis):
    """Harmonic HF fundamental with the cavity decoupled."""
    st = base_state(hf_mol, hf_basis, CavityMode(cm_to_hartree(4467.0), 0.0))
    res = harmonic_analysis(st)
    return bare_fundamental(SpectrumPeakSet.from_modes(res.modes)), res


@pytest.fixture(scope="module")
def grid_cache():
    return {}


def grid_run(cache, mol, mb, omega_cm, lam):
    """128x64 CPES at the stationary q_c, its eigenstates and the uncoupled reference."""
    key = (round(omega_cm, 6), lam)
    if key in cache:
        return cache[key]
    w = cm_to_hartree(omega_cm)
    cav = CavityMode(w, lam)
    if lam > 0:
        cav = solve_stationary(mol, mb, cav).cavity
    rax = bond_axis(mol, 0, 1, 128)
    vmol = molecular_potential(mol, mb, rax)
    grid = scan_cpes(mol, mb, [rax, photon_axis(w, cav.q, 64)], cav)
    states = solve_eigenstates(grid, GRID_STATES)
    ref = uncoupled_reference(grid, [vmol])
    cache[key] = (grid, states, ref)
    return cache[key]


def cm(states, j):
    return (states[j].energy - states[0].energy) * HARTREE_TO_CM


# ---------------------------------------------------------------------------


def test_criterion_1_decoupling(hf_mol, reference, acceptance_log):
    st = scf_solve(hf_mol, BASIS, CavityMode(cm_to_hartree(4467.0), 0.0, q=0.0), TIGHT)
    plain = scf_solve(hf_mol, BASIS, None, TIGHT)
    cart = scf_solve(hf_mol, BASIS, CavityMode(cm_to_hartree(4467.0), 0.0), TIGHT, spherical=False)
    d_ref = st.total_energy - reference["hf_augccpvdz_energy"]
    d_cart = cart.total_energy - reference["hf_augccpvdz_cartesian_energy"]
    d_path = abs(st.total_energy - plain.total_energy)
    d_dens = float(np.abs(st.D - plain.D).max())
    ok = report(acceptance_log, 1, {
        "reference": (abs(d_ref) < 1e-6, f"E={st.total_energy:.10f}, dE={d_ref:.1e}"),
        "cartesian": (abs(d_cart) < 1e-6, f"dE={d_cart:.1e}"),
        "lambda0 path": (d_path < 1e-12 and d_dens < 1e-12, f"dE={d_path:.1e}, dD={d_dens:.1e}"),
    })
    assert ok


def fd_gradient(mol, mb, cav, settings, h=1e-3, hq=1e-2):
    n = 3 * mol.natom
    out = np.zeros(n + 1)
    D = scf_solve(mol, mb, cav, settings).D
    w = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0
    for j in range(n + 1):
        e = []
        step = h if j < n else hq
        for s in (-2, -1, 1, 2):
            if j < n:
                R = mol.coords.copy()
                R[j // 3, j % 3] += s * step
                m = mol.with_coords(R)
                e.append(scf_solve(m, mb, cav, settings, guess=D).total_energy)
            else:
                e.append(scf_solve(mol, mb, cav.with_q(cav.q + s * step), settings, guess=D).total_energy)
        out[j] = w @ np.array(e) / step
    return out


def test_criterion_2_gradients(hf_mol, nh3_mol, acceptance_log):
    rng = np.random.default_rng(7)
    worst_nuc = worst_q = 0.0
    cases = 0
    for mol, pol in ((hf_mol, (0.0, 0.0, 1.0)), (nh3_mol, (0.0, 0.6, 0.8))):
        geoms = [mol.coords, mol.coords + 0.08 * rng.standard_normal(mol.coords.shape),
                 mol.coords + 0.15 * rng.standard_normal(mol.coords.shape)]
        for R in geoms:
            m = mol.with_coords(R)
            mb = resolve_basis(m, BASIS)
            for lam in (0.0, 0.01, 0.03):
                for dse in (True, False):
                    settings = SCFSettings(e_conv=1e-12, d_conv=1e-10, dse=dse)
                    cav = CavityMode(cm_to_hartree(4467.0), lam, pol, q=0.6)
                    g = full_gradient(scf_solve(m, mb, cav, settings)).vector
                    ref = fd_gradient(m, mb, cav, settings)
                    worst_nuc = max(worst_nuc, float(np.abs(g[:-1] - ref[:-1]).max()))
                    worst_q = max(worst_q, abs(g[-1] - ref[-1]))
                    cases += 1
    ok = report(acceptance_log, 2, {
        "nuclear": (worst_nuc < 1e-6, f"max dev {worst_nuc:.1e} over {cases} cases"),
        "q_c": (worst_q < 1e-8, f"max dev {worst_q:.1e}"),
    })
    assert ok


def test_criterion_3_harmonic_fundamentals(nh3_mol, bare_hf, acceptance_log):
    nu_hf, _ = bare_hf
    st = base_state(nh3_mol, BASIS, CavityMode(cm_to_hartree(1103.0), 0.0))
    modes = harmonic_analysis(st).modes
    vib = sorted(modes.frequencies[i] for i in modes.internal() if modes.tags[i] == "vibrational")
    bend = vib[0]
    ok = report(acceptance_log, 3, {
        "HF stretch": (abs(nu_hf - 4467) <= 15, f"{nu_hf:.2f} cm-1 vs 4467"),
        "NH3 bend": (abs(bend - 1103) <= 15, f"{bend:.2f} cm-1 vs 1103"),
    })
    assert ok


def test_criterion_4_anharmonic_fundamental(hf_mol, hf_basis, bare_hf, grid_cache, acceptance_log):
    nu_h, _ = bare_hf
    grid, states, ref = grid_run(grid_cache, hf_mol, hf_basis, nu_h, 0.0)
    dec = polariton_decomposition(states, ref)
    j = int(np.argmax(np.abs(dec.overlaps[:, 0])))
    nu_a = cm(states, j)
    shift = nu_h - nu_a
    ok = report(acceptance_log, 4, {
        "A nu1": (abs(nu_a - 4281) <= 20, f"{nu_a:.2f} cm-1 vs 4281"),
        "red shift": (abs(shift - 186) <= 10, f"{shift:.2f} cm-1 vs 186"),
    })
    grid_cache["nu_a"] = nu_a
    assert ok


def test_criterion_5_polariton_sweep(hf_mol, hf_basis, bare_hf, grid_cache, acceptance_log):
    nu_h, _ = bare_hf
    if "nu_a" not in grid_cache:
        grid, states, ref = grid_run(grid_cache, hf_mol, hf_basis, nu_h, 0.0)
        dec = polariton_decomposition(states, ref)
        grid_cache["nu_a"] = cm(states, int(np.argmax(np.abs(dec.overlaps[:, 0]))))
    nu_a = grid_cache["nu_a"]
    harm = []
    for lam in LAMBDAS:
        st = base_state(hf_mol, hf_basis, CavityMode(cm_to_hartree(nu_h), lam))
        res = harmonic_analysis(st)
        m = rabi_analysis(SpectrumPeakSet.from_modes(res.modes, st.cavity), nu_h, nu_h)
        harm.append(m)
    omega_r = np.array([m.rabi_splitting for m in harm])
    asym = np.array([m.asymmetry for m in harm])
    red_lp = np.array([nu_h - m.nu_lp for m in harm])
    blue_up = np.array([m.nu_up - nu_h for m in harm])
    _, r2_lin = fit_r2(LAMBDAS, omega_r, 1)
    _, r2_quad = fit_r2(LAMBDAS, asym, 1, even=True)
    grid_r = []
    for lam in LAMBDAS:
        _, states, ref = grid_run(grid_cache, hf_mol, hf_basis, nu_a, lam)
        dec = polariton_decomposition(states, ref)
        grid_r.append(cm(states, dec.up) - cm(states, dec.lp))
    rel = np.abs(np.array(grid_r) - omega_r) / omega_r
    ok = report(acceptance_log, 5, {
        "Omega_R linear": (r2_lin > 0.99, f"R2={r2_lin:.5f}, Omega_R={np.round(omega_r, 2).tolist()}"),
        "asymmetry": (bool(np.all(asym > 0) and np.all(red_lp > blue_up)) and r2_quad > 0.99,
                      f"dOmega={np.round(asym, 3).tolist()}, quadratic R2={r2_quad:.5f}"),
        "grid vs harmonic": (bool(np.all(rel < 0.05)),
                             f"grid Omega_R={np.round(grid_r, 2).tolist()}, rel dev max {rel.max():.3f}"),
    })
    assert ok


def test_criterion_6_detuning(hf_mol, hf_basis, bare_hf, acceptance_log):
    nu_h, _ = bare_hf
    step = 25.0
    omegas = nu_h + step * np.arange(-6, 7)
    rows = detuning_scan(hf_mol, hf_basis, 0.039, omegas, bare_nu1=nu_h)
    assert not any("error" in r for r in rows)
    # far-detuned rows may have no second peak above the photon-weight threshold
    smd = np.array([r.get("splitting_minus_detuning", np.nan) for r in rows])
    best = omegas[int(np.nanargmax(smd))]
    res = rows[6]
    spread = {k: float(np.ptp([r[k] for r in rows])) for k in ("e_lin", "e_dse", "e_dis")}
    ok = report(acceptance_log, 6, {
        "max Omega_R-|Delta|": (abs(best - nu_h) <= step, f"at {best:.2f} cm-1, H nu1 {nu_h:.2f}"),
        "|a_c|^2 at resonance": (abs(res["photon_lp"] - 0.5) <= 0.05 and abs(res["photon_up"] - 0.5) <= 0.05,
                                 f"LP {res['photon_lp']:.3f}, UP {res['photon_up']:.3f}"),
        "energy terms": (max(spread.values()) < 1e-8, ", ".join(f"{k} {v:.1e}" for k, v in spread.items())),
    })
    assert ok


def ensemble_spectrum(mono, n, orientation, dse, nu_h, lam0=0.057):
    mol = build_ensemble(EnsembleSpec(mono, n, orientation))
    cav = CavityMode(cm_to_hartree(nu_h), rescale_coupling(lam0, n))
    st = base_state(mol, BASIS, cav, SCFSettings(dse=dse))
    modes = harmonic_analysis(st).modes
    peaks = SpectrumPeakSet.from_modes(modes, st.cavity)
    high = np.sort([p.frequency for p in peaks.peaks if p.frequency > 1000.0])
    return high, rabi_analysis(peaks, nu_h, nu_h)


def test_criterion_7_dse_ensembles(hf_mol, bare_hf, acceptance_log):
    nu_h, _ = bare_hf
    par_dev = 0.0
    runs = {}
    for n in (1, 2, 3, 4):
        p, _ = ensemble_spectrum(hf_mol, n, "parallel", True, nu_h)
        a, _ = ensemble_spectrum(hf_mol, n, "antiparallel", True, nu_h) if n > 1 else (p, None)
        assert len(p) == len(a) == n + 1
        par_dev = max(par_dev, float(np.abs(p - a).max()))
        runs[n] = ensemble_spectrum(hf_mol, n, "antiparallel", False, nu_h)[1]
    dev_parity = 0.0
    for n in (3, 4):
        base = runs[2] if n % 2 == 0 else runs[1]
        dev_parity = max(dev_parity, abs(runs[n].nu_lp - base.nu_lp), abs(runs[n].nu_up - base.nu_up))
    metrics = ", ".join(f"N={n} LP {m.nu_lp:.2f} UP {m.nu_up:.2f}" for n, m in runs.items())
    ok = report(acceptance_log, 7, {
        "parallel vs antiparallel (DSE)": (par_dev < 1.0, f"max peak dev {par_dev:.3f} cm-1"),
        "dse=off parity": (dev_parity < 1.0, f"max dev {dev_parity:.3f} cm-1; {metrics}"),
    })
    assert ok


def test_criterion_8_property_suites(hf_mol, nh3_mol, hf_basis, bare_hf, grid_cache, tmp_path, acceptance_log):
    nu_h, _ = bare_hf
    checks = {}
    st = base_state(hf_mol, hf_basis, CavityMode(cm_to_hartree(nu_h), 0.019))
    r1 = harmonic_analysis(st, step=5e-3)
    r2 = harmonic_analysis(st, step=2.5e-3)
    i1, i2 = r1.modes.internal(), r2.modes.internal()
    drift = float(np.abs(r1.modes.frequencies[i1] - r2.modes.frequencies[i2]).max())
    checks["Hessian"] = (r1.hessian.asymmetry < 1e-5 and drift < 0.5,
                         f"asymmetry {r1.hessian.asymmetry:.1e}, step-halving drift {drift:.3f} cm-1")
    V = r1.modes.vectors
    ortho = float(np.abs(V.T @ V - np.eye(V.shape[1])).max())
    compl = abs(float(r1.modes.photon_weight.sum()) - 1.0)
    checks["normal modes"] = (ortho < 1e-10 and compl < 1e-10, f"orthonormality {ortho:.1e}, photon row {compl:.1e}")

    key = (round(grid_cache.get("nu_a", 0.0), 6), LAMBDAS[-1])
    if key in grid_cache:
        grid = grid_cache[key][0]
    else:
        grid = grid_run(grid_cache, hf_mol, hf_basis, nu_h, 0.0)[0]
    dense = solve_eigenstates(grid, 4)
    itp = solve_eigenstates(grid, 4, method="imaginary-time")
    path = max(abs(a.energy - b.energy) for a, b in zip(dense, itp)) * HARTREE_TO_CM
    checks["eigensolver paths"] = (path < 0.5, f"max dev {path:.1e} cm-1")

    peaks = SpectrumPeakSet.from_modes(r1.modes, st.cavity)
    x = frequency_grid(-20000.0, 30000.0, 0.25)
    _, y = broaden(peaks, 10.0, x)
    _, y2 = broaden(peaks.scaled(2.0), 10.0, x)
    lin = float(np.abs(y2 - 2 * y).max() / y.max())
    area = np.trapezoid(y, x) if hasattr(np, "trapezoid") else np.trapz(y, x)
    expect = np.pi * 5.0 * peaks.intensities.sum()
    area_dev = abs(area / expect - 1.0)
    checks["broadening"] = (lin < 1e-12 and area_dev < 0.01, f"linearity {lin:.1e}, area {area_dev:.2e}")

    R = nh3_mol.coords + np.array([[0.05, -0.02, 0.03], [0.0, 0.1, -0.04], [-0.03, 0.0, 0.07], [0.02, 0.01, 0.0]])
    g = full_gradient(scf_solve(nh3_mol.with_coords(R), BASIS, CavityMode(0.0203, 0.03, (0.0, 0.6, 0.8), q=0.7),
                                TIGHT))
    tsum = float(np.abs(g.nuclear.sum(axis=0)).max())
    checks["translational sum"] = (tsum < 1e-9, f"{tsum:.1e}")

    cfg = tmp_path / "run.yaml"
    cfg.write_text("job: scf\ngeometry: hf\ncavity: {omega: 4467.0, lambda0: 0.019}\n")
    codes = [main(["scf", "--config", str(cfg), "--out", str(tmp_path / d)]) for d in ("a", "b")]
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
               for f in json.loads((tmp_path / "a" / "manifest.json").read_text())["manifest"]["outputs"])
    same = same and (tmp_path / "a" / "manifest.json").read_bytes() == (tmp_path / "b" / "manifest.json").read_bytes()
    checks["manifest determinism"] = (codes == [0, 0] and same, "bit-identical re-run" if same else "outputs differ")
    assert report(acceptance_log, 8, checks)
