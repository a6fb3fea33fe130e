"""Command-line driver: ``cbohf <job> --config path [--jobs N] [--out dir]``."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import JOBS, ConfigError, RunConfig, errors, load_config, validate
from .constants import HARTREE_TO_CM, hartree_to_cm
from .molecule import CavityMode, EnsembleSpec, build_ensemble, parse_xyz, rescale_coupling

log = logging.getLogger("cbohf")

_DATA_DIR = Path(__file__).parent / "data"


def fmt(x) -> str:
    """12 significant digits, used for every number written by the CLI."""
    return format(float(x), ".12g")


def _table(path: Path, header, rows) -> None:
    lines = ["\t".join(header)]
    for r in rows:
        lines.append("\t".join(v if isinstance(v, str) else fmt(v) for v in r))
    path.write_text("\n".join(lines) + "\n")


def _json(path: Path, obj) -> None:
    def conv(o):
        if isinstance(o, dict):
            return {str(k): conv(v) for k, v in o.items()}
        if isinstance(o, (list, tuple, np.ndarray)):
            return [conv(v) for v in o]
        if isinstance(o, (bool, np.bool_)) or o is None or isinstance(o, str):
            return bool(o) if isinstance(o, np.bool_) else o
        if isinstance(o, (int, np.integer)):
            return int(o)
        return float(fmt(o))

    path.write_text(json.dumps(conv(obj), indent=2, sort_keys=True) + "\n")


def _curve(path: Path, x, y) -> None:
    path.write_text("".join(f"{fmt(a)}\t{fmt(b)}\n" for a, b in zip(x, y)))


def geometry_text(cfg: RunConfig) -> str:
    if cfg.geometry_xyz:
        return cfg.geometry_xyz
    p = Path(cfg.geometry)
    if not p.is_absolute():
        p = Path(cfg.base_dir) / p
    if p.is_file():
        return p.read_text()
    name = cfg.geometry if cfg.geometry.endswith(".xyz") else cfg.geometry + ".xyz"
    bundled = _DATA_DIR / name.lower()
    if bundled.is_file():
        return bundled.read_text()
    raise FileNotFoundError(f"geometry {cfg.geometry!r} not found")


def build_system(cfg: RunConfig, coupling=None):
    """(molecule, cavity) from a config; ``coupling`` overrides lambda0."""
    mono = parse_xyz(geometry_text(cfg), cfg.charge)
    e = cfg.cavity.polarization
    ens = cfg.ensemble
    mol = build_ensemble(EnsembleSpec(mono, ens.n_mol, ens.orientation, ens.separation), polarization=e)
    lam0 = cfg.cavity.lambda0 if coupling is None else coupling
    cav = CavityMode(cfg.cavity.omega_hartree, rescale_coupling(lam0, ens.n_mol), tuple(e))
    return mol, cav


def _basis(cfg: RunConfig, mol):
    from .scf import resolve_basis

    name = cfg.basis
    p = Path(name)
    if not p.is_absolute() and (Path(cfg.base_dir) / p).is_file():
        name = str(Path(cfg.base_dir) / p)
    return resolve_basis(mol, name, cfg.spherical)


def _state(cfg: RunConfig, mol, mb, cav):
    from .hessian import base_state

    q = cfg.cavity.fixed_q()
    if q is None:
        return base_state(mol, mb, cav, cfg.scf_settings(), "stationary")
    return base_state(mol, mb, cav.with_q(q), cfg.scf_settings(), "fixed")


def _energy_report(st) -> dict:
    d = st.energy.as_dict()
    d.update({"q_c": st.cavity.q, "dipole": list(st.dipole), "converged": st.converged, "n_iter": st.n_iter,
              "omega": st.cavity.omega, "coupling": st.cavity.coupling})
    return d


def job_scf(cfg, out, jobs):
    mol, cav = build_system(cfg)
    st = _state(cfg, mol, _basis(cfg, mol), cav)
    rep = _energy_report(st)
    _table(out / "energy.tsv", ["term", "hartree"], [(k, v) for k, v in rep.items() if k in st.energy.as_dict()])
    _json(out / "energy.json", rep)
    return {"total_energy": st.total_energy}


def job_grad(cfg, out, jobs):
    from .gradients import full_gradient

    mol, cav = build_system(cfg)
    st = _state(cfg, mol, _basis(cfg, mol), cav)
    g = full_gradient(st)
    rows = [(str(i), s, *g.nuclear[i]) for i, s in enumerate(mol.symbols)]
    _table(out / "gradient.tsv", ["atom", "symbol", "x", "y", "z"], rows)
    _table(out / "gradient_q.tsv", ["coordinate", "gradient"], [("q_c", g.photon)])
    _json(out / "gradient_terms.json", {k: v for k, v in g.breakdown.items()})
    _json(out / "energy.json", _energy_report(st))
    return {"max_abs_gradient": float(np.abs(g.vector).max())}


def _write_modes(out: Path, res, prefix="") -> None:
    m = res.modes
    rows = [(str(i), f, m.intensities[i], m.photon_weight[i], m.tags[i]) for i, f in enumerate(m.frequencies)]
    _table(out / f"{prefix}modes.tsv", ["mode", "frequency_cm", "intensity", "photon_weight", "tag"], rows)
    np.savetxt(out / f"{prefix}mode_vectors.txt", m.vectors, fmt="%.11e")
    np.savetxt(out / f"{prefix}hessian.txt", res.hessian.matrix, fmt="%.11e")


def _harmonic(cfg, mol, mb, cav, jobs):
    from .hessian import harmonic_analysis

    st = _state(cfg, mol, mb, cav)
    return harmonic_analysis(st, cfg.fd.step, jobs, cfg.fd.relax_q, cfg.fd.include_photon_dipole)


def job_freq(cfg, out, jobs):
    from .spectra import SpectrumPeakSet, broaden, frequency_grid

    mol, cav = build_system(cfg)
    res = _harmonic(cfg, mol, _basis(cfg, mol), cav, jobs)
    _write_modes(out, res)
    peaks = SpectrumPeakSet.from_modes(res.modes, res.state.cavity)
    x, y = broaden(peaks, cfg.spectrum.width, frequency_grid(0.0, 5000.0, cfg.spectrum.step))
    _curve(out / "spectrum.txt", x, y)
    _json(out / "energy.json", _energy_report(res.state))
    return {"hessian_asymmetry": res.hessian.asymmetry}


def _bare_nu1(cfg, mol, mb, jobs):
    from .spectra import SpectrumPeakSet, bare_fundamental

    ref = _harmonic(cfg, mol, mb, CavityMode(cfg.cavity.omega_hartree, 0.0, tuple(cfg.cavity.polarization)), jobs)
    return bare_fundamental(SpectrumPeakSet.from_modes(ref.modes)), ref


def job_spectrum(cfg, out, jobs):
    from .spectra import SpectrumPeakSet, broaden, frequency_grid, rabi_analysis

    lambdas = cfg.sweep.lambdas or [cfg.cavity.lambda0]
    mol, _ = build_system(cfg)
    mb = _basis(cfg, mol)
    bare, _ = _bare_nu1(cfg, mol, mb, jobs)
    grid = frequency_grid(0.0, 5000.0, cfg.spectrum.step)
    rows, summary = [], []
    for lam in lambdas:
        _, cav = build_system(cfg, lam)
        res = _harmonic(cfg, mol, mb, cav, jobs)
        peaks = SpectrumPeakSet.from_modes(res.modes, res.state.cavity)
        x, y = broaden(peaks, cfg.spectrum.width, grid)
        _curve(out / f"spectrum_lambda_{lam:.6f}.txt", x, y)
        m = rabi_analysis(peaks, cfg.cavity.omega_cm, bare, cfg.spectrum.threshold)
        d = {"lambda0": lam, "coupling": cav.coupling, **m.as_dict()}
        summary.append(d)
        if m.found:
            rows.append((lam, m.nu_lp, m.nu_up, m.rabi_splitting, m.asymmetry, m.photon_lp, m.photon_up))
        else:
            rows.append((lam, "nan", "nan", "nan", "nan", "nan", "nan"))
    _table(out / "rabi.tsv", ["lambda0", "nu_lp", "nu_up", "rabi_splitting", "asymmetry", "photon_lp", "photon_up"],
           rows)
    _json(out / "summary.json", {"bare_nu1": bare, "rows": summary})
    return {"n_lambda": len(lambdas)}


def job_detuning(cfg, out, jobs):
    from .spectra import detuning_scan

    mol, cav = build_system(cfg)
    mb = _basis(cfg, mol)
    bare, _ = _bare_nu1(cfg, mol, mb, jobs)
    rows = detuning_scan(mol, mb, cav.coupling, cfg.sweep.omegas, cav.polarization, cfg.scf_settings(),
                         bare, cfg.fd.step, jobs)
    cols = ["omega_c", "detuning", "nu_lp", "nu_up", "rabi_splitting", "splitting_minus_detuning", "photon_lp",
            "photon_up", "e_lin", "e_dse", "e_dis", "q_c"]
    _table(out / "detuning.tsv", cols, [[r.get(c, "nan") for c in cols] for r in rows])
    _json(out / "summary.json", {"bare_nu1": bare, "rows": rows})
    return {"n_omega": len(rows), "failed": sum("error" in r for r in rows)}


def job_grid(cfg, out, jobs):
    from .grid import (anharmonic_spectrum, bond_axis, molecular_potential, photon_axis, polariton_decomposition,
                       scan_cpes, solve_eigenstates, uncoupled_reference, write_cpes, write_states)
    from .scf import solve_stationary
    from .spectra import broaden, frequency_grid

    g = cfg.grid
    lambdas = cfg.sweep.lambdas or [cfg.cavity.lambda0]
    mol, _ = build_system(cfg)
    mb = _basis(cfg, mol)
    settings = cfg.scf_settings()
    parts = mol.partition or ((0, mol.natom),)
    bonds = [bond_axis(mol, a, a + 1, g.bond_points, *g.bond_range, name=f"R{k + 1}") for k, (a, b) in enumerate(parts)]
    vmol = [molecular_potential(mol, mb, ax, settings) for ax in bonds]
    rows, summary = [], []
    for lam in lambdas:
        _, cav = build_system(cfg, lam)
        if cav.coupling > 0:
            cav = solve_stationary(mol, mb, cav, settings).cavity
        qax = photon_axis(cav.omega, cav.q, g.photon_points, g.photon_widths)
        cpes = scan_cpes(mol, mb, bonds + [qax], cav, settings, jobs=jobs)
        tag = f"lambda_{lam:.6f}"
        write_cpes(out / f"cpes_{tag}.txt", cpes)
        states = solve_eigenstates(cpes, g.n_states, g.method)
        ref = uncoupled_reference(cpes, vmol) if g.n_states >= 3 else None
        peaks = anharmonic_spectrum(states, cpes, ref)
        write_states(out / f"states_{tag}.txt", states, cpes)
        x, y = broaden(peaks, cfg.spectrum.width, frequency_grid(0.0, 10000.0, cfg.spectrum.step))
        _curve(out / f"spectrum_{tag}.txt", x, y)
        _table(out / f"peaks_{tag}.tsv", ["frequency_cm", "intensity", "photon_weight", "label"],
               [(p.frequency, p.intensity, p.photon_weight, p.label or "-") for p in peaks.peaks])
        d = {"lambda0": lam, "coupling": cav.coupling, "q_center": cav.q,
             "energies": [s.energy for s in states],
             "transitions_cm": [(s.energy - states[0].energy) * HARTREE_TO_CM for s in states[1:]]}
        if ref is not None and cav.coupling > 0:
            dec = polariton_decomposition(states, ref)
            nu_lp = (states[dec.lp].energy - states[0].energy) * HARTREE_TO_CM
            nu_up = (states[dec.up].energy - states[0].energy) * HARTREE_TO_CM
            d.update({"nu_lp": nu_lp, "nu_up": nu_up, "rabi_splitting": nu_up - nu_lp,
                      "asymmetry": hartree_to_cm(cav.omega) - 0.5 * (nu_lp + nu_up),
                      "a_m_lp": dec.a_m_lp, "a_c_lp": dec.a_c_lp, "a_m_up": dec.a_m_up, "a_c_up": dec.a_c_up})
            rows.append((lam, nu_lp, nu_up, nu_up - nu_lp, dec.photon_lp, dec.photon_up))
        summary.append(d)
    if rows:
        _table(out / "rabi.tsv", ["lambda0", "nu_lp", "nu_up", "rabi_splitting", "photon_lp", "photon_up"], rows)
    _json(out / "summary.json", {"rows": summary})
    return {"n_lambda": len(lambdas)}


RUNNERS = {
    "scf": job_scf,
    "grad": job_grad,
    "freq": job_freq,
    "spectrum": job_spectrum,
    "detuning-scan": job_detuning,
    "grid": job_grid,
}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run(cfg: RunConfig, out: Path, jobs: int = 1) -> dict:
    """Run one job and write its outputs plus ``manifest.json`` into ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    # the manifest embeds the geometry so it can be re-run on its own
    cfg.geometry_xyz = geometry_text(cfg)
    mol, _ = build_system(cfg)
    mb = _basis(cfg, mol)
    info = RUNNERS[cfg.job](cfg, out, jobs)
    files = sorted(p.name for p in out.iterdir() if p.is_file() and p.name != "manifest.json")
    manifest = cfg.to_dict()
    manifest["manifest"] = {
        "code_version": __version__,
        "numpy_version": np.__version__,
        "basis_name": mb.name,
        "n_basis": mb.nbf,
        "outputs": {f: _sha256(out / f) for f in files},
        "result": info,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cbohf", description="Cavity Born-Oppenheimer Hartree-Fock vibro-polaritonic spectra")
    p.add_argument("job", choices=JOBS)
    p.add_argument("--config", required=True, help="YAML or JSON run configuration (a manifest also works)")
    p.add_argument("--jobs", type=int, default=1, help="maximum worker processes")
    p.add_argument("--out", default=None, help="output directory (default: config 'output')")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"cbohf {__version__}")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("cbohf: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"cbohf: config error: {exc}", file=sys.stderr)
        return 2
    if cfg.job != args.job:
        log.info("job %r from the command line overrides %r in the config", args.job, cfg.job)
        cfg.job = args.job
    diags = validate(cfg)
    for d in diags:
        print(str(d), file=sys.stderr)
    if errors(diags):
        return 2
    out = Path(args.out if args.out is not None else cfg.output)
    try:
        run(cfg, out, args.jobs)
    except Exception as exc:
        print(f"cbohf {cfg.job}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(f"cbohf {cfg.job}: outputs written to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
