import json

import numpy as np
import pytest

from cbohf.cli import fmt, main
from cbohf.config import ConfigError, config_from_dict, dump_config, errors, load_config, validate


def diag_paths(cfg):
    return {(d.level, d.path) for d in validate(cfg)}


def test_polarization_normalized_with_warning():
    cfg = config_from_dict({"job": "scf", "geometry": "hf", "cavity": {"polarization": [0, 0, 2]}})
    assert ("warning", "cavity.polarization") in diag_paths(cfg)
    assert cfg.cavity.polarization == [0.0, 0.0, 1.0]


def test_negative_coupling_is_error():
    cfg = config_from_dict({"job": "scf", "geometry": "hf", "cavity": {"lambda0": -0.01}})
    assert [d.path for d in errors(validate(cfg))] == ["cavity.lambda0"]


def test_dse_off_antiparallel_flagged():
    cfg = config_from_dict({"job": "freq", "geometry": "hf", "modes": {"dse": False},
                            "ensemble": {"n_mol": 4, "orientation": "antiparallel"}})
    d = validate(cfg)
    assert not errors(d)
    assert any(x.level == "note" and "ablation" in x.message for x in d)


def test_omega_range_and_units():
    cfg = config_from_dict({"job": "scf", "geometry": "hf", "cavity": {"omega": 50000.0}})
    assert ("warning", "cavity.omega") in diag_paths(cfg)
    cfg = config_from_dict({"job": "scf", "geometry": "hf", "cavity": {"omega": 0.0203, "omega_unit": "hartree"}})
    assert not any(d.path == "cavity.omega" for d in validate(cfg))
    assert cfg.cavity.omega_cm == pytest.approx(0.0203 * 219474.6313632)


def test_sweep_requirements():
    cfg = config_from_dict({"job": "detuning-scan", "geometry": "hf", "cavity": {"lambda0": 0.03}})
    assert ("error", "sweep.omegas") in diag_paths(cfg)
    cfg = config_from_dict({"job": "spectrum", "geometry": "hf"})
    assert ("error", "sweep.lambdas") in diag_paths(cfg)
    cfg = config_from_dict({"job": "spectrum", "geometry": "hf", "sweep": {"lambdas": [0.01, 0.02]}})
    assert not errors(validate(cfg))


def test_q_policy():
    cfg = config_from_dict({"job": "scf", "geometry": "hf", "cavity": {"q_policy": "fixed:1.5"}})
    assert cfg.cavity.fixed_q() == 1.5 and not errors(validate(cfg))
    cfg = config_from_dict({"job": "scf", "geometry": "hf", "cavity": {"q_policy": "sometimes"}})
    assert ("error", "cavity.q_policy") in diag_paths(cfg)


def test_parse_errors_carry_field_paths():
    with pytest.raises(ConfigError) as exc:
        config_from_dict({"job": "scf", "geometry": "hf", "cavity": {"lambda0": "strong"}})
    assert exc.value.path == "cavity.lambda0"
    with pytest.raises(ConfigError) as exc:
        config_from_dict({"job": "scf", "geometry": "hf", "scf": {"e_tol": 1e-8}})
    assert exc.value.path == "scf.e_tol"
    with pytest.raises(ConfigError) as exc:
        config_from_dict({"geometry": "hf"})
    assert exc.value.path == "job"
    cfg = config_from_dict({"job": "fly", "geometry": "hf"})
    assert ("error", "job") in diag_paths(cfg)


def test_canonical_dump_round_trip(tmp_path):
    cfg = config_from_dict({"job": "freq", "geometry": "hf", "cavity": {"lambda0": 0.019}})
    p = tmp_path / "c.yaml"
    p.write_text(dump_config(cfg))
    assert load_config(p) == cfg


def test_fmt_twelve_digits():
    assert fmt(1.0 / 3.0) == "0.333333333333"
    assert fmt(-100.0338162106728) == "-100.033816211"


def _write(tmp_path, body):
    p = tmp_path / "run.yaml"
    p.write_text(body)
    return p


SCF_CFG = """
job: scf
geometry: hf
basis: sto-3g
cavity: {omega: 4467.0, lambda0: 0.05}
"""


def test_cli_scf_deterministic_and_manifest_rerun(tmp_path, capsys):
    cfg = _write(tmp_path, SCF_CFG)
    assert main(["scf", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["scf", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    assert main(["scf", "--config", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "c")]) == 0
    for name in ("energy.tsv", "energy.json", "manifest.json"):
        a = (tmp_path / "a" / name).read_bytes()
        assert a == (tmp_path / "b" / name).read_bytes() == (tmp_path / "c" / name).read_bytes()
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert set(man["manifest"]["outputs"]) == {"energy.json", "energy.tsv"}
    assert man["geometry_xyz"].startswith("2\n")
    assert man["scf"]["e_conv"] == 1e-10
    rep = json.loads((tmp_path / "a" / "energy.json").read_text())
    assert rep["q_c"] != 0.0 and rep["converged"]


def test_cli_grad_and_freq(tmp_path):
    cfg = _write(tmp_path, SCF_CFG)
    assert main(["grad", "--config", str(cfg), "--out", str(tmp_path / "g")]) == 0
    g = np.loadtxt(tmp_path / "g" / "gradient.tsv", skiprows=1, usecols=(2, 3, 4))
    np.testing.assert_allclose(g.sum(axis=0), 0.0, atol=1e-9)
    assert main(["freq", "--config", str(cfg), "--out", str(tmp_path / "f"), "--jobs", "1"]) == 0
    rows = (tmp_path / "f" / "modes.tsv").read_text().splitlines()
    assert rows[0].split("\t") == ["mode", "frequency_cm", "intensity", "photon_weight", "tag"]
    assert len(rows) == 8
    curve = np.loadtxt(tmp_path / "f" / "spectrum.txt")
    assert curve.shape[1] == 2


def test_cli_validation_failure_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, "job: scf\ngeometry: hf\ncavity: {lambda0: -1.0}\n")
    assert main(["scf", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2
    assert "cavity.lambda0" in capsys.readouterr().err
    assert main(["scf", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_cli_compute_error_has_context(tmp_path, capsys):
    cfg = _write(tmp_path, "job: scf\ngeometry: nowhere.xyz\n")
    assert main(["scf", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 1
    assert "cbohf scf" in capsys.readouterr().err


def test_cli_job_override(tmp_path):
    cfg = _write(tmp_path, SCF_CFG.replace("job: scf", "job: freq"))
    assert main(["scf", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["job"] == "scf"


def test_cli_spectrum_and_detuning(tmp_path):
    body = """
job: spectrum
geometry: hf
basis: sto-3g
cavity: {omega: 5250.0}
sweep: {lambdas: [0.02, 0.04], omegas: [5200.0, 5300.0]}
"""
    cfg = _write(tmp_path, body)
    assert main(["spectrum", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 0
    assert (tmp_path / "s" / "spectrum_lambda_0.020000.txt").is_file()
    rabi = np.loadtxt(tmp_path / "s" / "rabi.tsv", skiprows=1)
    assert rabi.shape == (2, 7) and rabi[1, 3] > rabi[0, 3] > 0
    cfg = _write(tmp_path, body.replace("cavity: {omega: 5250.0}", "cavity: {omega: 5250.0, lambda0: 0.04}"))
    assert main(["detuning-scan", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 0
    d = np.loadtxt(tmp_path / "d" / "detuning.tsv", skiprows=1)
    assert d.shape[0] == 2 and np.isfinite(d[:, 4]).all()


def test_cli_grid(tmp_path):
    body = """
job: grid
geometry: hf
basis: sto-3g
cavity: {omega: 4000.0, lambda0: 0.03}
grid: {bond_points: 24, photon_points: 12, bond_range: [0.8, 1.5], n_states: 4}
"""
    cfg = _write(tmp_path, body)
    assert main(["grid", "--config", str(cfg), "--out", str(tmp_path / "g")]) == 0
    summary = json.loads((tmp_path / "g" / "summary.json").read_text())
    row = summary["rows"][0]
    assert row["nu_up"] > row["nu_lp"]
    from cbohf.grid import read_cpes

    g = read_cpes(tmp_path / "g" / "cpes_lambda_0.030000.txt")
    assert g.shape == (24, 12)
