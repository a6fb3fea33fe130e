"""Record independent reference data for the test suite with PySCF.

PySCF is used only here, as an external oracle; the package never imports it.
Basis sets are read from the bundled Gaussian94 files so both codes use
identical contractions. Run from the repository root:

    python tools/make_reference_fixtures.py
"""

import json
from pathlib import Path

import numpy as np
import pyscf
from pyscf import gto, scf
from pyscf.gto.basis import parse_gaussian

ROOT = Path(__file__).resolve().parents[1]
BASIS_DIR = ROOT / "src" / "cbohf" / "basis_data"
DATA_DIR = ROOT / "src" / "cbohf" / "data"
OUT = ROOT / "tests" / "data"

ANG = 0.529177210903  # pyscf unit conversion is avoided by passing bohr


def read_xyz_bohr(name):
    lines = (DATA_DIR / name).read_text().splitlines()
    n = int(lines[0])
    atoms = []
    for ln in lines[2 : 2 + n]:
        s, x, y, z = ln.split()[:4]
        atoms.append((s, [float(x) / ANG, float(y) / ANG, float(z) / ANG]))
    return atoms


def mole(atoms, basis, cart=False):
    syms = {a[0] for a in atoms}
    bas = {s: parse_gaussian.load(str(BASIS_DIR / f"{basis}.gbs"), s) for s in syms}
    return gto.M(atom=atoms, basis=bas, unit="Bohr", cart=cart, verbose=0)


def rhf(mol):
    mf = scf.RHF(mol)
    mf.conv_tol = 1e-12
    mf.conv_tol_grad = 1e-9
    e = mf.kernel()
    assert mf.converged
    return mf, e


def integrals(mol):
    with mol.with_common_orig((0.0, 0.0, 0.0)):
        dip = mol.intor("int1e_r")
        quad = mol.intor("int1e_rr").reshape(3, 3, mol.nao, mol.nao)
    return {
        "S": mol.intor("int1e_ovlp"),
        "T": mol.intor("int1e_kin"),
        "V": mol.intor("int1e_nuc"),
        "dip": dip,
        "quad": quad,
        "eri": mol.intor("int2e"),
    }


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    ref = {"pyscf_version": pyscf.__version__}

    water = [("O", [0.0, 0.0, 0.2217]), ("H", [0.0, 1.4309, -0.8867]), ("H", [0.0, -1.4309, -0.8867])]
    m = mole(water, "sto-3g")
    np.savez_compressed(OUT / "h2o_sto3g.npz", coords=np.array([a[1] for a in water]), **integrals(m))
    ref["h2o_sto3g_energy"] = rhf(m)[1]

    hf_stretched = [("F", [0.0, 0.0, 0.0]), ("H", [0.1, -0.05, 1.85])]
    m = mole(hf_stretched, "cc-pvdz")
    mf, e = rhf(m)
    np.savez_compressed(OUT / "hf_ccpvdz.npz", coords=np.array([a[1] for a in hf_stretched]),
                        gradient=mf.nuc_grad_method().kernel(), **integrals(m))
    ref["hf_ccpvdz_stretched_energy"] = e

    for name in ("hf", "nh3"):
        atoms = read_xyz_bohr(f"{name}.xyz")
        ref[f"{name}_augccpvdz_energy"] = rhf(mole(atoms, "aug-cc-pvdz"))[1]
        ref[f"{name}_augccpvdz_cartesian_energy"] = rhf(mole(atoms, "aug-cc-pvdz", cart=True))[1]

    (OUT / "reference.json").write_text(json.dumps(ref, indent=2, sort_keys=True) + "\n")
    print(json.dumps(ref, indent=2))


if __name__ == "__main__":
    main()
