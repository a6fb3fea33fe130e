"""Regenerate the bundled RHF/aug-cc-pVDZ equilibrium geometries.

Uses the package's own analytic gradients with scipy's BFGS; run from the
repository root with the package installed.
"""

from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from cbohf.basis import build_basis, load_basis, relocate_basis
from cbohf.gradients import nuclear_gradient
from cbohf.integrals import compute_integrals
from cbohf.molecule import Molecule, format_xyz
from cbohf.scf import scf_solve

OUT = Path(__file__).resolve().parents[1] / "src" / "cbohf" / "data"

START = {
    "hf": (["F", "H"], [[0.0, 0.0, 0.0], [0.0, 0.0, 1.70]]),
    "nh3": (["N", "H", "H", "H"], [[0.0, 0.0, 0.13], [1.77, 0.0, -0.57], [-0.885, 1.533, -0.57], [-0.885, -1.533, -0.57]]),
}


def optimize(symbols, coords, basis="aug-cc-pvdz"):
    mol = Molecule.from_arrays(symbols, coords)
    mb = build_basis(mol, load_basis(basis))
    cache = {}

    def evaluate(x):
        key = x.tobytes()
        if key not in cache:
            R = x.reshape(-1, 3)
            m = mol.with_coords(R)
            b = relocate_basis(mb, R)
            st = scf_solve(m, b, integrals=compute_integrals(m, b, origin=np.zeros(3)))
            cache[key] = (st.total_energy, nuclear_gradient(st).ravel())
        return cache[key]

    res = minimize(lambda x: evaluate(x)[0], np.ravel(coords), jac=lambda x: evaluate(x)[1],
                   method="BFGS", options={"gtol": 1e-9, "maxiter": 200})
    R = res.x.reshape(-1, 3)
    e, g = evaluate(res.x)
    return mol.with_coords(R), e, np.abs(g).max()


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, (sym, xyz) in START.items():
        mol, e, gmax = optimize(sym, np.array(xyz))
        text = format_xyz(mol, f"RHF/aug-cc-pVDZ E={e:.10f} max|g|={gmax:.1e}")
        (OUT / f"{name}.xyz").write_text(text)
        print(name, e, gmax)


if __name__ == "__main__":
    main()
