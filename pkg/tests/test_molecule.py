import math

import numpy as np
import pytest

from cbohf.constants import HARTREE_TO_CM, cm_to_hartree, hartree_to_cm
from cbohf.molecule import (CavityMode, EnsembleSpec, Molecule, build_ensemble, center_of_nuclear_charge,
                            format_xyz, mode_volume, parse_xyz, rescale_coupling)


def test_unit_round_trip():
    for v in (1.0, 4467.0, 1e-3, 12345.678):
        assert abs(hartree_to_cm(cm_to_hartree(v)) - v) <= 1e-10 * v
    assert hartree_to_cm(1.0) == HARTREE_TO_CM == 219474.6313632


def test_xyz_round_trip(hf_mol):
    again = parse_xyz(format_xyz(hf_mol))
    np.testing.assert_allclose(again.coords, hf_mol.coords, atol=1e-10)
    assert again.symbols == hf_mol.symbols


def test_bad_xyz():
    with pytest.raises(ValueError):
        parse_xyz("2\ncomment\nH 0 0 0\n")
    with pytest.raises((ValueError, KeyError)):
        parse_xyz("1\n\nXx 0 0 0\n")


def test_electron_count_and_charge(nh3_mol):
    assert nh3_mol.n_electrons == 10 and nh3_mol.n_occupied == 5
    with pytest.raises(ValueError):
        Molecule.from_arrays(["H"], [[0, 0, 0]])  # odd electron count


def test_nuclear_dipole_origin_shift(hf_mol):
    a = hf_mol.nuclear_dipole(np.zeros(3))
    b = hf_mol.nuclear_dipole(np.array([1.0, 2.0, 3.0]))
    np.testing.assert_allclose(a - b, hf_mol.charges.sum() * np.array([1.0, 2.0, 3.0]), atol=1e-12)


def test_nuclear_repulsion_gradient_fd(nh3_mol):
    g = nh3_mol.nuclear_repulsion_gradient()
    h = 1e-5
    for a in range(nh3_mol.natom):
        for x in range(3):
            R = nh3_mol.coords.copy()
            R[a, x] += h
            ep = nh3_mol.with_coords(R).nuclear_repulsion()
            R[a, x] -= 2 * h
            em = nh3_mol.with_coords(R).nuclear_repulsion()
            assert abs((ep - em) / (2 * h) - g[a, x]) < 1e-7
    np.testing.assert_allclose(g.sum(axis=0), 0.0, atol=1e-12)


def test_cavity_mode_validation():
    with pytest.raises(ValueError):
        CavityMode(0.02, -0.1)
    with pytest.raises(ValueError):
        CavityMode(-0.02, 0.1)
    with pytest.raises(ValueError):
        CavityMode(0.02, 0.1, (0.0, 0.0, 2.0))
    c = CavityMode(0.02, 0.05, (0.0, 1.0, 0.0))
    np.testing.assert_allclose(c.lam, [0.0, 0.05, 0.0])
    assert c.with_q(1.5).q == 1.5 and c.q == 0.0


def test_rescale_and_volume():
    assert rescale_coupling(0.057, 4) == pytest.approx(0.0285)
    assert rescale_coupling(0.05, 1) == 0.05
    with pytest.raises(ValueError):
        rescale_coupling(-0.1, 2)
    with pytest.raises(ValueError):
        rescale_coupling(0.1, 0)
    # volume scales as 1/lambda^2
    assert mode_volume(0.01) / mode_volume(0.02) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        mode_volume(0.0)


@pytest.mark.parametrize("orientation", ["parallel", "antiparallel"])
def test_ensemble_geometry(hf_mol, orientation):
    ens = build_ensemble(EnsembleSpec(hf_mol, 3, orientation), polarization=(0, 0, 1))
    assert ens.natom == 6 and ens.partition == ((0, 2), (2, 4), (4, 6))
    c = [center_of_nuclear_charge(Molecule.from_arrays(ens.symbols[a:b], ens.coords[a:b])) for a, b in ens.partition]
    sep = np.linalg.norm(c[1] - c[0]) * 0.529177210903
    assert sep == pytest.approx(800.0, rel=1e-12)
    # stacking perpendicular to the polarization
    assert abs((c[1] - c[0])[2]) < 1e-12
    bond0 = ens.coords[1] - ens.coords[0]
    bond1 = ens.coords[3] - ens.coords[2]
    sign = 1.0 if orientation == "parallel" else -1.0
    np.testing.assert_allclose(bond1, sign * bond0, atol=1e-12)
    dip = ens.nuclear_dipole(center_of_nuclear_charge(ens))
    if orientation == "antiparallel":
        # odd N leaves one uncompensated monomer
        mono = hf_mol.nuclear_dipole(center_of_nuclear_charge(hf_mol))
        np.testing.assert_allclose(dip[2], mono[2], atol=1e-9)


def test_ensemble_single_is_monomer(hf_mol):
    assert build_ensemble(EnsembleSpec(hf_mol, 1)) is hf_mol
    with pytest.raises(ValueError):
        EnsembleSpec(hf_mol, 2, "sideways")
    with pytest.raises(ValueError):
        EnsembleSpec(hf_mol, 0)


def test_isotope_masses(hf_mol):
    assert hf_mol.masses[1] == pytest.approx(1.00782503, abs=1e-6)
    assert math.isclose(hf_mol.masses[0], 18.99840316, abs_tol=1e-6)
