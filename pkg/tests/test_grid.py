import numpy as np
import pytest

from cbohf.constants import AMU_TO_ME, HARTREE_TO_CM, cm_to_hartree
from cbohf.grid import (CPESGrid, GridAxis, _repair, anharmonic_spectrum, bond_axis, molecular_potential,
                        photon_axis, photon_minimum, polariton_decomposition, read_cpes, scan_cpes,
                        sinc_dvr_kinetic, solve_eigenstates, uncoupled_reference, write_cpes, write_states)
from cbohf.molecule import CavityMode
from cbohf.scf import scf_solve, solve_stationary

MU_HF = 1744.0  # roughly the HF reduced mass in m_e
OMEGA = cm_to_hartree(4000.0)


def morse(R, D=0.225, a=1.17, R0=1.73):
    return D * (1.0 - np.exp(-a * (R - R0))) ** 2


def morse_levels(n, D=0.225, a=1.17, mu=MU_HF):
    w = a * np.sqrt(2 * D / mu)
    k = np.arange(n) + 0.5
    return w * k - (w * k) ** 2 / (4 * D)


def model_grid(V_fn, nR=96, nq=48, coupling=0.0, mu_fn=None):
    R = GridAxis("R", "bond", np.linspace(1.0, 3.8, nR), MU_HF, (0, 1))
    q = photon_axis(OMEGA, 0.0, nq)
    RR, QQ = np.meshgrid(R.points, q.points, indexing="ij")
    V = V_fn(RR) + 0.5 * OMEGA**2 * QQ**2
    mu = np.zeros(V.shape + (3,))
    mu[..., 2] = 0.7 + 0.3 * (RR - 1.73) if mu_fn is None else mu_fn(RR)
    if coupling:
        V = V - OMEGA * QQ * coupling * mu[..., 2] + 0.5 * (coupling * mu[..., 2]) ** 2
    return CPESGrid([R, q], V, mu, {"omega": OMEGA, "coupling": coupling, "polarization": [0, 0, 1]})


def test_axis_validation():
    with pytest.raises(ValueError):
        GridAxis("R", "bond", [1.0, 2.0, 2.5], 1.0)
    with pytest.raises(ValueError):
        GridAxis("R", "angle", [1.0, 2.0], 1.0)
    ax = photon_axis(OMEGA, 1.5, 64)
    assert ax.points.mean() == pytest.approx(1.5) and ax.points[-1] - 1.5 == pytest.approx(6 / np.sqrt(OMEGA))


def test_sinc_dvr_free_particle_limit():
    T = sinc_dvr_kinetic(200, 0.05, 1.0)
    np.testing.assert_allclose(T, T.T)
    assert T[0, 0] == pytest.approx(np.pi**2 / 3 / (2 * 0.05**2))


def test_harmonic_2d_closed_form():
    k = 0.4
    g = model_grid(lambda R: 0.5 * k * (R - 2.4) ** 2)
    states = solve_eigenstates(g, 6)
    wR = np.sqrt(k / MU_HF)
    exact = sorted((n + 0.5) * wR + (m + 0.5) * OMEGA for n in range(4) for m in range(4))[:6]
    np.testing.assert_allclose([s.energy for s in states], exact, rtol=5e-4)


def test_morse_levels():
    R = GridAxis("R", "bond", np.linspace(0.9, 4.5, 160), MU_HF, (0, 1))
    g = CPESGrid([R], morse(R.points), np.zeros((160, 3)))
    states = solve_eigenstates(g, 4)
    np.testing.assert_allclose([s.energy * HARTREE_TO_CM for s in states], morse_levels(4) * HARTREE_TO_CM, atol=0.1)


def test_orthonormal_and_path_equivalence():
    g = model_grid(morse, coupling=0.04)
    dense = solve_eigenstates(g, 5)
    itp = solve_eigenstates(g, 5, method="imaginary-time")
    for a, b in zip(dense, itp):
        assert abs(a.energy - b.energy) * HARTREE_TO_CM < 0.5
    for states in (dense, itp):
        X = np.array([s.chi.ravel() for s in states])
        G = X @ X.T
        assert np.abs(np.diag(G) - 1).max() < 1e-10
        assert np.abs(G - np.diag(np.diag(G))).max() < 1e-8
        assert all(abs(s.norm - 1) < 1e-10 for s in states)
    with pytest.raises(RuntimeError):
        solve_eigenstates(g, 2, method="imaginary-time", max_steps=1)
    with pytest.raises(ValueError):
        solve_eigenstates(g, 2, method="qr")
    with pytest.raises(ValueError):
        solve_eigenstates(g, 0)


def test_parity_selection_rule():
    x = GridAxis("x", "bond", np.linspace(-3, 3, 101), 1.0)
    V = 0.05 * (x.points**2 - 1.5) ** 2
    mu = np.zeros((101, 3))
    mu[:, 2] = x.points
    states = solve_eigenstates(CPESGrid([x], V, mu), 4)
    sp = anharmonic_spectrum(states, CPESGrid([x], V, mu))
    # 0 -> 2 keeps parity
    assert sp.peaks[1].intensity < 1e-10 and sp.peaks[0].intensity > 1e-3


def test_uncoupled_decomposition_identity():
    g = model_grid(morse)
    states = solve_eigenstates(g, 4)
    ref = uncoupled_reference(g, [morse(g.axes[0].points)], OMEGA)
    ov = np.abs(np.array([[np.sum(ref.chi_m * s.chi), np.sum(ref.chi_c * s.chi)] for s in states]))
    # Morse fundamental (~3952 cm-1) lies below the 4000 cm-1 photon
    np.testing.assert_allclose(ov[1], [1.0, 0.0], atol=1e-8)
    np.testing.assert_allclose(ov[2], [0.0, 1.0], atol=1e-8)
    assert np.all(np.sum(ov**2, axis=0) <= 1 + 1e-8)
    bad = CPESGrid(g.axes[:1], g.energy[:, 0], g.dipole[:, 0])
    with pytest.raises(ValueError):
        polariton_decomposition(solve_eigenstates(bad, 3), ref)


def test_coupled_model_polaritons_and_labels():
    # the photon is 48 cm-1 above the Morse fundamental: near resonance
    g = model_grid(morse, coupling=0.05)
    states = solve_eigenstates(g, 6)
    ref = uncoupled_reference(g, [morse(g.axes[0].points)], OMEGA)
    sp = anharmonic_spectrum(states, g, ref)
    labels = [p.label for p in sp.peaks]
    assert labels.count("LP") == 1 and labels.count("UP") == 1
    assert states[0].label == "ground"
    with pytest.raises(ValueError):
        anharmonic_spectrum(states, CPESGrid(g.axes, g.energy, np.full(g.dipole.shape, np.nan)))


def test_cpes_round_trip(tmp_path):
    g = model_grid(morse, nR=12, nq=8, coupling=0.02)
    write_cpes(tmp_path / "g.txt", g)
    h = read_cpes(tmp_path / "g.txt")
    np.testing.assert_array_equal(h.energy, g.energy)
    np.testing.assert_array_equal(h.dipole, g.dipole)
    assert [a.name for a in h.axes] == ["R", "q_c"] and h.masses == g.masses
    states = solve_eigenstates(g, 3)
    write_states(tmp_path / "s.txt", states, g)
    data = np.loadtxt(tmp_path / "s.txt")
    assert data.shape == (96, 3)
    (tmp_path / "bad.txt").write_text("1 2 3\n")
    with pytest.raises(ValueError):
        read_cpes(tmp_path / "bad.txt")


def test_repair_rules():
    E = np.arange(200.0).reshape(2, 100)
    MU = np.zeros((2, 100, 3))
    E[0, 5] = np.nan
    _repair(E, MU)
    assert E[0, 5] == 5.0
    E[0, 5] = E[0, 6] = np.nan
    with pytest.raises(RuntimeError):
        _repair(E, MU)
    E = np.arange(200.0).reshape(2, 100)
    E[0, 10] = E[0, 30] = E[1, 50] = np.nan
    with pytest.raises(RuntimeError, match="failed"):
        _repair(E, MU)


@pytest.fixture(scope="module")
def small_scan(hf_mol):
    cav = CavityMode(OMEGA, 0.019)
    q0 = solve_stationary(hf_mol, "sto-3g", cav).cavity.q
    axes = [bond_axis(hf_mol, 0, 1, 10, 0.8, 1.3), photon_axis(OMEGA, q0, 8)]
    return scan_cpes(hf_mol, "sto-3g", axes, cav.with_q(q0)), cav


def test_scan_spot_checks(hf_mol, small_scan):
    g, cav = small_scan
    from cbohf.grid import _place_bonds
    from cbohf.molecule import center_of_nuclear_charge

    rng = np.random.default_rng(5)
    for _ in range(5):
        i, k = rng.integers(10), rng.integers(8)
        R = _place_bonds(hf_mol, g.axes[:1], [g.axes[0].points[i]])
        st = scf_solve(hf_mol.with_coords(R), "sto-3g", cav.with_q(g.axes[1].points[k]),
                       origin=center_of_nuclear_charge(hf_mol))
        assert abs(st.total_energy - g.energy[i, k]) < 1e-10
        np.testing.assert_allclose(st.dipole, g.dipole[i, k], atol=1e-8)


def test_scan_minimum_shift(hf_mol, small_scan):
    g, cav = small_scan
    idx, _ = g.minimum()
    from cbohf.grid import _place_bonds

    R = _place_bonds(hf_mol, g.axes[:1], [g.axes[0].points[idx[0]]])
    q_star = solve_stationary(hf_mol.with_coords(R), "sto-3g", cav).cavity.q
    assert photon_minimum(g) == pytest.approx(q_star, rel=1e-3)


def test_zero_coupling_separable(hf_mol):
    cav = CavityMode(OMEGA, 0.0)
    axes = [bond_axis(hf_mol, 0, 1, 6, 0.9, 1.2), photon_axis(OMEGA, 0.0, 8)]
    g = scan_cpes(hf_mol, "sto-3g", axes, cav)
    emol = molecular_potential(hf_mol, "sto-3g", axes[0])
    sep = emol[:, None] + 0.5 * OMEGA**2 * axes[1].points[None, :] ** 2
    assert np.abs(g.energy - sep).max() < 1e-10
    # the separable shortcut agrees with explicit SCF at displaced q_c
    from cbohf.grid import _place_bonds
    from cbohf.molecule import center_of_nuclear_charge

    R = _place_bonds(hf_mol, axes[:1], [axes[0].points[2]])
    st = scf_solve(hf_mol.with_coords(R), "sto-3g", cav.with_q(axes[1].points[6]),
                   origin=center_of_nuclear_charge(hf_mol))
    assert abs(st.total_energy - g.energy[2, 6]) < 1e-10


def test_scan_axis_errors(hf_mol):
    q = photon_axis(OMEGA, 0.0, 8)
    with pytest.raises(ValueError):
        scan_cpes(hf_mol, "sto-3g", [q], CavityMode(OMEGA, 0.0))
    with pytest.raises(ValueError):
        scan_cpes(hf_mol, "sto-3g", [q, bond_axis(hf_mol, 0, 1, 8)], CavityMode(OMEGA, 0.0))


def test_bond_axis_reduced_mass(hf_mol):
    ax = bond_axis(hf_mol, 0, 1)
    mA, mB = hf_mol.masses * AMU_TO_ME
    assert ax.mass == pytest.approx(mA * mB / (mA + mB))
    assert len(ax.points) == 128
    r0 = np.linalg.norm(hf_mol.coords[1] - hf_mol.coords[0])
    assert ax.points[0] == pytest.approx(0.55 * r0) and ax.points[-1] == pytest.approx(2.2 * r0)
