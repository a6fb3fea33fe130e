"""Cavity potential-energy surfaces and nuclear-photonic grid eigenstates.

Kinetic energy uses the sinc-DVR (Colbert-Miller) representation on uniform
axes. Eigenpairs come either from an iterative Lanczos solve of the full grid
Hamiltonian or from imaginary-time propagation with Gram-Schmidt deflation.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from .basis import relocate_basis
from .constants import AMU_TO_ME, HARTREE_TO_CM
from .integrals import compute_integrals
from .molecule import CavityMode, Molecule, center_of_nuclear_charge
from .scf import SCFConvergenceError, SCFSettings, resolve_basis, scf_solve, total_dipole

log = logging.getLogger(__name__)

MAX_FAILED_FRACTION = 0.005


@dataclass
class GridAxis:
    name: str
    kind: str  # bond | photon
    points: np.ndarray
    mass: float  # electron masses; 1 for the photon coordinate
    atoms: tuple = ()

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.kind not in ("bond", "photon"):
            raise ValueError(f"unknown axis kind {self.kind!r}")
        d = np.diff(self.points)
        if len(self.points) < 2 or np.any(d <= 0) or np.ptp(d) > 1e-9 * abs(d[0]) + 1e-12:
            raise ValueError(f"axis {self.name} must be strictly increasing and uniform")

    @property
    def spacing(self) -> float:
        return float(self.points[1] - self.points[0])

    def as_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind, "mass": self.mass, "atoms": list(self.atoms),
                "start": float(self.points[0]), "stop": float(self.points[-1]), "n": len(self.points)}

    @classmethod
    def from_dict(cls, d) -> "GridAxis":
        return cls(d["name"], d["kind"], np.linspace(d["start"], d["stop"], d["n"]), d["mass"], tuple(d["atoms"]))


def bond_axis(mol: Molecule, i: int, j: int, n: int = 128, lo: float = 0.55, hi: float = 2.2, name=None) -> GridAxis:
    """Bond length axis spanning lo..hi times the current i-j distance."""
    r0 = float(np.linalg.norm(mol.coords[j] - mol.coords[i]))
    mi, mj = mol.masses[i] * AMU_TO_ME, mol.masses[j] * AMU_TO_ME
    return GridAxis(name or f"R{i}{j}", "bond", np.linspace(lo * r0, hi * r0, n), mi * mj / (mi + mj), (i, j))


def photon_axis(omega: float, center: float = 0.0, n: int = 64, widths: float = 6.0) -> GridAxis:
    """q_c axis spanning +-widths ground-state widths sqrt(1/omega) about center."""
    half = widths / math.sqrt(omega)
    return GridAxis("q_c", "photon", np.linspace(center - half, center + half, n), 1.0)


@dataclass
class CPESGrid:
    axes: list
    energy: np.ndarray
    dipole: np.ndarray  # shape + (3,)
    cavity: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple:
        return tuple(len(a.points) for a in self.axes)

    @property
    def masses(self) -> list:
        return [a.mass for a in self.axes]

    def minimum(self):
        idx = np.unravel_index(np.nanargmin(self.energy), self.shape)
        return idx, tuple(a.points[k] for a, k in zip(self.axes, idx))


def _place_bonds(template: Molecule, axes, values) -> np.ndarray:
    R = template.coords.copy()
    M = template.masses
    for ax, r in zip(axes, values):
        i, j = ax.atoms
        u = R[j] - R[i]
        u /= np.linalg.norm(u)
        com = (M[i] * R[i] + M[j] * R[j]) / (M[i] + M[j])
        R[i] = com - u * r * M[j] / (M[i] + M[j])
        R[j] = com + u * r * M[i] / (M[i] + M[j])
    return R


def _scan_row(args):
    """All q_c nodes at one nuclear geometry, swept outward from ``q_start``
    with warm starts; each row starts from the core guess so results do not
    depend on scheduling."""
    mol, mb, origin, cavity, settings, qpts, q_start = args
    ints = compute_integrals(mol, mb, origin=origin)
    nq = len(qpts)
    E = np.full(nq, np.nan)
    MU = np.full((nq, 3), np.nan)
    if cavity.coupling == 0.0:
        # q_c does not enter the electronic problem
        try:
            st = scf_solve(mol, mb, cavity.with_q(0.0), settings, ints)
        except SCFConvergenceError as exc:
            log.warning("SCF failed: %s", exc)
            return E, MU
        E[:] = st.total_energy + 0.5 * cavity.omega**2 * qpts**2
        MU[:] = st.dipole
        return E, MU
    D_center = None
    for sweep in (range(q_start, nq), range(q_start - 1, -1, -1)):
        D = D_center
        for k in sweep:
            try:
                st = scf_solve(mol, mb, cavity.with_q(qpts[k]), settings, ints, guess=D)
            except SCFConvergenceError as exc:
                log.warning("SCF failed at q index %d: %s", k, exc)
                continue
            D = st.D
            if k == q_start:
                D_center = st.D
            E[k] = st.total_energy
            MU[k] = total_dipole(st.D, ints, mol)
    return E, MU


def scan_cpes(template: Molecule, basis, axes, cavity: CavityMode, settings: SCFSettings | None = None,
              origin=None, jobs: int = 1) -> CPESGrid:
    """CBO-HF energies and dipoles on the tensor grid of bond axes and q_c
    (last axis). q_c is a fixed parameter at every node."""
    settings = settings or SCFSettings()
    axes = list(axes)
    if not axes or axes[-1].kind != "photon" or any(a.kind != "bond" for a in axes[:-1]):
        raise ValueError("axes must be 1 or 2 bond axes followed by the photon axis")
    if not 1 <= len(axes) - 1 <= 2:
        raise ValueError("only 1 or 2 bond axes are supported")
    mb = resolve_basis(template, basis)
    if origin is None:
        origin = center_of_nuclear_charge(template)
    origin = np.asarray(origin, dtype=float)
    bond_axes, qax = axes[:-1], axes[-1]
    shape = tuple(len(a.points) for a in axes)
    q_start = int(np.argmin(np.abs(qax.points - cavity.q)))
    nuc = list(product(*[range(len(a.points)) for a in bond_axes]))
    work = []
    for idx in nuc:
        R = _place_bonds(template, bond_axes, [a.points[k] for a, k in zip(bond_axes, idx)])
        work.append((template.with_coords(R), relocate_basis(mb, R), origin, cavity, settings, qax.points, q_start))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_scan_row, work, chunksize=max(1, len(work) // (4 * jobs))))
    else:
        rows = [_scan_row(w) for w in work]
    E = np.full(shape, np.nan)
    MU = np.full(shape + (3,), np.nan)
    for idx, (e, mu) in zip(nuc, rows):
        E[idx] = e
        MU[idx] = mu
    _repair(E, MU)
    cav = {"omega": cavity.omega, "coupling": cavity.coupling, "polarization": list(map(float, cavity.polarization))}
    meta = {"basis": mb.name, "spherical": bool(mb.spherical), "origin": origin.tolist(),
            "scf_treatment": settings.scf_treatment, "dse": settings.dse}
    return CPESGrid(axes, E, MU, cav, meta)


def molecular_potential(template: Molecule, basis, axis: GridAxis, settings: SCFSettings | None = None,
                        origin=None) -> np.ndarray:
    """Cavity-free energy along one bond axis with all other atoms fixed."""
    settings = settings or SCFSettings()
    mb = resolve_basis(template, basis)
    if origin is None:
        origin = center_of_nuclear_charge(template)
    cav = CavityMode(1.0, 0.0)
    E = np.empty(len(axis.points))
    D = None
    for k, r in enumerate(axis.points):
        R = _place_bonds(template, [axis], [r])
        mol = template.with_coords(R)
        mbR = relocate_basis(mb, R)
        st = scf_solve(mol, mbR, cav, settings, compute_integrals(mol, mbR, origin=origin), guess=D)
        D = st.D
        E[k] = st.total_energy
    return E


def _repair(E, MU):
    bad = np.isnan(E)
    nbad = int(bad.sum())
    if nbad == 0:
        return
    if nbad > MAX_FAILED_FRACTION * E.size:
        raise RuntimeError(f"{nbad} of {E.size} grid points failed")
    for idx in zip(*np.nonzero(bad)):
        # isolated points only: average the finite neighbors along the last axis
        k = idx[-1]
        nb = [idx[:-1] + (k + s,) for s in (-1, 1) if 0 <= k + s < E.shape[-1]]
        vals = [nbi for nbi in nb if not np.isnan(E[nbi])]
        if len(vals) < len(nb) or not vals:
            raise RuntimeError(f"failed grid point {idx} is not isolated")
        E[idx] = np.mean([E[v] for v in vals])
        MU[idx] = np.mean([MU[v] for v in vals], axis=0)


# ---------------------------------------------------------------------------
# Hamiltonian and eigensolvers


def sinc_dvr_kinetic(n: int, dx: float, mass: float) -> np.ndarray:
    i = np.arange(n)
    d = i[:, None] - i[None, :]
    with np.errstate(divide="ignore"):
        T = np.where(d == 0, math.pi**2 / 3.0, 2.0 * (-1.0) ** np.abs(d) / np.where(d == 0, 1, d) ** 2)
    return T / (2.0 * mass * dx * dx)


class GridHamiltonian:
    """H = sum_k T_k + V on a tensor grid; vectors are flattened row-major."""

    def __init__(self, potential: np.ndarray, axes):
        self.V = np.asarray(potential, dtype=float)
        self.shape = self.V.shape
        self.T = [sinc_dvr_kinetic(len(a.points), a.spacing, a.mass) for a in axes]
        self.size = self.V.size
        self.vref = float(self.V.min())

    def apply(self, psi: np.ndarray) -> np.ndarray:
        x = psi.reshape(self.shape)
        out = (self.V - self.vref) * x
        for k, T in enumerate(self.T):
            out += np.moveaxis(np.tensordot(T, x, axes=([1], [k])), 0, k)
        return out.reshape(-1)

    def dense(self) -> np.ndarray:
        H = np.diag((self.V - self.vref).ravel())
        for k, T in enumerate(self.T):
            ops = [np.eye(n) for n in self.shape]
            ops[k] = T
            K = ops[0]
            for o in ops[1:]:
                K = np.kron(K, o)
            H += K
        return H

    def operator(self) -> spla.LinearOperator:
        return spla.LinearOperator((self.size, self.size), matvec=self.apply, dtype=float)


@dataclass
class NuclearPhotonicState:
    energy: float  # hartree
    chi: np.ndarray  # grid-shaped, unit 2-norm over grid points
    label: str = ""

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.chi**2)))


def _fix_phase(v):
    k = int(np.argmax(np.abs(v)))
    return v if v[k] >= 0 else -v


def _dense_route(H: GridHamiltonian, n_states: int, tol: float):
    if H.size <= 2500:
        w, U = np.linalg.eigh(H.dense())
        return w[:n_states], U[:, :n_states]
    v0 = np.exp(-(H.V - H.vref).ravel() / max(np.ptp(H.V), 1e-12) * 50.0)
    w, U = spla.eigsh(H.operator(), k=n_states, which="SA", tol=tol, v0=v0, ncv=max(4 * n_states, 40))
    order = np.argsort(w)
    return w[order], U[:, order]


def _lanczos_expm(apply, psi, tau, m):
    """exp(-tau H) psi via a Lanczos basis with full reorthogonalization."""
    n = psi.size
    beta0 = np.linalg.norm(psi)
    Vb = np.zeros((m, n))
    a = np.zeros(m)
    b = np.zeros(m)
    Vb[0] = psi / beta0
    k_used = m
    for j in range(m):
        w = apply(Vb[j])
        a[j] = Vb[j] @ w
        w -= Vb[: j + 1].T @ (Vb[: j + 1] @ w)
        w -= Vb[: j + 1].T @ (Vb[: j + 1] @ w)
        if j + 1 < m:
            b[j] = np.linalg.norm(w)
            if b[j] < 1e-14:
                k_used = j + 1
                break
            Vb[j + 1] = w / b[j]
    Tm = np.diag(a[:k_used]) + np.diag(b[: k_used - 1], 1) + np.diag(b[: k_used - 1], -1)
    theta, S = scipy.linalg.eigh(Tm)
    coef = S @ (np.exp(-tau * (theta - theta[0])) * S[0])
    return beta0 * (Vb[:k_used].T @ coef)


def _imaginary_time_route(H: GridHamiltonian, n_states: int, tol: float, krylov: int = 30,
                          tau0: float = 100.0, max_steps: int = 2000, seed: int = 20240611):
    found = []

    def project(v):
        for u in found:
            v = v - (u @ v) * u
        for u in found:
            v = v - (u @ v) * u
        return v

    def apply_p(v):
        return project(H.apply(project(v)))

    rng = np.random.default_rng(seed)
    energies = []
    for s in range(n_states):
        psi = project(rng.standard_normal(H.size) + np.exp(-(H.V - H.vref).ravel() * 20.0))
        psi /= np.linalg.norm(psi)
        e_old = psi @ apply_p(psi)
        tau = tau0
        de_old = np.inf
        for step in range(max_steps):
            psi = project(_lanczos_expm(apply_p, psi, tau, krylov))
            psi /= np.linalg.norm(psi)
            hpsi = apply_p(psi)
            e = psi @ hpsi
            res = np.linalg.norm(hpsi - e * psi)
            de = abs(e - e_old)
            if de < tol and res < 1e-6:
                break
            if de > 0.5 * de_old:
                tau = min(tau * 2.0, 1e6)
            de_old = de
            e_old = e
        else:
            raise RuntimeError(f"imaginary-time propagation did not converge for state {s}")
        found.append(_fix_phase(psi))
        energies.append(e)
    return np.array(energies), np.array(found).T


def solve_eigenstates(grid: CPESGrid, n_states: int, method: str = "dense", tol: float = 1e-10,
                      potential: np.ndarray | None = None, max_steps: int = 2000):
    """Lowest eigenpairs of the nuclear-photonic grid Hamiltonian.

    ``method`` is ``dense`` (Lanczos/dense diagonalization) or
    ``imaginary-time``; both return orthonormal states in ascending energy.
    """
    if n_states < 1:
        raise ValueError("n_states must be >= 1")
    V = grid.energy if potential is None else potential
    H = GridHamiltonian(V, grid.axes)
    if n_states > H.size:
        raise ValueError("more states requested than grid points")
    if method == "dense":
        w, U = _dense_route(H, n_states, tol * 1e-2)
    elif method in ("imaginary-time", "imaginary_time"):
        w, U = _imaginary_time_route(H, n_states, tol, max_steps=max_steps)
    else:
        raise ValueError(f"unknown eigensolver method {method!r}")
    states = []
    for k in range(n_states):
        v = _fix_phase(U[:, k] / np.linalg.norm(U[:, k]))
        states.append(NuclearPhotonicState(float(w[k] + H.vref), v.reshape(H.shape)))
    return states


# ---------------------------------------------------------------------------
# spectra and decomposition


@dataclass
class UncoupledReference:
    """Uncoupled molecular-excited and one-photon states on a coupled grid."""

    chi_m: np.ndarray
    chi_c: np.ndarray
    shape: tuple
    energies: dict = field(default_factory=dict)
    photon_center: float = 0.0


def _eig1d(axis: GridAxis, potential: np.ndarray, n: int = 2):
    T = sinc_dvr_kinetic(len(axis.points), axis.spacing, axis.mass)
    w, U = np.linalg.eigh(T + np.diag(potential))
    return w[:n], np.array([_fix_phase(U[:, k]) for k in range(n)])


def photon_minimum(grid: CPESGrid) -> float:
    """q_c of the energy minimum along the photon axis, from a quadratic fit
    of the q_c column through the lowest node."""
    idx, _ = grid.minimum()
    col = grid.energy[idx[:-1]]
    a, b, _ = np.polyfit(grid.axes[-1].points, col, 2)
    return float(-b / (2 * a))


def uncoupled_reference(grid: CPESGrid, molecular_potentials, omega: float | None = None,
                        photon_center: float | None = None):
    """Product states from 1D problems: each bond in its cavity-free potential
    E_mol(R) and the bare photon oscillator 1/2 omega^2 (q - center)^2.

    ``molecular_potentials`` holds one array per bond axis. With two bonds
    the molecular reference is the symmetric single-excitation combination.
    The photon oscillator is centered on the coupled surface's q_c minimum
    unless ``photon_center`` is given (0 gives the undisplaced vacuum).
    """
    if omega is None:
        omega = float(grid.cavity["omega"])
    if photon_center is None:
        photon_center = photon_minimum(grid)
    bond_axes, qax = grid.axes[:-1], grid.axes[-1]
    if len(molecular_potentials) != len(bond_axes):
        raise ValueError("need one molecular potential per bond axis")
    mol_states = []
    energies = {}
    for ax, V in zip(bond_axes, molecular_potentials):
        V = np.asarray(V, float)
        if V.shape != ax.points.shape:
            raise ValueError(f"molecular potential does not match axis {ax.name}")
        w, U = _eig1d(ax, V)
        mol_states.append(U)
        energies[ax.name] = (w[1] - w[0]) * HARTREE_TO_CM
    wq, Uq = _eig1d(qax, 0.5 * omega**2 * (qax.points - photon_center) ** 2)
    energies["q_c"] = (wq[1] - wq[0]) * HARTREE_TO_CM

    def prod(vs):
        out = vs[0]
        for v in vs[1:]:
            out = np.multiply.outer(out, v)
        return out

    ground = [U[0] for U in mol_states]
    chi_c = prod(ground + [Uq[1]])
    chi_m = np.zeros(grid.shape)
    for k in range(len(mol_states)):
        vs = list(ground)
        vs[k] = mol_states[k][1]
        chi_m += prod(vs + [Uq[0]])
    chi_m /= np.linalg.norm(chi_m)
    return UncoupledReference(chi_m, chi_c, grid.shape, energies, float(photon_center))


@dataclass
class PolaritonDecomposition:
    lp: int
    up: int
    a_m_lp: float
    a_c_lp: float
    a_m_up: float
    a_c_up: float
    overlaps: np.ndarray  # (n_states, 2) <chi_m|chi_j>, <chi_c|chi_j>

    @property
    def photon_lp(self) -> float:
        return self.a_c_lp**2

    @property
    def photon_up(self) -> float:
        return self.a_c_up**2

    @property
    def two_state_lp(self) -> float:
        return self.a_m_lp**2 + self.a_c_lp**2

    @property
    def two_state_up(self) -> float:
        return self.a_m_up**2 + self.a_c_up**2


def polariton_decomposition(states, reference: UncoupledReference) -> PolaritonDecomposition:
    """Expansion coefficients of LP/UP in the uncoupled molecular and
    one-photon states; LP/UP are the two excited states with the largest
    weight in that two-state space."""
    if tuple(states[0].chi.shape) != tuple(reference.shape):
        raise ValueError("reference and coupled states live on different grids")
    ov = np.array([[np.sum(reference.chi_m * s.chi), np.sum(reference.chi_c * s.chi)] for s in states])
    weight = np.sum(ov**2, axis=1)
    excited = sorted(range(1, len(states)), key=lambda j: -weight[j])[:2]
    if len(excited) < 2:
        raise ValueError("need at least three states for an LP/UP decomposition")
    lp, up = sorted(excited, key=lambda j: states[j].energy)
    return PolaritonDecomposition(lp, up, ov[lp, 0], ov[lp, 1], ov[up, 0], ov[up, 1], ov)


def anharmonic_spectrum(states, grid: CPESGrid, reference: UncoupledReference | None = None):
    """Transitions from the ground state: frequencies E_j - E_0 (cm^-1) and
    intensities |<chi_0|mu|chi_j>|^2 by grid quadrature."""
    from .spectra import Peak, SpectrumPeakSet

    if grid.dipole is None or np.isnan(grid.dipole).any():
        raise ValueError("grid has no dipole surface")
    chi0 = states[0].chi
    labels = {}
    photon = {}
    if reference is not None:
        dec = polariton_decomposition(states, reference)
        labels = {dec.lp: "LP", dec.up: "UP"}
        states[0].label = "ground"
        for j, lab in labels.items():
            states[j].label = lab
        photon = {j: float(dec.overlaps[j, 1] ** 2) for j in range(len(states))}
    peaks = []
    for j in range(1, len(states)):
        tm = (chi0 * states[j].chi).reshape(-1) @ grid.dipole.reshape(-1, 3)
        peaks.append(Peak((states[j].energy - states[0].energy) * HARTREE_TO_CM, float(tm @ tm),
                          photon.get(j, 0.0), labels.get(j, "")))
    return SpectrumPeakSet(peaks, "anharmonic", dict(grid.cavity))


# ---------------------------------------------------------------------------
# file I/O


def write_cpes(path, grid: CPESGrid) -> None:
    """Text tensor file: '#'-prefixed JSON header, then one row per node
    (row-major) with energy and the three dipole components."""
    header = {"format": "cbohf-cpes", "version": 1, "shape": list(grid.shape),
              "axes": [a.as_dict() for a in grid.axes], "columns": ["energy", "mu_x", "mu_y", "mu_z"],
              "cavity": grid.cavity, "meta": grid.meta}
    lines = ["# " + json.dumps(header, sort_keys=True)]
    E = grid.energy.ravel()
    MU = grid.dipole.reshape(-1, 3)
    for e, m in zip(E, MU):
        lines.append(f"{e:.17e} {m[0]:.17e} {m[1]:.17e} {m[2]:.17e}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_cpes(path) -> CPESGrid:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("# "):
        raise ValueError("missing CPES header")
    header = json.loads(text[0][2:])
    if header.get("format") != "cbohf-cpes":
        raise ValueError("not a CPES file")
    axes = [GridAxis.from_dict(d) for d in header["axes"]]
    data = np.loadtxt(text[1:], ndmin=2)
    shape = tuple(header["shape"])
    if data.shape != (int(np.prod(shape)), 4):
        raise ValueError("CPES data size does not match header")
    return CPESGrid(axes, data[:, 0].reshape(shape), data[:, 1:].reshape(shape + (3,)), header["cavity"], header["meta"])


def write_states(path, states, grid: CPESGrid) -> None:
    """Eigenfunctions as a text tensor file: JSON header with axes and
    energies, then one row per grid node holding chi_0 .. chi_n."""
    header = {"format": "cbohf-states", "version": 1, "shape": list(grid.shape),
              "axes": [a.as_dict() for a in grid.axes], "energies": [s.energy for s in states],
              "labels": [s.label for s in states]}
    cols = np.array([s.chi.ravel() for s in states]).T
    lines = ["# " + json.dumps(header, sort_keys=True)]
    lines += [" ".join(f"{v:.12e}" for v in row) for row in cols]
    Path(path).write_text("\n".join(lines) + "\n")
