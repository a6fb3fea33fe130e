"""Finite-difference Hessians over nuclear and photon coordinates, normal modes,
harmonic frequencies and intensities."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .basis import MolecularBasis, relocate_basis
from .constants import AMU_TO_ME, HARTREE_TO_CM
from .gradients import full_gradient
from .integrals import compute_integrals
from .molecule import CavityMode, Molecule
from .scf import SCFSettings, SCFState, scf_solve, solve_stationary

log = logging.getLogger(__name__)

EXTERNAL_CUTOFF_CM = 10.0
DEGENERACY_CM = 1e-2


@dataclass
class CboHessian:
    matrix: np.ndarray
    step: float
    asymmetry: float  # max |H - H^T| before symmetrization
    dipole_gradient: np.ndarray  # (3, 3N+1), d<mu>/d zeta
    base_gradient: np.ndarray
    relax_q: bool = False

    @property
    def ncoord(self) -> int:
        return self.matrix.shape[0]


@dataclass
class NormalModeSet:
    eigenvalues: np.ndarray
    frequencies: np.ndarray  # cm^-1, imaginary reported as negative
    vectors: np.ndarray  # mass-weighted eigenvectors as columns
    photon_weight: np.ndarray  # |a_c|^2
    tags: list
    masses: np.ndarray  # per coordinate, electron masses
    intensities: np.ndarray | None = None

    @property
    def nmode(self) -> int:
        return len(self.frequencies)

    def internal(self) -> np.ndarray:
        """Indices of vibrational and photonic (non-external) modes."""
        return np.array([i for i, t in enumerate(self.tags) if t != "translational/rotational"], dtype=int)

    def peaks(self):
        """(frequency, intensity, |a_c|^2) rows for the internal modes."""
        idx = self.internal()
        inten = self.intensities if self.intensities is not None else np.zeros(self.nmode)
        return [(float(self.frequencies[i]), float(inten[i]), float(self.photon_weight[i])) for i in idx]


@dataclass
class _Job:
    mol: Molecule
    basis: MolecularBasis
    cavity: CavityMode
    settings: SCFSettings
    origin: np.ndarray
    guess: np.ndarray
    relax_q: bool = False
    reuse: object = field(default=None, repr=False)


def _evaluate(job: _Job):
    ints = job.reuse if job.reuse is not None else compute_integrals(job.mol, job.basis, origin=job.origin)
    if job.relax_q:
        st = solve_stationary(job.mol, job.basis, job.cavity, job.settings, ints, guess=job.guess)
    else:
        st = scf_solve(job.mol, job.basis, job.cavity, job.settings, ints, guess=job.guess)
    return full_gradient(st).vector, st.dipole


def _displaced(state: SCFState, j: int, h: float, relax_q: bool) -> _Job:
    mol = state.mol
    mb = state.integrals.basis
    cav = state.cavity
    nat3 = 3 * mol.natom
    if j < nat3:
        R = mol.coords.copy()
        R[j // 3, j % 3] += h
        m2 = mol.with_coords(R)
        return _Job(m2, relocate_basis(mb, R), cav, state.settings, state.integrals.origin, state.D, relax_q)
    return _Job(mol, mb, cav.with_q(cav.q + h), state.settings, state.integrals.origin, state.D, False,
                reuse=state.integrals)


def finite_difference_hessian(state: SCFState, step: float = 5e-3, jobs: int = 1,
                              relax_q: bool = False) -> CboHessian:
    """Central differences of analytic gradients; q_c is an independent
    displaced coordinate unless ``relax_q`` re-optimizes it at every
    displaced geometry (sensitivity option)."""
    if step <= 0:
        raise ValueError("finite-difference step must be positive")
    n = 3 * state.mol.natom + 1
    work = []
    for j in range(n):
        for s in (step, -step):
            work.append(_displaced(state, j, s, relax_q))
    if jobs > 1:
        for w in work:
            w.reuse = None
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_evaluate, work))
    else:
        results = []
        for k, w in enumerate(work):
            try:
                results.append(_evaluate(w))
            except Exception as exc:
                raise RuntimeError(f"SCF failed at displacement {k // 2} ({'+' if k % 2 == 0 else '-'}): {exc}") from exc
    H = np.zeros((n, n))
    dmu = np.zeros((3, n))
    for j in range(n):
        (gp, mup), (gm, mum) = results[2 * j], results[2 * j + 1]
        H[:, j] = (gp - gm) / (2 * step)
        dmu[:, j] = (mup - mum) / (2 * step)
    asym = float(np.abs(H - H.T).max())
    return CboHessian(0.5 * (H + H.T), step, asym, dmu, full_gradient(state).vector, relax_q)


def coordinate_masses(mol: Molecule) -> np.ndarray:
    """Masses (electron masses) for (x1, y1, z1, ..., q_c); photon mass is 1."""
    return np.append(np.repeat(np.asarray(mol.masses) * AMU_TO_ME, 3), 1.0)


def n_external(mol: Molecule) -> int:
    """Number of translational/rotational modes, counted per monomer."""
    parts = mol.partition or ((0, mol.natom),)
    total = 0
    for a, b in parts:
        sub = mol.coords[a:b]
        if b - a == 1:
            total += 3
        elif np.linalg.matrix_rank(sub - sub[0], tol=1e-6) <= 1:
            total += 5
        else:
            total += 6
    return total


def _canonical_vectors(freq, A, photon):
    """Deterministic ordering and phase: inside near-degenerate blocks order by
    descending |a_c|^2, then by the largest component; largest component positive."""
    n = len(freq)
    order = list(range(n))
    out = []
    i = 0
    while i < n:
        j = i + 1
        while j < n and abs(freq[order[j]] - freq[order[i]]) < DEGENERACY_CM:
            j += 1
        block = order[i:j]
        block.sort(key=lambda k: (-round(photon[k], 10), -round(float(np.abs(A[:, k]).max()), 10), k))
        out.extend(block)
        i = j
    A = A[:, out]
    idx = np.argmax(np.abs(A) > np.abs(A).max(axis=0) - 1e-12, axis=0)
    A = A * np.sign(A[idx, np.arange(n)])
    return np.array(out), A


def mass_weight_and_diagonalize(H, masses, n_ext: int = 0, cutoff_cm: float = EXTERNAL_CUTOFF_CM) -> NormalModeSet:
    """Normal modes of the mass-weighted Hessian.

    ``masses`` are per-coordinate in electron masses. The ``n_ext`` lowest
    |frequency| modes with |a_c|^2 < 0.5 are tagged translational/rotational.
    """
    H = np.asarray(H.matrix if isinstance(H, CboHessian) else H, dtype=float)
    if H.shape[0] != H.shape[1] or not np.allclose(H, H.T, atol=1e-12, rtol=0):
        raise ValueError("Hessian must be square and symmetric")
    m = np.asarray(masses, dtype=float)
    if len(m) != H.shape[0]:
        raise ValueError("mass vector does not match Hessian dimension")
    s = 1.0 / np.sqrt(m)
    Hm = H * s[:, None] * s[None, :]
    ell, A = np.linalg.eigh(Hm)
    freq = np.sign(ell) * np.sqrt(np.abs(ell)) * HARTREE_TO_CM
    photon = A[-1] ** 2
    order, A = _canonical_vectors(freq, A, photon)
    ell, freq, photon = ell[order], freq[order], photon[order]
    tags = ["photonic" if p >= 0.5 else "vibrational" for p in photon]
    candidates = sorted((k for k in range(len(freq)) if photon[k] < 0.5), key=lambda k: abs(freq[k]))
    for k in candidates[:n_ext]:
        tags[k] = "translational/rotational"
        if abs(freq[k]) > cutoff_cm:
            log.debug("external mode at %.2f cm-1 exceeds the %.1f cm-1 cutoff", freq[k], cutoff_cm)
    return NormalModeSet(ell, freq, A, photon, tags, m)


def harmonic_intensities(modes: NormalModeSet, dipole_gradient, include_photon: bool = True) -> np.ndarray:
    """|d<mu>/dQ_i|^2 summed over Cartesian components, per mode.

    With ``include_photon=False`` the d<mu>/dq_c column (the polarization
    response to the displacement field) is dropped and only nuclear dipole
    derivatives are projected.
    """
    g = np.array(dipole_gradient, dtype=float)
    if g.shape != (3, len(modes.masses)):
        raise ValueError(f"dipole gradient must have shape (3, {len(modes.masses)})")
    if not include_photon:
        g[:, -1] = 0.0
    proj = (g / np.sqrt(modes.masses)[None, :]) @ modes.vectors
    return np.sum(proj**2, axis=0)


@dataclass
class HarmonicResult:
    state: SCFState
    hessian: CboHessian
    modes: NormalModeSet


def harmonic_analysis(state: SCFState, step: float = 5e-3, jobs: int = 1, relax_q: bool = False,
                      include_photon: bool = True) -> HarmonicResult:
    hess = finite_difference_hessian(state, step, jobs, relax_q)
    modes = mass_weight_and_diagonalize(hess, coordinate_masses(state.mol), n_external(state.mol))
    modes.intensities = harmonic_intensities(modes, hess.dipole_gradient, include_photon)
    return HarmonicResult(state, hess, modes)


def base_state(mol: Molecule, basis, cavity: CavityMode, settings: SCFSettings | None = None,
               q_policy: str = "stationary", origin=None) -> SCFState:
    """SCF at the expansion point: the joint (D, q_c) stationary point, or a
    fixed q_c."""
    from .scf import prepare_integrals, resolve_basis

    settings = settings or SCFSettings()
    mb = resolve_basis(mol, basis)
    ints = prepare_integrals(mol, mb, origin)
    if q_policy == "stationary":
        if cavity.coupling == 0:
            cavity = cavity.with_q(0.0)
        else:
            return solve_stationary(mol, mb, cavity, settings, ints)
    return scf_solve(mol, mb, cavity, settings, ints)
