"""Restricted closed-shell CBO-HF self-consistent field."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .basis import MolecularBasis
from .integrals import IntegralStore, _resolve_basis, compute_integrals
from .molecule import CavityMode, Molecule, center_of_nuclear_charge

log = logging.getLogger(__name__)

SCF_MODES = ("full", "frozen-cavity-free")


class SCFConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class SCFSettings:
    e_conv: float = 1e-10
    d_conv: float = 1e-8
    max_iter: int = 200
    diis: bool = True
    diis_size: int = 8
    scf_treatment: str = "full"
    dse: bool = True
    level_shift: float = 0.2
    oscillation_window: int = 10
    q_conv: float = 1e-10
    max_q_iter: int = 50

    def __post_init__(self):
        if self.e_conv <= 0 or self.d_conv <= 0 or self.q_conv <= 0:
            raise ValueError("convergence thresholds must be positive")
        if self.max_iter < 1 or self.diis_size < 2:
            raise ValueError("max_iter must be >= 1 and diis_size >= 2")
        if self.scf_treatment not in SCF_MODES:
            raise ValueError(f"scf_treatment must be one of {SCF_MODES}")


@dataclass(frozen=True)
class EnergyPartition:
    """Energy contributions in hartree.

    Linear and DSE terms are split into electronic and nuclear parts; the
    electronic DSE part includes the mixed electron-nuclear contribution.
    """

    e_el: float = 0.0
    e_lin_el: float = 0.0
    e_lin_nuc: float = 0.0
    e_dse_el: float = 0.0
    e_dse_nuc: float = 0.0
    e_dis: float = 0.0
    v_nn: float = 0.0

    @property
    def e_lin(self) -> float:
        return self.e_lin_el + self.e_lin_nuc

    @property
    def e_dse(self) -> float:
        return self.e_dse_el + self.e_dse_nuc

    @property
    def total(self) -> float:
        return self.e_el + self.e_lin_el + self.e_lin_nuc + self.e_dse_el + self.e_dse_nuc + self.e_dis + self.v_nn

    def as_dict(self) -> dict:
        return {
            "e_el": self.e_el,
            "e_lin": self.e_lin,
            "e_lin_el": self.e_lin_el,
            "e_lin_nuc": self.e_lin_nuc,
            "e_dse": self.e_dse,
            "e_dse_el": self.e_dse_el,
            "e_dse_nuc": self.e_dse_nuc,
            "e_dis": self.e_dis,
            "v_nn": self.v_nn,
            "total": self.total,
        }


@dataclass
class SCFState:
    mol: Molecule
    cavity: CavityMode
    settings: SCFSettings
    integrals: IntegralStore
    D: np.ndarray
    F: np.ndarray
    C: np.ndarray
    eps: np.ndarray
    energy: EnergyPartition
    converged: bool
    n_iter: int
    trace: list = field(default_factory=list)

    @property
    def nocc(self) -> int:
        return self.mol.n_occupied

    @property
    def W(self) -> np.ndarray:
        Co = self.C[:, : self.nocc]
        return 2.0 * (Co * self.eps[: self.nocc]) @ Co.T

    @property
    def total_energy(self) -> float:
        return self.energy.total

    @property
    def dipole(self) -> np.ndarray:
        """Total dipole <mu> (electronic + nuclear) about the integral origin."""
        return total_dipole(self.D, self.integrals, self.mol)


def total_dipole(D, ints: IntegralStore, mol: Molecule) -> np.ndarray:
    el = -np.einsum("pij,ij->p", ints.dip, D)
    return el + mol.nuclear_dipole(ints.origin)


@dataclass
class CavityTerms:
    """Cavity operators for one (molecule, integrals, cavity) combination."""

    d: np.ndarray  # <a|lam.r|b>
    Q: np.ndarray  # <a|(lam.r)^2|b>
    X: float  # lam . mu_nuc
    omega: float
    q: float
    dse: bool

    @classmethod
    def build(cls, mol, ints: IntegralStore, cavity: CavityMode, dse: bool):
        lam = cavity.lam
        return cls(
            d=ints.lam_dipole(lam),
            Q=ints.lam_quad(lam) if dse else np.zeros_like(ints.S),
            X=float(lam @ mol.nuclear_dipole(ints.origin)),
            omega=cavity.omega,
            q=cavity.q,
            dse=dse,
        )

    @property
    def one_electron(self) -> np.ndarray:
        h = self.omega * self.q * self.d
        if self.dse:
            h = h + 0.5 * self.Q - self.X * self.d
        return h


def build_fock(D, ints: IntegralStore, mol: Molecule, cavity: CavityMode | None = None,
               settings: SCFSettings | None = None, terms: CavityTerms | None = None):
    """Fock matrix and energy partition for a given density."""
    settings = settings or SCFSettings()
    D = np.asarray(D)
    if D.shape != ints.S.shape:
        raise ValueError(f"density shape {D.shape} does not match basis size {ints.S.shape}")
    h = ints.hcore
    J, Kx = ints.jk(D)
    G = J - 0.5 * Kx
    F = h + G
    e_el = float(np.vdot(D, h) + 0.5 * np.vdot(D, G))
    part = dict(e_el=e_el, v_nn=float(mol.nuclear_repulsion()))
    if cavity is not None:
        t = terms or CavityTerms.build(mol, ints, cavity, settings.dse)
        F = F + t.one_electron
        tdd = float(np.vdot(D, t.d))
        part["e_lin_el"] = t.omega * t.q * tdd
        part["e_lin_nuc"] = -t.omega * t.q * t.X
        part["e_dis"] = 0.5 * t.omega**2 * t.q**2
        if t.dse and np.any(t.d):
            dDd = t.d @ D @ t.d
            F = F + tdd * t.d - 0.5 * dDd
            part["e_dse_el"] = (
                0.5 * float(np.vdot(D, t.Q)) - t.X * tdd + 0.5 * tdd * tdd - 0.25 * float(np.vdot(D, dDd))
            )
            part["e_dse_nuc"] = 0.5 * t.X * t.X
        elif t.dse:
            part["e_dse_nuc"] = 0.5 * t.X * t.X
    return F, EnergyPartition(**part)


def _orthogonalizer(S):
    e, U = np.linalg.eigh(S)
    if e[0] <= 0:
        raise np.linalg.LinAlgError(f"overlap matrix is singular (smallest eigenvalue {e[0]:.3e})")
    return (U / np.sqrt(e)) @ U.T


def _roothaan(F, Xo, nocc):
    eps, Cp = np.linalg.eigh(Xo.T @ F @ Xo)
    C = Xo @ Cp
    # deterministic phase: largest-magnitude coefficient positive
    idx = np.argmax(np.abs(C), axis=0)
    C = C * np.sign(C[idx, np.arange(C.shape[1])])
    Co = C[:, :nocc]
    return eps, C, 2.0 * Co @ Co.T


class _DIIS:
    def __init__(self, size):
        self.size = size
        self.F = []
        self.err = []

    def push(self, F, err):
        self.F.append(F)
        self.err.append(err)
        if len(self.F) > self.size:
            self.F.pop(0)
            self.err.pop(0)

    def extrapolate(self):
        n = len(self.F)
        if n < 2:
            return self.F[-1]
        B = -np.ones((n + 1, n + 1))
        B[n, n] = 0.0
        for i in range(n):
            for j in range(i + 1):
                B[i, j] = B[j, i] = np.vdot(self.err[i], self.err[j])
        rhs = np.zeros(n + 1)
        rhs[n] = -1.0
        # rescale the error block; near convergence it is badly conditioned
        scale = np.abs(np.diag(B)[:n]).max()
        if scale <= 0:
            return self.F[-1]
        B[:n, :n] /= scale
        c = scipy.linalg.lstsq(B, rhs, lapack_driver="gelsd")[0][:n]
        return sum(ci * Fi for ci, Fi in zip(c, self.F))


def resolve_basis(mol, basis, spherical=True) -> MolecularBasis:
    return _resolve_basis(mol, basis, spherical)


def prepare_integrals(mol, basis, origin=None, spherical=True) -> IntegralStore:
    if origin is None:
        origin = center_of_nuclear_charge(mol)
    return compute_integrals(mol, resolve_basis(mol, basis, spherical), origin=origin)


def _iterate(mol, ints, cavity, settings, guess):
    nocc = mol.n_occupied
    if nocc > ints.nbf:
        raise ValueError("more occupied orbitals than basis functions")
    Xo = _orthogonalizer(ints.S)
    terms = CavityTerms.build(mol, ints, cavity, settings.dse) if cavity is not None else None
    if guess is None:
        h = ints.hcore + (terms.one_electron if terms is not None else 0.0)
        _, _, D = _roothaan(h, Xo, nocc)
    else:
        D = np.array(guess, dtype=float)
    S = ints.S
    diis = _DIIS(settings.diis_size) if settings.diis else None
    trace = []
    e_old = None
    shift = 0.0
    rises = []
    for it in range(1, settings.max_iter + 1):
        F, part = build_fock(D, ints, mol, cavity, settings, terms)
        energy = part.total
        err = Xo.T @ (F @ D @ S - S @ D @ F) @ Xo
        Fx = F
        if diis is not None:
            diis.push(F, err)
            Fx = diis.extrapolate()
        if shift:
            Fx = Fx + shift * (S - 0.5 * S @ D @ S)
        eps, C, D_new = _roothaan(Fx, Xo, nocc)
        d_rms = float(np.sqrt(np.mean((D_new - D) ** 2)))
        de = np.inf if e_old is None else energy - e_old
        trace.append({"iteration": it, "energy": energy, "delta_e": de if e_old is not None else None,
                      "density_rms": d_rms, "level_shift": shift})
        if e_old is not None:
            rises.append(de > 0)
            rises = rises[-settings.oscillation_window:]
            if not shift and len(rises) == settings.oscillation_window and sum(rises) >= settings.oscillation_window // 2:
                shift = settings.level_shift
                log.info("energy oscillating; enabling level shift %.2f", shift)
        if e_old is not None and abs(de) < settings.e_conv and d_rms < settings.d_conv:
            # finish with an unshifted, unextrapolated step
            F, _ = build_fock(D_new, ints, mol, cavity, settings, terms)
            eps, C, D = _roothaan(F, Xo, nocc)
            F, part = build_fock(D, ints, mol, cavity, settings, terms)
            return D, F, C, eps, part, True, it, trace
        D = D_new
        e_old = energy
    raise SCFConvergenceError(
        f"SCF not converged after {settings.max_iter} iterations (last energy change {de:.3e}, density rms {d_rms:.3e})"
    )


def scf_solve(mol: Molecule, basis, cavity: CavityMode | None = None, settings: SCFSettings | None = None,
              integrals: IntegralStore | None = None, origin=None, guess=None, spherical=True) -> SCFState:
    """Converge CBO-HF at fixed nuclear geometry and photon displacement.

    In ``frozen-cavity-free`` mode the orbitals come from the cavity-free
    SCF and the cavity terms are evaluated as expectation values.
    """
    settings = settings or SCFSettings()
    if cavity is None:
        cavity = CavityMode(omega=1.0, coupling=0.0)
    ints = integrals if integrals is not None else prepare_integrals(mol, basis, origin, spherical)
    if settings.scf_treatment == "frozen-cavity-free":
        D, _, C, eps, _, conv, it, trace = _iterate(mol, ints, None, settings, guess)
        F, part = build_fock(D, ints, mol, cavity, settings)
    else:
        D, F, C, eps, part, conv, it, trace = _iterate(mol, ints, cavity, settings, guess)
    return SCFState(mol, cavity, settings, ints, D, F, C, eps, part, conv, it, trace)


def optimal_photon_coordinate(state: SCFState, cavity: CavityMode | None = None) -> float:
    """q_c that makes the photon gradient vanish for the current density."""
    cavity = cavity or state.cavity
    if cavity.omega == 0:
        raise ValueError("cavity frequency must be nonzero")
    return float(cavity.lam @ state.dipole) / cavity.omega


def solve_stationary(mol: Molecule, basis, cavity: CavityMode, settings: SCFSettings | None = None,
                     integrals: IntegralStore | None = None, origin=None, guess=None, spherical=True) -> SCFState:
    """Alternate SCF at fixed q_c with the closed-form q_c update until the
    joint (D, q_c) fixed point is reached."""
    settings = settings or SCFSettings()
    ints = integrals if integrals is not None else prepare_integrals(mol, basis, origin, spherical)
    cav = cavity
    state = scf_solve(mol, basis, cav, settings, ints, guess=guess)
    for _ in range(settings.max_q_iter):
        q_new = optimal_photon_coordinate(state, cav)
        dq = abs(q_new - cav.q)
        cav = cav.with_q(q_new)
        state = scf_solve(mol, basis, cav, settings, ints, guess=state.D)
        if dq < settings.q_conv:
            return state
    raise SCFConvergenceError(f"photon coordinate not stationary after {settings.max_q_iter} cycles")


def with_settings(settings: SCFSettings, **kw) -> SCFSettings:
    return replace(settings, **kw)
