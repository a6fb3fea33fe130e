"""Analytic CBO-HF gradients over nuclear coordinates and the photon coordinate.

All contractions happen in the Cartesian AO basis with the multipole origin
held fixed, so nuclear derivatives of the dipole operator have no
operator-center part.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import relocate_basis
from .integrals import all_derivative_integrals, compute_integrals, eri_gradient, quad_component
from .scf import SCFState, scf_solve

# breakdown groups
HELLMANN_FEYNMAN = ("hellmann_feynman", "linear_nuc", "dse_mixed_nuc")
PULAY = ("pulay",)


@dataclass
class CboGradient:
    """Gradient over (x1, y1, z1, ..., q_c), with a per-term breakdown."""

    vector: np.ndarray
    breakdown: dict = field(default_factory=dict)

    @property
    def nuclear(self) -> np.ndarray:
        return self.vector[:-1].reshape(-1, 3)

    @property
    def photon(self) -> float:
        return float(self.vector[-1])

    def grouped(self) -> dict:
        """Breakdown summed into Hellmann-Feynman, Pulay and remaining terms."""
        out = {"hellmann_feynman": 0.0, "pulay": 0.0, "other": 0.0}
        for k, v in self.breakdown.items():
            key = "hellmann_feynman" if k in HELLMANN_FEYNMAN else "pulay" if k in PULAY else "other"
            out[key] = out[key] + v
        return out


def _check(state: SCFState):
    if not state.converged:
        raise ValueError("gradient requested for an unconverged SCF state")


def _lam_dipole_deriv(ddip, lam):
    return np.einsum("p,xdpij->xdij", lam, ddip)


def _lam_quad_deriv(dquad, lam):
    out = 0.0
    for p in range(3):
        for q in range(3):
            if lam[p] and lam[q]:
                out = out + lam[p] * lam[q] * dquad[:, :, quad_component(p, q)]
    return out


def nuclear_gradient_terms(state: SCFState) -> dict:
    """Per-term nuclear gradient contributions, each shaped (natom, 3)."""
    _check(state)
    if state.settings.scf_treatment != "full":
        return {"finite_difference": _frozen_nuclear_gradient(state)}
    mol = state.mol
    ints = state.integrals
    mb = ints.basis
    cav = state.cavity
    Tm = mb.transform
    Dc = Tm @ state.D @ Tm.T
    Wc = Tm @ state.W @ Tm.T
    der = all_derivative_integrals(mol, mb, ints.origin, cartesian=True)
    c = lambda A: np.einsum("xdij,ij->xd", A, Dc)  # noqa: E731
    terms = {
        "one_electron": c(der.dT) + c(der.dV_basis),
        "hellmann_feynman": c(der.dV_hf),
        "two_electron": eri_gradient(mol, mb, Dc, ints.eri),
        "pulay": -np.einsum("xdij,ij->xd", der.dS, Wc),
        "nuclear_repulsion": mol.nuclear_repulsion_gradient(),
    }
    lam = cav.lam
    if cav.coupling == 0.0:
        return terms
    Z = mol.charges
    dX = Z[:, None] * lam[None, :]  # dX/dR_A,p
    ddl = _lam_dipole_deriv(der.ddip, lam)
    dens_dd = c(ddl)  # tr(D dd)
    w, q = cav.omega, cav.q
    terms["linear_el"] = w * q * dens_dd
    terms["linear_nuc"] = -w * q * dX
    if state.settings.dse:
        d = ints.lam_dipole(lam)
        tdd = float(np.vdot(state.D, d))
        X = float(lam @ mol.nuclear_dipole(ints.origin))
        Mc = Tm @ (state.D @ d @ state.D) @ Tm.T
        terms["dse_one_el"] = 0.5 * c(_lam_quad_deriv(der.dquad, lam))
        terms["dse_two_el"] = tdd * dens_dd - 0.5 * np.einsum("xdij,ij->xd", ddl, Mc)
        terms["dse_mixed_el"] = -X * dens_dd
        terms["dse_mixed_nuc"] = -tdd * dX
        terms["dse_nuc"] = X * dX
    return terms


def nuclear_gradient(state: SCFState) -> np.ndarray:
    """dE/dR for all atoms, shape (natom, 3), at fixed q_c."""
    return sum(nuclear_gradient_terms(state).values())


def photon_gradient(state: SCFState) -> float:
    """dE/dq_c = omega^2 q_c - omega lam.<mu>."""
    _check(state)
    cav = state.cavity
    return cav.omega**2 * cav.q - cav.omega * float(cav.lam @ state.dipole)


def full_gradient(state: SCFState) -> CboGradient:
    terms = nuclear_gradient_terms(state)
    nat = state.mol.natom
    breakdown = {}
    for k, v in terms.items():
        breakdown[k] = np.append(np.asarray(v).ravel(), 0.0)
    cav = state.cavity
    pg = np.zeros(3 * nat + 1)
    pg[-1] = cav.omega**2 * cav.q
    breakdown["photon_dispersion"] = pg
    pl = np.zeros(3 * nat + 1)
    pl[-1] = -cav.omega * float(cav.lam @ state.dipole)
    breakdown["photon_linear"] = pl
    vec = sum(breakdown.values())
    return CboGradient(vec, breakdown)


def _frozen_nuclear_gradient(state: SCFState, step=1e-4) -> np.ndarray:
    """Central-difference nuclear gradient for the frozen cavity-free mode,
    whose energy is not variational in the cavity terms."""
    mol = state.mol
    mb = state.integrals.basis
    origin = state.integrals.origin
    g = np.zeros((mol.natom, 3))
    for a in range(mol.natom):
        for x in range(3):
            e = []
            for s in (step, -step):
                R = mol.coords.copy()
                R[a, x] += s
                m2 = mol.with_coords(R)
                mb2 = relocate_basis(mb, m2.coords)
                ints = compute_integrals(m2, mb2, origin=origin)
                st = scf_solve(m2, mb2, state.cavity, state.settings, ints, guess=state.D)
                e.append(st.total_energy)
            g[a, x] = (e[0] - e[1]) / (2 * step)
    return g
