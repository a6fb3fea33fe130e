"""Cavity Born-Oppenheimer Hartree-Fock: energies, gradients, normal modes and
vibro-polaritonic spectra of molecules coupled to a single cavity mode."""

__version__ = "0.1.0"

from .molecule import CavityMode, EnsembleSpec, Molecule, build_ensemble, read_xyz, rescale_coupling  # noqa: E402
from .scf import SCFSettings, scf_solve, solve_stationary  # noqa: E402
from .gradients import full_gradient  # noqa: E402
from .hessian import base_state, harmonic_analysis  # noqa: E402

__all__ = [
    "CavityMode",
    "EnsembleSpec",
    "Molecule",
    "SCFSettings",
    "base_state",
    "build_ensemble",
    "full_gradient",
    "harmonic_analysis",
    "read_xyz",
    "rescale_coupling",
    "scf_solve",
    "solve_stationary",
]
