"""Molecular geometry, cavity mode and ensemble construction."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .constants import (
    ANGSTROM_TO_BOHR,
    ATOMIC_NUMBER,
    BOHR_TO_NM,
    ISOTOPE_MASS,
    normalize_symbol,
)


@dataclass(frozen=True)
class Atom:
    symbol: str
    charge: int
    position: np.ndarray  # bohr
    mass: float  # amu

    @classmethod
    def from_symbol(cls, symbol, position, mass=None):
        sym = normalize_symbol(symbol)
        pos = np.asarray(position, dtype=float).reshape(3).copy()
        m = ISOTOPE_MASS[sym] if mass is None else float(mass)
        if m <= 0:
            raise ValueError("atomic mass must be positive")
        return cls(sym, ATOMIC_NUMBER[sym], pos, m)


@dataclass(frozen=True)
class Molecule:
    atoms: tuple
    charge: int = 0
    partition: tuple = ()  # (start, stop) atom ranges, one per replica

    def __post_init__(self):
        if len(self.atoms) == 0:
            raise ValueError("molecule has no atoms")
        if not self.partition:
            object.__setattr__(self, "partition", ((0, len(self.atoms)),))
        covered = []
        for start, stop in self.partition:
            covered.extend(range(start, stop))
        if sorted(covered) != list(range(len(self.atoms))):
            raise ValueError("monomer partition must be disjoint and cover all atoms")
        if self.n_electrons % 2:
            raise ValueError("closed-shell treatment needs an even electron count")

    @classmethod
    def from_arrays(cls, symbols, coords_bohr, charge=0, masses=None, partition=()):
        coords = np.asarray(coords_bohr, dtype=float).reshape(-1, 3)
        if masses is None:
            masses = [None] * len(symbols)
        atoms = tuple(Atom.from_symbol(s, c, m) for s, c, m in zip(symbols, coords, masses))
        return cls(atoms, charge, tuple(partition))

    @property
    def natom(self) -> int:
        return len(self.atoms)

    @property
    def symbols(self):
        return [a.symbol for a in self.atoms]

    @property
    def charges(self) -> np.ndarray:
        return np.array([a.charge for a in self.atoms], dtype=float)

    @property
    def coords(self) -> np.ndarray:
        return np.array([a.position for a in self.atoms])

    @property
    def masses(self) -> np.ndarray:
        return np.array([a.mass for a in self.atoms])

    @property
    def n_electrons(self) -> int:
        return int(sum(a.charge for a in self.atoms)) - self.charge

    @property
    def n_occupied(self) -> int:
        return self.n_electrons // 2

    def with_coords(self, coords_bohr) -> "Molecule":
        coords = np.asarray(coords_bohr, dtype=float).reshape(self.natom, 3)
        atoms = tuple(replace(a, position=c.copy()) for a, c in zip(self.atoms, coords))
        return Molecule(atoms, self.charge, self.partition)

    def nuclear_dipole(self, origin=None) -> np.ndarray:
        o = np.zeros(3) if origin is None else np.asarray(origin, dtype=float)
        return self.charges @ (self.coords - o)

    def nuclear_repulsion(self) -> float:
        z = self.charges
        r = self.coords
        e = 0.0
        for a in range(self.natom):
            for b in range(a):
                e += z[a] * z[b] / np.linalg.norm(r[a] - r[b])
        return e

    def nuclear_repulsion_gradient(self) -> np.ndarray:
        z = self.charges
        r = self.coords
        g = np.zeros((self.natom, 3))
        for a in range(self.natom):
            for b in range(self.natom):
                if a == b:
                    continue
                d = r[a] - r[b]
                g[a] -= z[a] * z[b] * d / np.linalg.norm(d) ** 3
        return g

    def is_linear(self, tol=1e-6) -> bool:
        if self.natom <= 2:
            return True
        r = self.coords - self.coords[0]
        return np.linalg.matrix_rank(r, tol=tol) <= 1


@dataclass(frozen=True)
class CavityMode:
    """Single lossless cavity mode.

    ``omega`` is in hartree, ``coupling`` is the magnitude of the coupling
    vector in atomic units and ``q`` the photon displacement coordinate.
    """

    omega: float
    coupling: float
    polarization: tuple = (0.0, 0.0, 1.0)
    q: float = 0.0

    def __post_init__(self):
        e = np.asarray(self.polarization, dtype=float)
        if self.omega <= 0:
            raise ValueError("cavity frequency must be positive")
        if self.coupling < 0:
            raise ValueError("coupling strength must be non-negative")
        if abs(np.linalg.norm(e) - 1.0) > 1e-12:
            raise ValueError("polarization must be a unit vector")
        object.__setattr__(self, "polarization", tuple(float(x) for x in e))

    @property
    def lam(self) -> np.ndarray:
        """Coupling vector lambda * e."""
        return self.coupling * np.asarray(self.polarization)

    def with_q(self, q: float) -> "CavityMode":
        return replace(self, q=float(q))


@dataclass(frozen=True)
class EnsembleSpec:
    monomer: Molecule
    n_mol: int = 1
    orientation: str = "parallel"  # parallel | antiparallel
    separation: float = 800.0  # angstrom
    stacking_axis: Optional[tuple] = None

    def __post_init__(self):
        if self.n_mol < 1:
            raise ValueError("n_mol must be >= 1")
        if self.separation <= 0:
            raise ValueError("separation must be positive")
        if self.orientation not in ("parallel", "antiparallel"):
            raise ValueError(f"unknown orientation {self.orientation!r}")


def center_of_nuclear_charge(mol: Molecule) -> np.ndarray:
    z = mol.charges
    return z @ mol.coords / z.sum()


def default_stacking_axis(mol: Molecule, polarization=None) -> np.ndarray:
    """Cartesian axis least aligned with the polarization (or the first bond)."""
    if polarization is not None:
        ref = np.asarray(polarization, dtype=float)
    elif mol.natom > 1:
        ref = mol.coords[1] - mol.coords[0]
    else:
        ref = np.array([0.0, 0.0, 1.0])
    ref = ref / np.linalg.norm(ref)
    return np.eye(3)[int(np.argmin(np.abs(ref)))]


def build_ensemble(spec: EnsembleSpec, polarization=None) -> Molecule:
    mono = spec.monomer
    if spec.n_mol == 1:
        return mono
    if spec.stacking_axis is None:
        axis = default_stacking_axis(mono, polarization)
    else:
        axis = np.asarray(spec.stacking_axis, dtype=float)
        if abs(np.linalg.norm(axis) - 1.0) > 1e-12:
            raise ValueError("stacking axis must be a unit vector")
    shift = spec.separation * ANGSTROM_TO_BOHR
    center = center_of_nuclear_charge(mono)
    base = mono.coords
    symbols, coords, masses, parts = [], [], [], []
    for k in range(spec.n_mol):
        xyz = base.copy()
        if spec.orientation == "antiparallel" and k % 2 == 1:
            xyz = 2.0 * center - xyz
        xyz = xyz + k * shift * axis
        start = len(symbols)
        symbols.extend(mono.symbols)
        coords.extend(xyz)
        masses.extend(mono.masses)
        parts.append((start, len(symbols)))
    return Molecule.from_arrays(
        symbols, coords, charge=mono.charge * spec.n_mol, masses=masses, partition=parts
    )


def rescale_coupling(lambda0: float, n_mol: int) -> float:
    if n_mol < 1:
        raise ValueError("n_mol must be >= 1")
    if lambda0 < 0:
        raise ValueError("coupling must be non-negative")
    return lambda0 / math.sqrt(n_mol)


def mode_volume(coupling: float) -> float:
    """Effective mode volume in nm^3 for a coupling strength in a.u."""
    if coupling <= 0:
        raise ValueError("mode volume is infinite for zero coupling")
    return 4.0 * math.pi / coupling**2 * BOHR_TO_NM**3


def read_xyz(path, charge=0) -> Molecule:
    lines = Path(path).read_text().splitlines()
    return parse_xyz("\n".join(lines), charge=charge)


def parse_xyz(text: str, charge=0) -> Molecule:
    lines = [ln for ln in text.splitlines()]
    try:
        n = int(lines[0].split()[0])
    except (IndexError, ValueError):
        raise ValueError("XYZ text must start with the atom count")
    symbols, coords = [], []
    for ln in lines[2 : 2 + n]:
        parts = ln.split()
        if len(parts) < 4:
            raise ValueError(f"malformed XYZ line: {ln!r}")
        symbols.append(parts[0])
        coords.append([float(x) for x in parts[1:4]])
    if len(symbols) != n:
        raise ValueError("XYZ atom count does not match the number of lines")
    return Molecule.from_arrays(symbols, np.array(coords) * ANGSTROM_TO_BOHR, charge=charge)


def format_xyz(mol: Molecule, comment="") -> str:
    out = [str(mol.natom), comment]
    for a in mol.atoms:
        x, y, z = a.position / ANGSTROM_TO_BOHR
        out.append(f"{a.symbol:2s} {x:18.12f} {y:18.12f} {z:18.12f}")
    return "\n".join(out) + "\n"
