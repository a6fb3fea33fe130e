"""Gaussian94 basis parsing and molecular basis construction."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .constants import normalize_symbol

SHELL_L = {"S": 0, "P": 1, "D": 2, "F": 3}
LMAX = 3
BASIS_PATH_ENV = "CBOHF_BASIS_PATH"
_DATA_DIR = Path(__file__).parent / "basis_data"


def dfact(n: int) -> int:
    """Double factorial with (-1)!! = 1."""
    r = 1
    while n > 1:
        r *= n
        n -= 2
    return r


def ncart(l: int) -> int:
    return (l + 1) * (l + 2) // 2


def cart_components(l: int):
    return [(lx, ly, l - lx - ly) for lx in range(l, -1, -1) for ly in range(l - lx, -1, -1)]


@dataclass(frozen=True)
class Shell:
    l: int
    exponents: tuple
    coefficients: tuple  # as read from the basis file

    def __post_init__(self):
        if not 0 <= self.l <= LMAX:
            raise ValueError(f"angular momentum {self.l} not supported")
        if len(self.exponents) != len(self.coefficients) or not self.exponents:
            raise ValueError("exponent and coefficient lists must be non-empty and equal length")
        if any(a <= 0 for a in self.exponents):
            raise ValueError("exponents must be positive")

    @property
    def ncart(self) -> int:
        return ncart(self.l)

    def normalized_coefficients(self) -> np.ndarray:
        """Coefficients multiplying bare primitives x^l exp(-a r^2) so that the
        axis component (x^l) of the contraction has unit norm."""
        l = self.l
        a = np.asarray(self.exponents)
        c = np.asarray(self.coefficients, dtype=float)
        prim_norm = (2 * a / np.pi) ** 0.75 * (4 * a) ** (l / 2) / math.sqrt(dfact(2 * l - 1))
        cn = c * prim_norm
        s = a[:, None] + a[None, :]
        ov = (np.pi / s) ** 1.5 * dfact(2 * l - 1) / (2 * s) ** l
        norm = cn @ ov @ cn
        return cn / math.sqrt(norm)


@dataclass(frozen=True)
class BasisSet:
    name: str
    shells: dict  # element symbol -> tuple[Shell]

    def for_element(self, symbol: str):
        try:
            return self.shells[symbol]
        except KeyError:
            raise KeyError(f"basis {self.name!r} has no entry for element {symbol}") from None


def _float(tok: str) -> float:
    try:
        return float(tok.replace("D", "E").replace("d", "e"))
    except ValueError:
        raise ValueError(f"non-numeric basis entry {tok!r}") from None


def parse_basis(text: str, name: str = "custom") -> BasisSet:
    """Parse basis definitions in Gaussian94 format."""
    lines = []
    for raw in text.splitlines():
        ln = raw.split("!")[0].strip()
        if ln:
            lines.append(ln)
    shells: dict = {}
    i = 0
    while i < len(lines):
        tok = lines[i].split()
        if tok[0] == "****":
            i += 1
            continue
        elem = normalize_symbol(tok[0])
        i += 1
        elem_shells = []
        while i < len(lines) and lines[i].split()[0] != "****":
            head = lines[i].split()
            kind = head[0].upper()
            if kind != "SP" and kind not in SHELL_L:
                raise ValueError(f"unknown shell type {head[0]!r} for {elem}")
            try:
                nprim = int(head[1])
            except (IndexError, ValueError):
                raise ValueError(f"bad shell header {lines[i]!r}") from None
            rows = []
            for k in range(nprim):
                if i + 1 + k >= len(lines):
                    raise ValueError(f"truncated shell for {elem}")
                rows.append([_float(t) for t in lines[i + 1 + k].split()])
            i += 1 + nprim
            exps = tuple(r[0] for r in rows)
            if kind == "SP":
                elem_shells.append(Shell(0, exps, tuple(r[1] for r in rows)))
                elem_shells.append(Shell(1, exps, tuple(r[2] for r in rows)))
            else:
                elem_shells.append(Shell(SHELL_L[kind], exps, tuple(r[1] for r in rows)))
        if not elem_shells:
            raise ValueError(f"empty basis block for {elem}")
        shells[elem] = tuple(elem_shells)
        i += 1
    if not shells:
        raise ValueError("no basis blocks found")
    return BasisSet(name, shells)


def load_basis(name_or_path: str) -> BasisSet:
    """Load a bundled basis by name, or a Gaussian94 file by path.

    Directories listed in ``$CBOHF_BASIS_PATH`` are searched before the
    bundled library.
    """
    p = Path(name_or_path)
    if p.is_file():
        return parse_basis(p.read_text(), name=p.stem)
    fname = name_or_path.lower() + ".gbs"
    dirs = [Path(d) for d in os.environ.get(BASIS_PATH_ENV, "").split(os.pathsep) if d]
    for d in dirs + [_DATA_DIR]:
        f = d / fname
        if f.is_file():
            return parse_basis(f.read_text(), name=name_or_path.lower())
    raise FileNotFoundError(f"basis {name_or_path!r} not found")


# real solid harmonics as polynomials in x, y, z; m = -l..l
_SOLID = {
    2: [
        {(1, 1, 0): 1.0},
        {(0, 1, 1): 1.0},
        {(0, 0, 2): 2.0, (2, 0, 0): -1.0, (0, 2, 0): -1.0},
        {(1, 0, 1): 1.0},
        {(2, 0, 0): 1.0, (0, 2, 0): -1.0},
    ],
    3: [
        {(2, 1, 0): 3.0, (0, 3, 0): -1.0},
        {(1, 1, 1): 1.0},
        {(0, 1, 2): 4.0, (2, 1, 0): -1.0, (0, 3, 0): -1.0},
        {(0, 0, 3): 2.0, (2, 0, 1): -3.0, (0, 2, 1): -3.0},
        {(1, 0, 2): 4.0, (3, 0, 0): -1.0, (1, 2, 0): -1.0},
        {(2, 0, 1): 1.0, (0, 2, 1): -1.0},
        {(3, 0, 0): 1.0, (1, 2, 0): -3.0},
    ],
}


def _cart_factor(l, c):
    return math.sqrt(dfact(2 * l - 1) / (dfact(2 * c[0] - 1) * dfact(2 * c[1] - 1) * dfact(2 * c[2] - 1)))


def _monomial_overlap(l, c1, c2):
    s = [c1[k] + c2[k] for k in range(3)]
    if any(v % 2 for v in s):
        return 0.0
    return dfact(s[0] - 1) * dfact(s[1] - 1) * dfact(s[2] - 1) / dfact(2 * l - 1)


def cart_to_spherical(l: int) -> np.ndarray:
    """Matrix (ncart, 2l+1) mapping unit-normalized Cartesian functions to
    unit-normalized real spherical functions."""
    if l < 2:
        return np.eye(ncart(l))
    comps = cart_components(l)
    index = {c: i for i, c in enumerate(comps)}
    out = np.zeros((ncart(l), 2 * l + 1))
    for m, poly in enumerate(_SOLID[l]):
        norm = 0.0
        for c1, s1 in poly.items():
            for c2, s2 in poly.items():
                norm += s1 * s2 * _monomial_overlap(l, c1, c2)
        for c, s in poly.items():
            out[index[c], m] = s / _cart_factor(l, c) / math.sqrt(norm)
    return out


@dataclass
class MolecularBasis:
    """Flat shell arrays for one molecule plus the Cartesian-to-working-basis map."""

    name: str
    shell_l: np.ndarray
    shell_atom: np.ndarray
    shell_center: np.ndarray
    shell_pstart: np.ndarray
    shell_nprim: np.ndarray
    shell_ao: np.ndarray  # Cartesian offsets
    prim_exp: np.ndarray
    prim_coef: np.ndarray
    ao_atom: np.ndarray  # Cartesian AO -> atom
    transform: np.ndarray  # (ncart, nbf)
    spherical: bool

    @property
    def nshell(self) -> int:
        return len(self.shell_l)

    @property
    def ncart(self) -> int:
        return self.transform.shape[0]

    @property
    def nbf(self) -> int:
        return self.transform.shape[1]


def build_basis(mol, basis: BasisSet, spherical: bool = True) -> MolecularBasis:
    sl, sa, sc, sp, sn, so = [], [], [], [], [], []
    exps, coefs, ao_atom = [], [], []
    blocks = []
    nao = 0
    for iatom, atom in enumerate(mol.atoms):
        for sh in basis.for_element(atom.symbol):
            sl.append(sh.l)
            sa.append(iatom)
            sc.append(atom.position)
            sp.append(len(exps))
            sn.append(len(sh.exponents))
            so.append(nao)
            exps.extend(sh.exponents)
            coefs.extend(sh.normalized_coefficients())
            ao_atom.extend([iatom] * sh.ncart)
            nao += sh.ncart
            blocks.append(cart_to_spherical(sh.l) if spherical else np.eye(sh.ncart))
    nbf = sum(b.shape[1] for b in blocks)
    T = np.zeros((nao, nbf))
    r = c = 0
    for b in blocks:
        T[r : r + b.shape[0], c : c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return MolecularBasis(
        name=basis.name,
        shell_l=np.array(sl, dtype=np.int64),
        shell_atom=np.array(sa, dtype=np.int64),
        shell_center=np.array(sc, dtype=float).reshape(-1, 3),
        shell_pstart=np.array(sp, dtype=np.int64),
        shell_nprim=np.array(sn, dtype=np.int64),
        shell_ao=np.array(so, dtype=np.int64),
        prim_exp=np.array(exps, dtype=float),
        prim_coef=np.array(coefs, dtype=float),
        ao_atom=np.array(ao_atom, dtype=np.int64),
        transform=T,
        spherical=spherical,
    )


def relocate_basis(mb: MolecularBasis, coords) -> MolecularBasis:
    """The same basis with shells moved onto new nuclear coordinates."""
    centers = np.asarray(coords, dtype=float)[mb.shell_atom]
    return replace(mb, shell_center=np.ascontiguousarray(centers))
