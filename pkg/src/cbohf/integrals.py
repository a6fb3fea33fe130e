"""One- and two-electron integrals and their nuclear derivatives."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .basis import BasisSet, MolecularBasis, build_basis, load_basis, relocate_basis

SCHWARZ_THRESHOLD = 1e-12
ERI_MEMORY_CAP = 2.0e9  # bytes for the pair-packed ERI matrix
LINDEP_THRESHOLD = 1e-8

# order of the second-moment components
QUAD_INDEX = {(0, 0): 0, (0, 1): 1, (0, 2): 2, (1, 1): 3, (1, 2): 4, (2, 2): 5}


def quad_component(p: int, q: int) -> int:
    return QUAD_INDEX[(min(p, q), max(p, q))]


def _kernel_args(mb: MolecularBasis):
    return (mb.shell_l, mb.shell_center, mb.shell_pstart, mb.shell_nprim, mb.prim_exp, mb.prim_coef)


@dataclass
class PairERI:
    """Electron repulsion integrals stored over significant AO pairs i >= j
    (Cartesian AOs); G[P, Q] = (ij|kl)."""

    G: np.ndarray
    pair_i: np.ndarray
    pair_j: np.ndarray
    shell_pairs: tuple  # (pair_a, pair_b, Q) arrays of significant shell pairs

    def jk(self, Dc: np.ndarray):
        J = np.zeros_like(Dc)
        Kx = np.zeros_like(Dc)
        K.jk_packed(self.G, self.pair_i, self.pair_j, np.ascontiguousarray(Dc), J, Kx)
        return J, Kx

    def dense(self, M: int) -> np.ndarray:
        out = np.zeros((M, M, M, M))
        for P, (i, j) in enumerate(zip(self.pair_i, self.pair_j)):
            row = self.G[P]
            for Q, (k, l) in enumerate(zip(self.pair_i, self.pair_j)):
                v = row[Q]
                out[i, j, k, l] = out[j, i, k, l] = out[i, j, l, k] = out[j, i, l, k] = v
        return out


@dataclass
class IntegralStore:
    """Integrals in the working AO basis (spherical or Cartesian).

    ``dip[p]`` holds <a|r_p|b> and ``quad[c]`` holds <a|r_p r_q|b> (component
    order xx xy xz yy yz zz), both about ``origin``.
    """

    basis: MolecularBasis
    origin: np.ndarray
    S: np.ndarray
    T: np.ndarray
    V: np.ndarray
    dip: np.ndarray
    quad: np.ndarray
    eri: PairERI | None = None
    min_overlap_eig: float = field(default=np.nan)

    @property
    def nbf(self) -> int:
        return self.S.shape[0]

    @property
    def hcore(self) -> np.ndarray:
        return self.T + self.V

    def to_cart(self, D: np.ndarray) -> np.ndarray:
        X = self.basis.transform
        return X @ D @ X.T

    def from_cart(self, A: np.ndarray) -> np.ndarray:
        X = self.basis.transform
        return X.T @ A @ X

    def jk(self, D: np.ndarray):
        if self.eri is None:
            raise RuntimeError("two-electron integrals were not computed")
        J, Kx = self.eri.jk(self.to_cart(D))
        return self.from_cart(J), self.from_cart(Kx)

    def eri_dense(self) -> np.ndarray:
        """Full ERI tensor in the working basis; intended for small tests."""
        if self.eri is None:
            raise RuntimeError("two-electron integrals were not computed")
        X = self.basis.transform
        g = self.eri.dense(X.shape[0])
        return np.einsum("ijkl,ia,jb,kc,ld->abcd", g, X, X, X, X, optimize=True)

    def lam_dipole(self, lam) -> np.ndarray:
        """<a|lam.r|b>."""
        return np.einsum("p,pij->ij", np.asarray(lam, float), self.dip)

    def lam_quad(self, lam) -> np.ndarray:
        """<a|(lam.r)^2|b>."""
        lam = np.asarray(lam, float)
        out = np.zeros_like(self.S)
        for p in range(3):
            for q in range(3):
                if lam[p] and lam[q]:
                    out += lam[p] * lam[q] * self.quad[quad_component(p, q)]
        return out


def _nuclear_arrays(mol):
    return np.asarray(mol.charges, dtype=float), np.ascontiguousarray(mol.coords, dtype=float)


def _run_one_electron(mol, mb: MolecularBasis, origin, deriv: bool):
    Z, R = _nuclear_arrays(mol)
    Mc = mb.ncart
    nat = len(Z)
    out = np.zeros((K.N_ONE_E, Mc, Mc))
    vout = np.zeros((Mc, Mc))
    if deriv:
        d_out = np.zeros((nat, 3, K.N_ONE_E, Mc, Mc))
        d_vb = np.zeros((nat, 3, Mc, Mc))
        d_vh = np.zeros((nat, 3, Mc, Mc))
    else:
        d_out = np.zeros((1, 3, K.N_ONE_E, 1, 1))
        d_vb = np.zeros((1, 3, 1, 1))
        d_vh = np.zeros((1, 3, 1, 1))
    K.one_electron(
        mb.shell_l, mb.shell_atom, mb.shell_center, mb.shell_pstart, mb.shell_nprim, mb.shell_ao,
        mb.prim_exp, mb.prim_coef, Z, R, np.asarray(origin, dtype=float), deriv,
        out, vout, d_out, d_vb, d_vh,
    )
    return out, vout, d_out, d_vb, d_vh


def _resolve_basis(mol, basis, spherical):
    if isinstance(basis, MolecularBasis):
        # follow the molecule if it moved since the basis was built
        if basis.nshell and not np.array_equal(basis.shell_center, mol.coords[basis.shell_atom]):
            return relocate_basis(basis, mol.coords)
        return basis
    if isinstance(basis, str):
        basis = load_basis(basis)
    if isinstance(basis, BasisSet):
        return build_basis(mol, basis, spherical=spherical)
    raise TypeError("basis must be a name, BasisSet or MolecularBasis")


def compute_one_electron(mol, basis, origin=(0.0, 0.0, 0.0), spherical=True,
                         lindep_threshold=LINDEP_THRESHOLD) -> IntegralStore:
    """S, T, V, dipole and second-moment matrices in the working basis."""
    mb = _resolve_basis(mol, basis, spherical)
    origin = np.asarray(origin, dtype=float)
    out, vout, *_ = _run_one_electron(mol, mb, origin, False)
    X = mb.transform
    tr = lambda A: X.T @ A @ X  # noqa: E731
    store = IntegralStore(
        basis=mb,
        origin=origin,
        S=tr(out[0]),
        T=tr(out[1]),
        V=tr(vout),
        dip=np.array([tr(out[2 + p]) for p in range(3)]),
        quad=np.array([tr(out[5 + c]) for c in range(6)]),
    )
    emin = float(np.linalg.eigvalsh(store.S)[0])
    store.min_overlap_eig = emin
    if emin < lindep_threshold:
        warnings.warn(f"near-linear dependence in basis: smallest overlap eigenvalue {emin:.3e}", stacklevel=2)
    return store


def significant_shell_pairs(mb: MolecularBasis, thresh=SCHWARZ_THRESHOLD):
    """Shell pairs (a >= b) whose Schwarz bound can exceed ``thresh``."""
    pa, pb = np.tril_indices(mb.nshell)
    # order pairs by (a, b) with a >= b
    pa = pa.astype(np.int64)
    pb = pb.astype(np.int64)
    Q = K.schwarz_diagonal(mb.shell_l, mb.shell_center, mb.shell_pstart, mb.shell_nprim,
                           mb.prim_exp, mb.prim_coef, pa, pb)
    keep = Q * Q.max() >= thresh
    return pa[keep], pb[keep], Q[keep]


def compute_eri(mol, basis, spherical=True, thresh=SCHWARZ_THRESHOLD, memory_cap=ERI_MEMORY_CAP) -> PairERI:
    """Pair-packed ERIs over Schwarz-significant shell pairs."""
    mb = _resolve_basis(mol, basis, spherical)
    pa, pb, Q = significant_shell_pairs(mb, thresh)
    Mc = mb.ncart
    pidx = -np.ones((Mc, Mc), dtype=np.int64)
    pi, pj = [], []
    for sa, sb in zip(pa, pb):
        for ia in range(K.ncart(mb.shell_l[sa])):
            i = mb.shell_ao[sa] + ia
            for ib in range(K.ncart(mb.shell_l[sb])):
                j = mb.shell_ao[sb] + ib
                if i < j or pidx[i, j] >= 0:
                    continue
                pidx[i, j] = pidx[j, i] = len(pi)
                pi.append(i)
                pj.append(j)
    n = len(pi)
    need = 8.0 * n * n
    if need > memory_cap:
        raise MemoryError(f"ERI storage needs {need / 1e9:.2f} GB, above the cap of {memory_cap / 1e9:.2f} GB")
    G = np.zeros((n, n))
    K.eri_packed(mb.shell_l, mb.shell_center, mb.shell_pstart, mb.shell_nprim, mb.shell_ao,
                 mb.prim_exp, mb.prim_coef, pa, pb, Q, thresh, pidx, G)
    return PairERI(G, np.array(pi, dtype=np.int64), np.array(pj, dtype=np.int64), (pa, pb, Q))


def compute_integrals(mol, basis, origin=(0.0, 0.0, 0.0), spherical=True,
                      thresh=SCHWARZ_THRESHOLD, memory_cap=ERI_MEMORY_CAP) -> IntegralStore:
    mb = _resolve_basis(mol, basis, spherical)
    store = compute_one_electron(mol, mb, origin)
    store.eri = compute_eri(mol, mb, thresh=thresh, memory_cap=memory_cap)
    return store


@dataclass
class DerivativeIntegrals:
    """Nuclear derivatives [atom, xyz, a, b] in the working basis.

    ``dV`` is the full derivative; ``dV_hf`` the operator-center part and
    ``dV_basis`` the basis-function part, ``dV = dV_basis + dV_hf``.
    """

    dS: np.ndarray
    dT: np.ndarray
    dV: np.ndarray
    dV_basis: np.ndarray
    dV_hf: np.ndarray
    ddip: np.ndarray  # [atom, xyz, p, a, b]
    dquad: np.ndarray  # [atom, xyz, c, a, b]
    deri: np.ndarray | None = None  # [atom, xyz, a, b, c, d]


def all_derivative_integrals(mol, basis, origin=(0.0, 0.0, 0.0), spherical=True, with_eri=False,
                             cartesian=False) -> DerivativeIntegrals:
    """Derivative batches for every atom. With ``cartesian`` the arrays stay
    in the Cartesian AO basis (used by the gradient contractions)."""
    mb = _resolve_basis(mol, basis, spherical)
    _, _, d_out, d_vb, d_vh = _run_one_electron(mol, mb, np.asarray(origin, float), True)
    X = mb.transform
    if cartesian:
        tr = lambda A: A  # noqa: E731
    else:
        tr = lambda A: np.einsum("ia,...ij,jb->...ab", X, A, X, optimize=True)  # noqa: E731
    deri = None
    if with_eri:
        g = K.eri_deriv_dense(mb.shell_l, mb.shell_atom, mb.shell_center, mb.shell_pstart, mb.shell_nprim,
                              mb.shell_ao, mb.prim_exp, mb.prim_coef, mol.natom, mb.ncart)
        if not cartesian:
            g = np.einsum("xyijkl,ia,jb,kc,ld->xyabcd", g, X, X, X, X, optimize=True)
        deri = g
    dvb = tr(d_vb)
    dvh = tr(d_vh)
    return DerivativeIntegrals(
        dS=tr(d_out[:, :, 0]),
        dT=tr(d_out[:, :, 1]),
        dV=dvb + dvh,
        dV_basis=dvb,
        dV_hf=dvh,
        ddip=tr(d_out[:, :, 2:5]),
        dquad=tr(d_out[:, :, 5:11]),
        deri=deri,
    )


def compute_derivative_integrals(mol, basis, atom: int, origin=(0.0, 0.0, 0.0), spherical=True,
                                 with_eri=True) -> DerivativeIntegrals:
    """Derivatives with respect to the Cartesian coordinates of one atom;
    arrays are indexed [xyz, ...]."""
    if not 0 <= atom < mol.natom:
        raise IndexError(f"atom index {atom} out of range for {mol.natom} atoms")
    d = all_derivative_integrals(mol, basis, origin, spherical, with_eri=with_eri)
    return DerivativeIntegrals(
        dS=d.dS[atom], dT=d.dT[atom], dV=d.dV[atom], dV_basis=d.dV_basis[atom], dV_hf=d.dV_hf[atom],
        ddip=d.ddip[atom], dquad=d.dquad[atom], deri=None if d.deri is None else d.deri[atom],
    )


def eri_gradient(mol, mb: MolecularBasis, Dc: np.ndarray, pair_eri: PairERI | None = None,
                 thresh=SCHWARZ_THRESHOLD) -> np.ndarray:
    """sum_ijkl d(ij|kl)/dR Gamma_ijkl for a Cartesian-basis density."""
    if pair_eri is not None:
        pa, pb, Q = pair_eri.shell_pairs
    else:
        pa, pb, Q = significant_shell_pairs(mb, thresh)
    return K.eri_gradient(mb.shell_l, mb.shell_atom, mb.shell_center, mb.shell_pstart, mb.shell_nprim,
                          mb.shell_ao, mb.prim_exp, mb.prim_coef, pa, pb, Q, thresh,
                          np.ascontiguousarray(Dc), mol.natom)
