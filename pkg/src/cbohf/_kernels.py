"""Numba kernels for McMurchie-Davidson integrals over Cartesian Gaussians.

All shell blocks are produced for unit-normalized axis components; the
per-component factor ``CART_NORM`` is applied when scattering into AO arrays.
"""

import math

import numpy as np
from numba import njit

LTAB = 6
_TWO_PI_52 = 2.0 * math.pi**2.5


def _cart_tables():
    off = np.zeros(LTAB + 2, dtype=np.int64)
    comps = []
    norms = []
    for l in range(LTAB + 1):
        off[l] = len(comps)
        for lx in range(l, -1, -1):
            for ly in range(l - lx, -1, -1):
                lz = l - lx - ly
                comps.append((lx, ly, lz))
                df = lambda n: 1 if n <= 1 else n * df(n - 2)  # noqa: E731
                norms.append(math.sqrt(df(2 * l - 1) / (df(2 * lx - 1) * df(2 * ly - 1) * df(2 * lz - 1))))
    off[LTAB + 1] = len(comps)
    return off, np.array(comps, dtype=np.int64), np.array(norms)


CART_OFF, CART_XYZ, CART_NORM = _cart_tables()

# 3D one-electron operators as products of 1D factors (0=S, 1=kinetic, 2=x, 3=x^2)
# rows: output index, factor x, factor y, factor z
# outputs: 0 S, 1 T, 2-4 dipole xyz, 5-10 second moments xx xy xz yy yz zz
ONE_E_TERMS = np.array(
    [
        [0, 0, 0, 0],
        [1, 1, 0, 0],
        [1, 0, 1, 0],
        [1, 0, 0, 1],
        [2, 2, 0, 0],
        [3, 0, 2, 0],
        [4, 0, 0, 2],
        [5, 3, 0, 0],
        [6, 2, 2, 0],
        [7, 2, 0, 2],
        [8, 0, 3, 0],
        [9, 0, 2, 2],
        [10, 0, 0, 3],
    ],
    dtype=np.int64,
)
N_ONE_E = 11


@njit(cache=True)
def ncart(l):
    return (l + 1) * (l + 2) // 2


@njit(cache=True)
def comp_index(lx, ly, lz):
    m = ly + lz
    return m * (m + 1) // 2 + lz


@njit(cache=True)
def boys(nmax, T, out):
    """F_n(T) for n = 0..nmax, series below T = 30 and asymptotic above."""
    if T < 30.0:
        e = math.exp(-T)
        denom = 2.0 * nmax + 1.0
        term = 1.0 / denom
        s = term
        for _ in range(400):
            denom += 2.0
            term *= 2.0 * T / denom
            s += term
            if term < 1e-17 * s:
                break
        out[nmax] = e * s
        for n in range(nmax - 1, -1, -1):
            out[n] = (2.0 * T * out[n + 1] + e) / (2.0 * n + 1.0)
    else:
        e = math.exp(-T)
        out[0] = 0.5 * math.sqrt(math.pi / T)
        for n in range(nmax):
            out[n + 1] = ((2.0 * n + 1.0) * out[n] - e) / (2.0 * T)


@njit(cache=True)
def hermite_1d(imax, jmax, a, b, xab, E):
    """Hermite expansion coefficients E[i, j, t] of a 1D Gaussian product."""
    p = a + b
    oo2p = 0.5 / p
    xpa = -b / p * xab
    xpb = a / p * xab
    for i in range(imax + 1):
        for j in range(jmax + 1):
            for t in range(i + j + 1):
                E[i, j, t] = 0.0
    E[0, 0, 0] = math.exp(-a * b / p * xab * xab)
    for i in range(1, imax + 1):
        for t in range(i + 1):
            v = 0.0
            if t >= 1:
                v += oo2p * E[i - 1, 0, t - 1]
            if t <= i - 1:
                v += xpa * E[i - 1, 0, t]
            if t + 1 <= i - 1:
                v += (t + 1) * E[i - 1, 0, t + 1]
            E[i, 0, t] = v
    for j in range(1, jmax + 1):
        for i in range(imax + 1):
            top = i + j - 1
            for t in range(i + j + 1):
                v = 0.0
                if t >= 1:
                    v += oo2p * E[i, j - 1, t - 1]
                if t <= top:
                    v += xpb * E[i, j - 1, t]
                if t + 1 <= top:
                    v += (t + 1) * E[i, j - 1, t + 1]
                E[i, j, t] = v


@njit(cache=True)
def r_tensor(L, alpha, X, Y, Z, F, Rn):
    """Hermite Coulomb integrals; result in Rn[0, t, u, v] for t+u+v <= L."""
    boys(L, alpha * (X * X + Y * Y + Z * Z), F)
    f = 1.0
    for n in range(L + 1):
        Rn[n, 0, 0, 0] = f * F[n]
        f *= -2.0 * alpha
    for n in range(L - 1, -1, -1):
        top = L - n
        for t in range(top + 1):
            for u in range(top - t + 1):
                for v in range(top - t - u + 1):
                    if t > 0:
                        val = X * Rn[n + 1, t - 1, u, v]
                        if t > 1:
                            val += (t - 1) * Rn[n + 1, t - 2, u, v]
                    elif u > 0:
                        val = Y * Rn[n + 1, t, u - 1, v]
                        if u > 1:
                            val += (u - 1) * Rn[n + 1, t, u - 2, v]
                    elif v > 0:
                        val = Z * Rn[n + 1, t, u, v - 1]
                        if v > 1:
                            val += (v - 1) * Rn[n + 1, t, u, v - 2]
                    else:
                        continue
                    Rn[n, t, u, v] = val


# ---------------------------------------------------------------------------
# one-electron integrals


@njit(cache=True)
def _vprim(ax, ay, az, bx, by, bz, Ex, Ey, Ez, R):
    s = 0.0
    for t in range(ax + bx + 1):
        et = Ex[ax, bx, t]
        for u in range(ay + by + 1):
            eu = et * Ey[ay, by, u]
            for v in range(az + bz + 1):
                s += eu * Ez[az, bz, v] * R[t, u, v]
    return s


@njit(cache=True)
def one_electron(
    shell_l, shell_atom, shell_center, shell_pstart, shell_nprim, shell_ao,
    prim_exp, prim_coef, nuc_charge, nuc_pos, origin, deriv,
    OUT, VOUT, dOUT, dVb, dVh,
):
    """Overlap, kinetic, dipole, second moments (OUT[11]) and nuclear
    attraction (VOUT); with ``deriv`` also their nuclear derivatives.

    dOUT[atom, xyz, op] and dVb hold basis-center derivatives, dVh the
    operator-center (Hellmann-Feynman) part of dV.
    """
    nsh = shell_l.shape[0]
    nat = nuc_charge.shape[0]
    LP = LTAB + 4
    Ex = np.zeros((LP, LP, 2 * LP))
    Ey = np.zeros((LP, LP, 2 * LP))
    Ez = np.zeros((LP, LP, 2 * LP))
    S1 = np.zeros((3, LP, LP))
    F1 = np.zeros((3, 4, LP, LP))
    Fb = np.zeros(2 * LP)
    Rn = np.zeros((2 * LP, 2 * LP, 2 * LP, 2 * LP))
    fx = np.zeros(4)
    fy = np.zeros(4)
    fz = np.zeros(4)
    d1 = np.zeros((3, 4))
    for sa in range(nsh):
        la = shell_l[sa]
        na = ncart(la)
        oa = CART_OFF[la]
        A = shell_center[sa]
        for sb in range(sa + 1):
            lb = shell_l[sb]
            nb = ncart(lb)
            ob = CART_OFF[lb]
            B = shell_center[sb]
            vals = np.zeros((N_ONE_E, na, nb))
            vv = np.zeros((na, nb))
            dvals = np.zeros((2, 3, N_ONE_E, na, nb))
            dvv = np.zeros((2, 3, na, nb))
            hf = np.zeros((nat, 3, na, nb))
            imax = la + 1
            jmax = lb + 3
            LV = la + lb + 1 if deriv else la + lb
            for pa in range(shell_pstart[sa], shell_pstart[sa] + shell_nprim[sa]):
                a = prim_exp[pa]
                for pb in range(shell_pstart[sb], shell_pstart[sb] + shell_nprim[sb]):
                    b = prim_exp[pb]
                    cc = prim_coef[pa] * prim_coef[pb]
                    p = a + b
                    hermite_1d(imax, jmax, a, b, A[0] - B[0], Ex)
                    hermite_1d(imax, jmax, a, b, A[1] - B[1], Ey)
                    hermite_1d(imax, jmax, a, b, A[2] - B[2], Ez)
                    sq = math.sqrt(math.pi / p)
                    for i in range(imax + 1):
                        for j in range(jmax + 1):
                            S1[0, i, j] = Ex[i, j, 0] * sq
                            S1[1, i, j] = Ey[i, j, 0] * sq
                            S1[2, i, j] = Ez[i, j, 0] * sq
                    for d in range(3):
                        xbo = B[d] - origin[d]
                        for i in range(imax + 1):
                            for j in range(lb + 2):
                                F1[d, 0, i, j] = S1[d, i, j]
                                k = 4.0 * b * b * S1[d, i, j + 2] - 2.0 * b * (2 * j + 1) * S1[d, i, j]
                                if j >= 2:
                                    k += j * (j - 1) * S1[d, i, j - 2]
                                F1[d, 1, i, j] = -0.5 * k
                                F1[d, 2, i, j] = S1[d, i, j + 1] + xbo * S1[d, i, j]
                                F1[d, 3, i, j] = S1[d, i, j + 2] + 2.0 * xbo * S1[d, i, j + 1] + xbo * xbo * S1[d, i, j]
                    for ia in range(na):
                        ax = CART_XYZ[oa + ia, 0]
                        ay = CART_XYZ[oa + ia, 1]
                        az = CART_XYZ[oa + ia, 2]
                        for ib in range(nb):
                            bx = CART_XYZ[ob + ib, 0]
                            by = CART_XYZ[ob + ib, 1]
                            bz = CART_XYZ[ob + ib, 2]
                            for op in range(4):
                                fx[op] = F1[0, op, ax, bx]
                                fy[op] = F1[1, op, ay, by]
                                fz[op] = F1[2, op, az, bz]
                            for r in range(ONE_E_TERMS.shape[0]):
                                o = ONE_E_TERMS[r, 0]
                                vals[o, ia, ib] += cc * fx[ONE_E_TERMS[r, 1]] * fy[ONE_E_TERMS[r, 2]] * fz[ONE_E_TERMS[r, 3]]
                            if deriv:
                                for c in range(2):
                                    for op in range(4):
                                        if c == 0:
                                            d1[0, op] = 2 * a * F1[0, op, ax + 1, bx]
                                            d1[1, op] = 2 * a * F1[1, op, ay + 1, by]
                                            d1[2, op] = 2 * a * F1[2, op, az + 1, bz]
                                            if ax > 0:
                                                d1[0, op] -= ax * F1[0, op, ax - 1, bx]
                                            if ay > 0:
                                                d1[1, op] -= ay * F1[1, op, ay - 1, by]
                                            if az > 0:
                                                d1[2, op] -= az * F1[2, op, az - 1, bz]
                                        else:
                                            d1[0, op] = 2 * b * F1[0, op, ax, bx + 1]
                                            d1[1, op] = 2 * b * F1[1, op, ay, by + 1]
                                            d1[2, op] = 2 * b * F1[2, op, az, bz + 1]
                                            if bx > 0:
                                                d1[0, op] -= bx * F1[0, op, ax, bx - 1]
                                            if by > 0:
                                                d1[1, op] -= by * F1[1, op, ay, by - 1]
                                            if bz > 0:
                                                d1[2, op] -= bz * F1[2, op, az, bz - 1]
                                    for r in range(ONE_E_TERMS.shape[0]):
                                        o = ONE_E_TERMS[r, 0]
                                        ox = ONE_E_TERMS[r, 1]
                                        oy = ONE_E_TERMS[r, 2]
                                        oz = ONE_E_TERMS[r, 3]
                                        dvals[c, 0, o, ia, ib] += cc * d1[0, ox] * fy[oy] * fz[oz]
                                        dvals[c, 1, o, ia, ib] += cc * fx[ox] * d1[1, oy] * fz[oz]
                                        dvals[c, 2, o, ia, ib] += cc * fx[ox] * fy[oy] * d1[2, oz]
                    # nuclear attraction
                    P0 = (a * A[0] + b * B[0]) / p
                    P1 = (a * A[1] + b * B[1]) / p
                    P2 = (a * A[2] + b * B[2]) / p
                    for C in range(nat):
                        r_tensor(LV, p, P0 - nuc_pos[C, 0], P1 - nuc_pos[C, 1], P2 - nuc_pos[C, 2], Fb, Rn)
                        R = Rn[0]
                        pref = -nuc_charge[C] * 2.0 * math.pi / p * cc
                        for ia in range(na):
                            ax = CART_XYZ[oa + ia, 0]
                            ay = CART_XYZ[oa + ia, 1]
                            az = CART_XYZ[oa + ia, 2]
                            for ib in range(nb):
                                bx = CART_XYZ[ob + ib, 0]
                                by = CART_XYZ[ob + ib, 1]
                                bz = CART_XYZ[ob + ib, 2]
                                vv[ia, ib] += pref * _vprim(ax, ay, az, bx, by, bz, Ex, Ey, Ez, R)
                                if deriv:
                                    ga0 = 2 * a * _vprim(ax + 1, ay, az, bx, by, bz, Ex, Ey, Ez, R)
                                    ga1 = 2 * a * _vprim(ax, ay + 1, az, bx, by, bz, Ex, Ey, Ez, R)
                                    ga2 = 2 * a * _vprim(ax, ay, az + 1, bx, by, bz, Ex, Ey, Ez, R)
                                    if ax > 0:
                                        ga0 -= ax * _vprim(ax - 1, ay, az, bx, by, bz, Ex, Ey, Ez, R)
                                    if ay > 0:
                                        ga1 -= ay * _vprim(ax, ay - 1, az, bx, by, bz, Ex, Ey, Ez, R)
                                    if az > 0:
                                        ga2 -= az * _vprim(ax, ay, az - 1, bx, by, bz, Ex, Ey, Ez, R)
                                    gb0 = 2 * b * _vprim(ax, ay, az, bx + 1, by, bz, Ex, Ey, Ez, R)
                                    gb1 = 2 * b * _vprim(ax, ay, az, bx, by + 1, bz, Ex, Ey, Ez, R)
                                    gb2 = 2 * b * _vprim(ax, ay, az, bx, by, bz + 1, Ex, Ey, Ez, R)
                                    if bx > 0:
                                        gb0 -= bx * _vprim(ax, ay, az, bx - 1, by, bz, Ex, Ey, Ez, R)
                                    if by > 0:
                                        gb1 -= by * _vprim(ax, ay, az, bx, by - 1, bz, Ex, Ey, Ez, R)
                                    if bz > 0:
                                        gb2 -= bz * _vprim(ax, ay, az, bx, by, bz - 1, Ex, Ey, Ez, R)
                                    dvv[0, 0, ia, ib] += pref * ga0
                                    dvv[0, 1, ia, ib] += pref * ga1
                                    dvv[0, 2, ia, ib] += pref * ga2
                                    dvv[1, 0, ia, ib] += pref * gb0
                                    dvv[1, 1, ia, ib] += pref * gb1
                                    dvv[1, 2, ia, ib] += pref * gb2
                                    hf[C, 0, ia, ib] -= pref * (ga0 + gb0)
                                    hf[C, 1, ia, ib] -= pref * (ga1 + gb1)
                                    hf[C, 2, ia, ib] -= pref * (ga2 + gb2)
            # scatter
            ao_a = shell_ao[sa]
            ao_b = shell_ao[sb]
            atA = shell_atom[sa]
            atB = shell_atom[sb]
            for ia in range(na):
                i = ao_a + ia
                for ib in range(nb):
                    j = ao_b + ib
                    nrm = CART_NORM[oa + ia] * CART_NORM[ob + ib]
                    for o in range(N_ONE_E):
                        OUT[o, i, j] = vals[o, ia, ib] * nrm
                        OUT[o, j, i] = vals[o, ia, ib] * nrm
                    VOUT[i, j] = vv[ia, ib] * nrm
                    VOUT[j, i] = vv[ia, ib] * nrm
                    if deriv:
                        for d in range(3):
                            if sa == sb:
                                for o in range(N_ONE_E):
                                    dOUT[atA, d, o, i, j] += (dvals[0, d, o, ia, ib] + dvals[1, d, o, ia, ib]) * nrm
                                dVb[atA, d, i, j] += (dvv[0, d, ia, ib] + dvv[1, d, ia, ib]) * nrm
                                for C in range(nat):
                                    dVh[C, d, i, j] += hf[C, d, ia, ib] * nrm
                            else:
                                for o in range(N_ONE_E):
                                    x = dvals[0, d, o, ia, ib] * nrm
                                    dOUT[atA, d, o, i, j] += x
                                    dOUT[atA, d, o, j, i] += x
                                    x = dvals[1, d, o, ia, ib] * nrm
                                    dOUT[atB, d, o, i, j] += x
                                    dOUT[atB, d, o, j, i] += x
                                x = dvv[0, d, ia, ib] * nrm
                                dVb[atA, d, i, j] += x
                                dVb[atA, d, j, i] += x
                                x = dvv[1, d, ia, ib] * nrm
                                dVb[atB, d, i, j] += x
                                dVb[atB, d, j, i] += x
                                for C in range(nat):
                                    x = hf[C, d, ia, ib] * nrm
                                    dVh[C, d, i, j] += x
                                    dVh[C, d, j, i] += x


# ---------------------------------------------------------------------------
# two-electron integrals


@njit(cache=True)
def _pair_data(l1, l2, C1, C2, exps1, coefs1, exps2, coefs2, extra1, extra2):
    """Primitive-pair data for a shell pair: exponent sum, center, prefactor,
    Hermite tables with angular momenta raised by ``extra``."""
    n1 = exps1.shape[0]
    n2 = exps2.shape[0]
    npair = n1 * n2
    i1 = l1 + extra1
    i2 = l2 + extra2
    T = i1 + i2 + 1
    p_arr = np.zeros(npair)
    a_arr = np.zeros(npair)
    b_arr = np.zeros(npair)
    P_arr = np.zeros((npair, 3))
    c_arr = np.zeros(npair)
    E = np.zeros((npair, 3, i1 + 1, i2 + 1, T))
    k = 0
    for x in range(n1):
        a = exps1[x]
        for y in range(n2):
            b = exps2[y]
            p = a + b
            p_arr[k] = p
            a_arr[k] = a
            b_arr[k] = b
            for d in range(3):
                P_arr[k, d] = (a * C1[d] + b * C2[d]) / p
                hermite_1d(i1, i2, a, b, C1[d] - C2[d], E[k, d])
            c_arr[k] = coefs1[x] * coefs2[y]
            k += 1
    return p_arr, a_arr, b_arr, P_arr, c_arr, E


@njit(cache=True)
def _half_transform_ket(lc, ld, Fk, Lb, R, Y, ket_comps_c, ket_comps_d):
    """Y[t,u,v,cd] = sum_tau (-1)^(tau+nu+phi) E^cd R[t+tau, u+nu, v+phi]."""
    ncd = ket_comps_c.shape[0] * ket_comps_d.shape[0]
    for t in range(Lb + 1):
        for u in range(Lb + 1 - t):
            for v in range(Lb + 1 - t - u):
                for cd in range(ncd):
                    Y[t, u, v, cd] = 0.0
    nd = ket_comps_d.shape[0]
    for ic in range(ket_comps_c.shape[0]):
        cx = ket_comps_c[ic, 0]
        cy = ket_comps_c[ic, 1]
        cz = ket_comps_c[ic, 2]
        for idd in range(nd):
            dx = ket_comps_d[idd, 0]
            dy = ket_comps_d[idd, 1]
            dz = ket_comps_d[idd, 2]
            cd = ic * nd + idd
            for tau in range(cx + dx + 1):
                ex = Fk[0, cx, dx, tau]
                if tau % 2 == 1:
                    ex = -ex
                for nu in range(cy + dy + 1):
                    ey = Fk[1, cy, dy, nu]
                    if nu % 2 == 1:
                        ey = -ey
                    exy = ex * ey
                    for phi in range(cz + dz + 1):
                        ez = Fk[2, cz, dz, phi]
                        if phi % 2 == 1:
                            ez = -ez
                        coef = exy * ez
                        if coef == 0.0:
                            continue
                        for t in range(Lb + 1):
                            for u in range(Lb + 1 - t):
                                for v in range(Lb + 1 - t - u):
                                    Y[t, u, v, cd] += coef * R[t + tau, u + nu, v + phi]


@njit(cache=True)
def _bra_contract(comps_a, comps_b, Eb, Y, ncd, scale, out):
    """out[ab, cd] += scale * sum_tuv E^ab_tuv Y[t,u,v,cd]."""
    nb = comps_b.shape[0]
    for ia in range(comps_a.shape[0]):
        ax = comps_a[ia, 0]
        ay = comps_a[ia, 1]
        az = comps_a[ia, 2]
        for ib in range(nb):
            bx = comps_b[ib, 0]
            by = comps_b[ib, 1]
            bz = comps_b[ib, 2]
            ab = ia * nb + ib
            for t in range(ax + bx + 1):
                et = Eb[0, ax, bx, t]
                for u in range(ay + by + 1):
                    eu = et * Eb[1, ay, by, u]
                    for v in range(az + bz + 1):
                        e = scale * eu * Eb[2, az, bz, v]
                        if e == 0.0:
                            continue
                        for cd in range(ncd):
                            out[ab, cd] += e * Y[t, u, v, cd]


@njit(cache=True)
def _comps(l):
    if l < 0:
        return np.zeros((0, 3), dtype=np.int64)
    return CART_XYZ[CART_OFF[l] : CART_OFF[l] + ncart(l)]


@njit(cache=True)
def eri_quartet(la, lb, lc, ld, A, B, C, D, ea, ca, eb, cb, ec, cc, ed, cdd):
    """Contracted (ab|cd) block of shape (na*nb, nc*nd), axis-normalized."""
    pb, _, _, Pb, cbra, Eb = _pair_data(la, lb, A, B, ea, ca, eb, cb, 0, 0)
    pk, _, _, Pk, cket, Ek = _pair_data(lc, ld, C, D, ec, cc, ed, cdd, 0, 0)
    Lb = la + lb
    L = Lb + lc + ld
    na = ncart(la)
    nb = ncart(lb)
    ncd = ncart(lc) * ncart(ld)
    out = np.zeros((na * nb, ncd))
    Fb = np.zeros(L + 1)
    Rn = np.zeros((L + 1, L + 1, L + 1, L + 1))
    Y = np.zeros((Lb + 1, Lb + 1, Lb + 1, ncd))
    compa = _comps(la)
    compb = _comps(lb)
    compc = _comps(lc)
    compd = _comps(ld)
    for x in range(pb.shape[0]):
        p = pb[x]
        for y in range(pk.shape[0]):
            q = pk[y]
            alpha = p * q / (p + q)
            r_tensor(L, alpha, Pb[x, 0] - Pk[y, 0], Pb[x, 1] - Pk[y, 1], Pb[x, 2] - Pk[y, 2], Fb, Rn)
            pref = _TWO_PI_52 / (p * q * math.sqrt(p + q)) * cbra[x] * cket[y]
            _half_transform_ket(lc, ld, Ek[y], Lb, Rn[0], Y, compc, compd)
            _bra_contract(compa, compb, Eb[x], Y, ncd, pref, out)
    return out


@njit(cache=True)
def eri_deriv_quartet(la, lb, lc, ld, A, B, C, D, ea, ca, eb, cb, ec, cc, ed, cdd):
    """Derivatives of the (ab|cd) block with respect to centers A, B, C.

    Returns array (3, 3, na*nb, nc*nd): [center, xyz, ab, cd]; the D-center
    derivative follows from translational invariance.
    """
    pb, ab_a, ab_b, Pb, cbra, Eb = _pair_data(la, lb, A, B, ea, ca, eb, cb, 1, 1)
    pk, ck_c, ck_d, Pk, cket, Ek = _pair_data(lc, ld, C, D, ec, cc, ed, cdd, 1, 0)
    Lb = la + lb + 1
    L = la + lb + lc + ld + 1
    na = ncart(la)
    nb = ncart(lb)
    nc = ncart(lc)
    nd = ncart(ld)
    ncd = nc * nd
    compa = _comps(la)
    compb = _comps(lb)
    compc = _comps(lc)
    compd = _comps(ld)
    compa_p = _comps(la + 1)
    compa_m = _comps(la - 1)
    compb_p = _comps(lb + 1)
    compb_m = _comps(lb - 1)
    compc_p = _comps(lc + 1)
    compc_m = _comps(lc - 1)
    IAp = np.zeros((compa_p.shape[0] * nb, ncd))
    IAm = np.zeros((compa_m.shape[0] * nb, ncd))
    IBp = np.zeros((na * compb_p.shape[0], ncd))
    IBm = np.zeros((na * compb_m.shape[0], ncd))
    ICp = np.zeros((na * nb, compc_p.shape[0] * nd))
    ICm = np.zeros((na * nb, compc_m.shape[0] * nd))
    Fb = np.zeros(L + 1)
    Rn = np.zeros((L + 1, L + 1, L + 1, L + 1))
    Y = np.zeros((Lb + 1, Lb + 1, Lb + 1, ncd))
    Yp = np.zeros((la + lb + 1, la + lb + 1, la + lb + 1, compc_p.shape[0] * nd))
    Ym = np.zeros((la + lb + 1, la + lb + 1, la + lb + 1, max(compc_m.shape[0] * nd, 1)))
    for x in range(pb.shape[0]):
        p = pb[x]
        a = ab_a[x]
        b = ab_b[x]
        for y in range(pk.shape[0]):
            q = pk[y]
            c = ck_c[y]
            alpha = p * q / (p + q)
            r_tensor(L, alpha, Pb[x, 0] - Pk[y, 0], Pb[x, 1] - Pk[y, 1], Pb[x, 2] - Pk[y, 2], Fb, Rn)
            pref = _TWO_PI_52 / (p * q * math.sqrt(p + q)) * cbra[x] * cket[y]
            R = Rn[0]
            _half_transform_ket(lc, ld, Ek[y], Lb, R, Y, compc, compd)
            _bra_contract(compa_p, compb, Eb[x], Y, ncd, pref * 2.0 * a, IAp)
            _bra_contract(compa, compb_p, Eb[x], Y, ncd, pref * 2.0 * b, IBp)
            if la > 0:
                _bra_contract(compa_m, compb, Eb[x], Y, ncd, pref, IAm)
            if lb > 0:
                _bra_contract(compa, compb_m, Eb[x], Y, ncd, pref, IBm)
            _half_transform_ket(lc + 1, ld, Ek[y], la + lb, R, Yp, compc_p, compd)
            _bra_contract(compa, compb, Eb[x], Yp, compc_p.shape[0] * nd, pref * 2.0 * c, ICp)
            if lc > 0:
                _half_transform_ket(lc - 1, ld, Ek[y], la + lb, R, Ym, compc_m, compd)
                _bra_contract(compa, compb, Eb[x], Ym, compc_m.shape[0] * nd, pref, ICm)
    out = np.zeros((3, 3, na * nb, ncd))
    for ia in range(na):
        axyz = compa[ia]
        for ib in range(nb):
            bxyz = compb[ib]
            ab = ia * nb + ib
            for d in range(3):
                # center A
                ax1 = axyz.copy()
                ax1[d] += 1
                rp = comp_index(ax1[0], ax1[1], ax1[2]) * nb + ib
                for cd in range(ncd):
                    out[0, d, ab, cd] = IAp[rp, cd]
                if axyz[d] > 0:
                    ax1[d] -= 2
                    rm = comp_index(ax1[0], ax1[1], ax1[2]) * nb + ib
                    for cd in range(ncd):
                        out[0, d, ab, cd] -= axyz[d] * IAm[rm, cd]
                # center B
                bx1 = bxyz.copy()
                bx1[d] += 1
                nbp = compb_p.shape[0]
                rp = ia * nbp + comp_index(bx1[0], bx1[1], bx1[2])
                for cd in range(ncd):
                    out[1, d, ab, cd] = IBp[rp, cd]
                if bxyz[d] > 0:
                    bx1[d] -= 2
                    nbm = compb_m.shape[0]
                    rm = ia * nbm + comp_index(bx1[0], bx1[1], bx1[2])
                    for cd in range(ncd):
                        out[1, d, ab, cd] -= bxyz[d] * IBm[rm, cd]
                # center C
                for ic in range(nc):
                    cxyz = compc[ic].copy()
                    cxyz[d] += 1
                    icp = comp_index(cxyz[0], cxyz[1], cxyz[2])
                    cxyz[d] -= 1
                    for idd in range(nd):
                        out[2, d, ab, ic * nd + idd] = ICp[ab, icp * nd + idd]
                    if cxyz[d] > 0:
                        cxyz[d] -= 1
                        icm = comp_index(cxyz[0], cxyz[1], cxyz[2])
                        cxyz[d] += 1
                        for idd in range(nd):
                            out[2, d, ab, ic * nd + idd] -= cxyz[d] * ICm[ab, icm * nd + idd]
    return out


@njit(cache=True)
def _quartet_args(s, shell_l, shell_center, shell_pstart, shell_nprim, prim_exp, prim_coef):
    p0 = shell_pstart[s]
    p1 = p0 + shell_nprim[s]
    return shell_l[s], shell_center[s], prim_exp[p0:p1], prim_coef[p0:p1]


@njit(cache=True)
def schwarz_diagonal(shell_l, shell_center, shell_pstart, shell_nprim, prim_exp, prim_coef, pair_a, pair_b):
    """sqrt(max |(ab|ab)|) for every listed shell pair."""
    npair = pair_a.shape[0]
    Q = np.zeros(npair)
    for k in range(npair):
        sa = pair_a[k]
        sb = pair_b[k]
        la, A, ea, ca = _quartet_args(sa, shell_l, shell_center, shell_pstart, shell_nprim, prim_exp, prim_coef)
        lb, B, eb, cb = _quartet_args(sb, shell_l, shell_center, shell_pstart, shell_nprim, prim_exp, prim_coef)
        blk = eri_quartet(la, lb, la, lb, A, B, A, B, ea, ca, eb, cb, ea, ca, eb, cb)
        na = ncart(la)
        nb = ncart(lb)
        m = 0.0
        for ia in range(na):
            for ib in range(nb):
                ab = ia * nb + ib
                nrm = CART_NORM[CART_OFF[la] + ia] * CART_NORM[CART_OFF[lb] + ib]
                v = abs(blk[ab, ab]) * nrm * nrm
                if v > m:
                    m = v
        Q[k] = math.sqrt(m)
    return Q


@njit(cache=True)
def eri_packed(shell_l, shell_center, shell_pstart, shell_nprim, shell_ao, prim_exp, prim_coef,
               pair_a, pair_b, Q, thresh, pidx, G):
    """Fill the pair-packed ERI matrix G[P, Q] over significant shell pairs."""
    npair = pair_a.shape[0]
    for k1 in range(npair):
        sa = pair_a[k1]
        sb = pair_b[k1]
        la, A, ea, ca = _quartet_args(sa, shell_l, shell_center, shell_pstart, shell_nprim, prim_exp, prim_coef)
        lb, B, eb, cb = _quartet_args(sb, shell_l, shell_center, shell_pstart, shell_nprim, prim_exp, prim_coef)
        na = ncart(la)
        nb = ncart(lb)
        for k2 in range(k1 + 1):
            if Q[k1] * Q[k2] < thresh:
                continue
            sc = pair_a[k2]
            sd = pair_b[k2]
            lc, C, ec, cc = _quartet_args(sc, shell_l, shell_center, shell_pstart, shell_nprim, prim_exp, prim_coef)
            ld, D, ed, cd = _quartet_args(sd, shell_l, shell_center, shell_pstart, shell_nprim, prim_exp, prim_coef)
            nc = ncart(lc)
            nd = ncart(ld)
            blk = eri_quartet(la, lb, lc, ld, A, B, C, D, ea, ca, eb, cb, ec, cc, ed, cd)
            for ia in range(na):
                i = shell_ao[sa] + ia
                for ib in range(nb):
                    j = shell_ao[sb] + ib
                    nab = CART_NORM[CART_OFF[la] + ia] * CART_NORM[CART_OFF[lb] + ib]
                    P = pidx[i, j]
                    for ic in range(nc):
                        kk = shell_ao[sc] + ic
                        for idd in range(nd):
                            ll = shell_ao[sd] + idd
                            ncd_ = CART_NORM[CART_OFF[lc] + ic] * CART_NORM[CART_OFF[ld] + idd]
                            Qx = pidx[kk, ll]
                            v = blk[ia * nb + ib, ic * nd + idd] * nab * ncd_
                            G[P, Qx] = v
                            G[Qx, P] = v


@njit(cache=True)
def jk_packed(G, pi, pj, D, J, K):
    """Coulomb and exchange matrices from pair-packed integrals."""
    n = G.shape[0]
    dp = np.zeros(n)
    for P in range(n):
        i = pi[P]
        j = pj[P]
        dp[P] = D[i, j] if i == j else 2.0 * D[i, j]
    jp = G @ dp
    for P in range(n):
        J[pi[P], pj[P]] = jp[P]
        J[pj[P], pi[P]] = jp[P]
    for P in range(n):
        i = pi[P]
        j = pj[P]
        for Qx in range(n):
            v = G[P, Qx]
            if v == 0.0:
                continue
            k = pi[Qx]
            l = pj[Qx]
            K[i, k] += v * D[j, l]
            if i != j:
                K[j, k] += v * D[i, l]
            if k != l:
                K[i, l] += v * D[j, k]
                if i != j:
                    K[j, l] += v * D[i, k]


@njit(cache=True)
def eri_gradient(shell_l, shell_atom, shell_center, shell_pstart, shell_nprim, shell_ao, prim_exp, prim_coef,
                 pair_a, pair_b, Q, thresh, D, nat):
    """Two-electron RHF gradient contribution sum d(ij|kl) Gamma_ijkl."""
    grad = np.zeros((nat, 3))
    npair = pair_a.shape[0]
    atoms = np.zeros(4, dtype=np.int64)
    for k1 in range(npair):
        sa = pair_a[k1]
        sb = pair_b[k1]
        la, A, ea, ca = _quartet_args(sa, shell_l, shell_center, shell_pstart, shell_nprim, prim_exp, prim_coef)
        lb, B, eb, cb = _quartet_args(sb, shell_l, shell_center, shell_pstart, shell_nprim, prim_exp, prim_coef)
        na = ncart(la)
        nb = ncart(lb)
        for k2 in range(k1 + 1):
            if Q[k1] * Q[k2] < thresh:
                continue
            sc = pair_a[k2]
            sd = pair_b[k2]
            atoms[0] = shell_atom[sa]
            atoms[1] = shell_atom[sb]
            atoms[2] = shell_atom[sc]
            atoms[3] = shell_atom[sd]
            if atoms[0] == atoms[1] and atoms[1] == atoms[2] and atoms[2] == atoms[3]:
                continue
            lc, C, ec, cc = _quartet_args(sc, shell_l, shell_center, shell_pstart, shell_nprim, prim_exp, prim_coef)
            ld, Dc, ed, cd = _quartet_args(sd, shell_l, shell_center, shell_pstart, shell_nprim, prim_exp, prim_coef)
            nc = ncart(lc)
            nd = ncart(ld)
            blk = eri_deriv_quartet(la, lb, lc, ld, A, B, C, Dc, ea, ca, eb, cb, ec, cc, ed, cd)
            deg = 1.0
            if sa != sb:
                deg *= 2.0
            if sc != sd:
                deg *= 2.0
            if k1 != k2:
                deg *= 2.0
            g = np.zeros((3, 3))
            for ia in range(na):
                i = shell_ao[sa] + ia
                for ib in range(nb):
                    j = shell_ao[sb] + ib
                    nab = CART_NORM[CART_OFF[la] + ia] * CART_NORM[CART_OFF[lb] + ib]
                    for ic in range(nc):
                        kk = shell_ao[sc] + ic
                        for idd in range(nd):
                            ll = shell_ao[sd] + idd
                            nrm = nab * CART_NORM[CART_OFF[lc] + ic] * CART_NORM[CART_OFF[ld] + idd]
                            gam = 0.5 * D[i, j] * D[kk, ll] - 0.125 * (D[i, kk] * D[j, ll] + D[i, ll] * D[j, kk])
                            w = gam * nrm * deg
                            ab = ia * nb + ib
                            cdx = ic * nd + idd
                            for c in range(3):
                                for d in range(3):
                                    g[c, d] += w * blk[c, d, ab, cdx]
            for d in range(3):
                grad[atoms[0], d] += g[0, d]
                grad[atoms[1], d] += g[1, d]
                grad[atoms[2], d] += g[2, d]
                grad[atoms[3], d] -= g[0, d] + g[1, d] + g[2, d]
    return grad


@njit(cache=True)
def eri_deriv_dense(shell_l, shell_atom, shell_center, shell_pstart, shell_nprim, shell_ao, prim_exp, prim_coef, nat, M):
    """Full derivative tensor dERI[atom, xyz, i, j, k, l] (small systems only)."""
    nsh = shell_l.shape[0]
    out = np.zeros((nat, 3, M, M, M, M))
    atoms = np.zeros(4, dtype=np.int64)
    tot = np.zeros((4, 3))
    for sa in range(nsh):
        for sb in range(nsh):
            for sc in range(nsh):
                for sd in range(nsh):
                    la, A, ea, ca = _quartet_args(sa, shell_l, shell_center, shell_pstart, shell_nprim, prim_exp, prim_coef)
                    lb, B, eb, cb = _quartet_args(sb, shell_l, shell_center, shell_pstart, shell_nprim, prim_exp, prim_coef)
                    lc, C, ec, cc = _quartet_args(sc, shell_l, shell_center, shell_pstart, shell_nprim, prim_exp, prim_coef)
                    ld, Dc, ed, cd = _quartet_args(sd, shell_l, shell_center, shell_pstart, shell_nprim, prim_exp, prim_coef)
                    blk = eri_deriv_quartet(la, lb, lc, ld, A, B, C, Dc, ea, ca, eb, cb, ec, cc, ed, cd)
                    atoms[0] = shell_atom[sa]
                    atoms[1] = shell_atom[sb]
                    atoms[2] = shell_atom[sc]
                    atoms[3] = shell_atom[sd]
                    na = ncart(la)
                    nb = ncart(lb)
                    nc = ncart(lc)
                    nd = ncart(ld)
                    for ia in range(na):
                        for ib in range(nb):
                            nab = CART_NORM[CART_OFF[la] + ia] * CART_NORM[CART_OFF[lb] + ib]
                            for ic in range(nc):
                                for idd in range(nd):
                                    nrm = nab * CART_NORM[CART_OFF[lc] + ic] * CART_NORM[CART_OFF[ld] + idd]
                                    ab = ia * nb + ib
                                    cdx = ic * nd + idd
                                    for d in range(3):
                                        tot[0, d] = blk[0, d, ab, cdx] * nrm
                                        tot[1, d] = blk[1, d, ab, cdx] * nrm
                                        tot[2, d] = blk[2, d, ab, cdx] * nrm
                                        tot[3, d] = -(tot[0, d] + tot[1, d] + tot[2, d])
                                    i = shell_ao[sa] + ia
                                    j = shell_ao[sb] + ib
                                    k = shell_ao[sc] + ic
                                    l = shell_ao[sd] + idd
                                    for c in range(4):
                                        for d in range(3):
                                            out[atoms[c], d, i, j, k, l] += tot[c, d]
    return out
