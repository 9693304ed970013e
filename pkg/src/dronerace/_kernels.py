"""Compiled kernels for the hot path: dynamics, adjoints, costs, C/GMRES.

Everything a problem needs is packed into one flat float vector ``P`` and
arrays are addressed through integer offsets rather than slices; slicing
inside a jitted loop costs reference-count traffic that dominates these
small kernels.

Race parameter layout of ``P``:

    [0:7]    drone      m, g, l, Jxx, Jyy, Jzz, k
    [7:16]   weights    a1 .. a7, b, u_ref      (ego)
    [16:25]  weights    a1 .. a7, b, u_ref      (opponent, NRHDG only)
    [25:30]  potential  alpha, beta, gamma, delta1, delta2
    [30]     opponent prediction speed (NMPC only)
    [31]     number K of path terms
    [32:38]  path slope (3), path offset (3)
    [38:]    K rows of (component, amplitude, frequency, phase)

Augmented drone state (15): p[0:3] v[3:6] w[6:9] q[9:13] theta[13] sigma[14].
Path scratch ``pb`` holds blocks of 8 rows: r, dr, d2r, d3r for one drone
followed by the same for the other. The residual keeps one block per stage
so the costate sweep reuses what the forward prediction evaluated.

Every ``*_vjp`` / ``*_grad`` routine accumulates into its outputs.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# relative singularity guard on the projection-rate denominator
SING_EPS = 1e-6

OK = 0
SINGULAR = 1
NONFINITE = 2

I_DRONE = 0
I_WEGO = 7
I_WOPP = 16
I_POT = 25
I_SPEED = 30
I_NTERMS = 31
I_LIN = 32
I_TERMS = 38


def pack_race_params(drone, w_ego, w_opp, potential, speed, terms, lin):
    terms = np.asarray(terms, dtype=float).reshape(-1, 4)
    return np.concatenate([drone, w_ego, w_opp, potential, [speed, terms.shape[0]],
                           np.asarray(lin, dtype=float).ravel(), terms.ravel()])


@njit(cache=True, error_model="numpy")
def path_eval(P, th, pb, row):
    """Fill pb[row:row+4] with r, dr, d2r, d3r at th."""
    for j in range(3):
        pb[row, j] = P[I_LIN + j] * th + P[I_LIN + 3 + j]
        pb[row + 1, j] = P[I_LIN + j]
        pb[row + 2, j] = 0.0
        pb[row + 3, j] = 0.0
    for i in range(int(P[I_NTERMS])):
        o = I_TERMS + 4 * i
        c = int(P[o])
        a = P[o + 1]
        w = P[o + 2]
        arg = w * th + P[o + 3]
        s = np.sin(arg)
        co = np.cos(arg)
        pb[row, c] += a * s
        pb[row + 1, c] += a * w * co
        pb[row + 2, c] -= a * w * w * s
        pb[row + 3, c] -= a * w * w * w * co


@njit(cache=True, error_model="numpy")
def drone_f(x, xo, u, uo, P, out, oo):
    m, g, l = P[0], P[1], P[2]
    J1, J2, J3, k = P[3], P[4], P[5], P[6]
    w1, w2, w3 = x[xo + 6], x[xo + 7], x[xo + 8]
    q0, q1, q2, q3 = x[xo + 9], x[xo + 10], x[xo + 11], x[xo + 12]
    u0, u1, u2, u3 = u[uo], u[uo + 1], u[uo + 2], u[uo + 3]
    c = (u0 + u1 + u2 + u3) / m
    out[oo] = x[xo + 3]
    out[oo + 1] = x[xo + 4]
    out[oo + 2] = x[xo + 5]
    out[oo + 3] = c * 2.0 * (q0 * q2 + q1 * q3)
    out[oo + 4] = c * 2.0 * (q2 * q3 - q0 * q1)
    out[oo + 5] = c * (q0 * q0 - q1 * q1 - q2 * q2 + q3 * q3) - g
    out[oo + 6] = (l * (u1 - u3) - (J3 - J2) * w2 * w3) / J1
    out[oo + 7] = (l * (u2 - u0) - (J1 - J3) * w3 * w1) / J2
    out[oo + 8] = (k * (u0 - u1 + u2 - u3) - (J2 - J1) * w1 * w2) / J3
    out[oo + 9] = 0.5 * (-w1 * q1 - w2 * q2 - w3 * q3)
    out[oo + 10] = 0.5 * (w1 * q0 + w3 * q2 - w2 * q3)
    out[oo + 11] = 0.5 * (w2 * q0 - w3 * q1 + w1 * q3)
    out[oo + 12] = 0.5 * (w3 * q0 + w2 * q1 - w1 * q2)


@njit(cache=True, error_model="numpy")
def aug_f(x, xo, u, uo, P, pb, pr, out, oo):
    """Augmented derivative; pb[pr:pr+4] holds the path at x[xo+13]."""
    drone_f(x, xo, u, uo, P, out, oo)
    num = 0.0
    t2 = 0.0
    ep = 0.0
    for j in range(3):
        num += x[xo + 3 + j] * pb[pr + 1, j]
        t2 += pb[pr + 1, j] * pb[pr + 1, j]
        ep += (pb[pr, j] - x[xo + j]) * pb[pr + 2, j]
    den = t2 + ep
    if not den > SING_EPS * t2:
        return SINGULAR
    thd = num / den
    out[oo + 13] = thd
    out[oo + 14] = np.sqrt(t2) * thd
    return OK


@njit(cache=True, error_model="numpy")
def aug_vjp(x, xo, u, uo, lam, lo, P, pb, pr, gx, go, gu, guo):
    """Accumulate f_x^T lam into gx[go:go+15] and f_u^T lam into gu[guo:guo+4]."""
    m, l = P[0], P[2]
    J1, J2, J3, k = P[3], P[4], P[5], P[6]
    w1, w2, w3 = x[xo + 6], x[xo + 7], x[xo + 8]
    q0, q1, q2, q3 = x[xo + 9], x[xo + 10], x[xo + 11], x[xo + 12]
    lv0, lv1, lv2 = lam[lo + 3], lam[lo + 4], lam[lo + 5]
    lw0, lw1, lw2 = lam[lo + 6], lam[lo + 7], lam[lo + 8]
    lq0, lq1, lq2, lq3 = lam[lo + 9], lam[lo + 10], lam[lo + 11], lam[lo + 12]

    gx[go + 3] += lam[lo]
    gx[go + 4] += lam[lo + 1]
    gx[go + 5] += lam[lo + 2]

    # translational acceleration
    c = 2.0 * (u[uo] + u[uo + 1] + u[uo + 2] + u[uo + 3]) / m
    gx[go + 9] += c * (lv0 * q2 - lv1 * q1 + lv2 * q0)
    gx[go + 10] += c * (lv0 * q3 - lv1 * q0 - lv2 * q1)
    gx[go + 11] += c * (lv0 * q0 + lv1 * q3 - lv2 * q2)
    gx[go + 12] += c * (lv0 * q1 + lv1 * q2 + lv2 * q3)
    thrust = (lv0 * 2.0 * (q0 * q2 + q1 * q3)
              + lv1 * 2.0 * (q2 * q3 - q0 * q1)
              + lv2 * (q0 * q0 - q1 * q1 - q2 * q2 + q3 * q3)) / m

    # rotational acceleration
    gx[go + 6] += -lw1 * (J1 - J3) * w3 / J2 - lw2 * (J2 - J1) * w2 / J3
    gx[go + 7] += -lw0 * (J3 - J2) * w3 / J1 - lw2 * (J2 - J1) * w1 / J3
    gx[go + 8] += -lw0 * (J3 - J2) * w2 / J1 - lw1 * (J1 - J3) * w1 / J2
    ta = lw0 * l / J1
    tb = lw1 * l / J2
    tc = lw2 * k / J3
    gu[guo] += thrust - tb + tc
    gu[guo + 1] += thrust + ta - tc
    gu[guo + 2] += thrust + tb + tc
    gu[guo + 3] += thrust - ta - tc

    # quaternion kinematics, Omega(w) is skew
    gx[go + 9] += 0.5 * (w1 * lq1 + w2 * lq2 + w3 * lq3)
    gx[go + 10] += -0.5 * (w1 * lq0 + w3 * lq2 - w2 * lq3)
    gx[go + 11] += -0.5 * (w2 * lq0 - w3 * lq1 + w1 * lq3)
    gx[go + 12] += -0.5 * (w3 * lq0 + w2 * lq1 - w1 * lq2)
    gx[go + 6] += 0.5 * (-q1 * lq0 + q0 * lq1 + q3 * lq2 - q2 * lq3)
    gx[go + 7] += 0.5 * (-q2 * lq0 - q3 * lq1 + q0 * lq2 + q1 * lq3)
    gx[go + 8] += 0.5 * (-q3 * lq0 + q2 * lq1 - q1 * lq2 + q0 * lq3)

    # projection point and arc length
    num = 0.0
    t2 = 0.0
    ep = 0.0
    vr2 = 0.0
    r12 = 0.0
    er3 = 0.0
    for j in range(3):
        e = pb[pr, j] - x[xo + j]
        v = x[xo + 3 + j]
        num += v * pb[pr + 1, j]
        t2 += pb[pr + 1, j] * pb[pr + 1, j]
        ep += e * pb[pr + 2, j]
        vr2 += v * pb[pr + 2, j]
        r12 += pb[pr + 1, j] * pb[pr + 2, j]
        er3 += e * pb[pr + 3, j]
    den = t2 + ep
    s = np.sqrt(t2)
    thd = num / den
    cf = lam[lo + 13] + lam[lo + 14] * s
    for j in range(3):
        gx[go + 3 + j] += cf * pb[pr + 1, j] / den
        gx[go + j] += cf * num * pb[pr + 2, j] / (den * den)
    dden = 3.0 * r12 + er3
    dthd = (vr2 * den - num * dden) / (den * den)
    gx[go + 13] += cf * dthd + lam[lo + 14] * thd * r12 / s


@njit(cache=True, error_model="numpy")
def pf_grad(x, xo, u, uo, P, wo, pb, pr, sg, gx, go, gu, guo, with_input):
    """Accumulate sg * gradient of the path-following cost (weights at P[wo])."""
    dth = 0.0
    for j in range(3):
        e = x[xo + j] - pb[pr, j]
        gx[go + j] += sg * 2.0 * P[wo + j] * e
        dth -= 2.0 * P[wo + j] * e * pb[pr + 1, j]
        gx[go + 6 + j] += sg * 2.0 * P[wo + 3 + j] * x[xo + 6 + j]
    gx[go + 13] += sg * dth
    gx[go + 14] -= sg * P[wo + 6]
    if with_input:
        for i in range(4):
            gu[guo + i] += sg * 2.0 * P[wo + 7] * (u[uo + i] - P[wo + 8])


@njit(cache=True, error_model="numpy")
def pf_cost(x, xo, u, uo, P, wo, pb, pr, with_input):
    c = 0.0
    for j in range(3):
        e = x[xo + j] - pb[pr, j]
        c += P[wo + j] * e * e + P[wo + 3 + j] * x[xo + 6 + j] * x[xo + 6 + j]
    c -= P[wo + 6] * x[xo + 14]
    if with_input:
        for i in range(4):
            du = u[uo + i] - P[wo + 8]
            c += P[wo + 7] * du * du
    return c


@njit(cache=True, error_model="numpy")
def potential_grad(x, xo, ie_p, ie_th, io_p, io_th, P, pb, pe, po, sg, gx):
    """Accumulate sg * gradient of the potential seen by the drone at ie_*.

    Indices locate the ego/opponent positions and path parameters relative
    to xo in x and to 0 in gx; pb rows pe / po hold the path at the ego /
    opponent parameter. Returns the potential value.
    """
    th_e = x[xo + ie_th]
    th_o = x[xo + io_th]
    d0 = (x[xo + io_p] - pb[po, 0]) - (x[xo + ie_p] - pb[pe, 0])
    d1 = (x[xo + io_p + 1] - pb[po, 1]) - (x[xo + ie_p + 1] - pb[pe, 1])
    d2 = (x[xo + io_p + 2] - pb[po, 2]) - (x[xo + ie_p + 2] - pb[pe, 2])
    r2 = d0 * d0 + d1 * d1 + d2 * d2
    alpha, beta, gamma = P[I_POT], P[I_POT + 1], P[I_POT + 2]
    del1, del2 = P[I_POT + 3], P[I_POT + 4]
    tdel = th_o - th_e
    z = (tdel - del1) / alpha
    ex = np.exp(-z * z)
    tn = np.tanh(tdel - del2)
    den = 1.0 + gamma * r2
    lat = beta / den
    g = ex * tn * lat
    g_tdel = lat * ex * (-2.0 * z / alpha * tn + (1.0 - tn * tn))
    g_r2 = -ex * tn * beta * gamma / (den * den)
    # R^2 = |d|^2 with d = (p_o - r(th_o)) - (p_e - r(th_e))
    c = sg * 2.0 * g_r2
    gx[ie_p] -= c * d0
    gx[ie_p + 1] -= c * d1
    gx[ie_p + 2] -= c * d2
    gx[io_p] += c * d0
    gx[io_p + 1] += c * d1
    gx[io_p + 2] += c * d2
    de = d0 * pb[pe + 1, 0] + d1 * pb[pe + 1, 1] + d2 * pb[pe + 1, 2]
    do = d0 * pb[po + 1, 0] + d1 * pb[po + 1, 1] + d2 * pb[po + 1, 2]
    gx[ie_th] += -sg * g_tdel + c * de
    gx[io_th] += sg * g_tdel - c * do
    return g


# --------------------------------------------------------------------------
# Problem stage functions, all with the same signatures:
#   f(x, xo, u, uo, P, out, oo, pb, pr) -> status
#       evaluates the path into pb[pr:pr+8]
#   hxu(x, xo, u, uo, lam, lo, P, gx, gu, pb, pr, fresh)
#       overwrites gx, gu with H_x, H_u; re-evaluates the path only if fresh
#   phix(x, xo, P, gx, pb, pr)
#       overwrites gx with phi_x
# --------------------------------------------------------------------------

# NMPC: x = (ego augmented 15, p_op 3, theta_op 1)

@njit(cache=True, error_model="numpy")
def nmpc_f(x, xo, u, uo, P, out, oo, pb, pr):
    path_eval(P, x[xo + 13], pb, pr)
    path_eval(P, x[xo + 18], pb, pr + 4)
    st = aug_f(x, xo, u, uo, P, pb, pr, out, oo)
    sp = P[I_SPEED]
    for j in range(3):
        out[oo + 15 + j] = sp * pb[pr + 5, j]
    out[oo + 18] = sp
    return st


@njit(cache=True, error_model="numpy")
def _nmpc_grad(x, xo, u, uo, lam, lo, P, gx, gu, pb, pr, stage, fresh):
    if fresh:
        path_eval(P, x[xo + 13], pb, pr)
        path_eval(P, x[xo + 18], pb, pr + 4)
    for i in range(19):
        gx[i] = 0.0
    if stage:
        for i in range(4):
            gu[i] = 0.0
        aug_vjp(x, xo, u, uo, lam, lo, P, pb, pr, gx, 0, gu, 0)
        acc = 0.0
        for j in range(3):
            acc += lam[lo + 15 + j] * pb[pr + 6, j]
        gx[18] += P[I_SPEED] * acc
    pf_grad(x, xo, u, uo, P, I_WEGO, pb, pr, 1.0, gx, 0, gu, 0, stage)
    potential_grad(x, xo, 0, 13, 15, 18, P, pb, pr, pr + 4, 1.0, gx)


@njit(cache=True, error_model="numpy")
def nmpc_hxu(x, xo, u, uo, lam, lo, P, gx, gu, pb, pr, fresh):
    _nmpc_grad(x, xo, u, uo, lam, lo, P, gx, gu, pb, pr, True, fresh)


@njit(cache=True, error_model="numpy")
def nmpc_phix(x, xo, P, gx, pb, pr):
    _nmpc_grad(x, xo, x, 0, x, 0, P, gx, gx, pb, pr, False, True)


# NRHDG: x = (ego augmented 15, opponent augmented 15), u = (u_ego 4, u_opp 4)

@njit(cache=True, error_model="numpy")
def nrhdg_f(x, xo, u, uo, P, out, oo, pb, pr):
    path_eval(P, x[xo + 13], pb, pr)
    path_eval(P, x[xo + 28], pb, pr + 4)
    st = aug_f(x, xo, u, uo, P, pb, pr, out, oo)
    if st != OK:
        return st
    return aug_f(x, xo + 15, u, uo + 4, P, pb, pr + 4, out, oo + 15)


@njit(cache=True, error_model="numpy")
def _nrhdg_grad(x, xo, u, uo, lam, lo, P, gx, gu, pb, pr, stage, fresh):
    if fresh:
        path_eval(P, x[xo + 13], pb, pr)
        path_eval(P, x[xo + 28], pb, pr + 4)
    for i in range(30):
        gx[i] = 0.0
    if stage:
        for i in range(8):
            gu[i] = 0.0
        aug_vjp(x, xo, u, uo, lam, lo, P, pb, pr, gx, 0, gu, 0)
        aug_vjp(x, xo + 15, u, uo + 4, lam, lo + 15, P, pb, pr + 4, gx, 15, gu, 4)
    pf_grad(x, xo, u, uo, P, I_WEGO, pb, pr, 1.0, gx, 0, gu, 0, stage)
    pf_grad(x, xo + 15, u, uo + 4, P, I_WOPP, pb, pr + 4, -1.0, gx, 15, gu, 4, stage)
    potential_grad(x, xo, 0, 13, 15, 28, P, pb, pr, pr + 4, 1.0, gx)
    potential_grad(x, xo, 15, 28, 0, 13, P, pb, pr + 4, pr, -1.0, gx)


@njit(cache=True, error_model="numpy")
def nrhdg_hxu(x, xo, u, uo, lam, lo, P, gx, gu, pb, pr, fresh):
    _nrhdg_grad(x, xo, u, uo, lam, lo, P, gx, gu, pb, pr, True, fresh)


@njit(cache=True, error_model="numpy")
def nrhdg_phix(x, xo, P, gx, pb, pr):
    _nrhdg_grad(x, xo, x, 0, x, 0, P, gx, gx, pb, pr, False, True)


# Path following alone: x = augmented drone 15, u = 4 thrusts, weights at
# the ego slot.

@njit(cache=True, error_model="numpy")
def pf_f(x, xo, u, uo, P, out, oo, pb, pr):
    path_eval(P, x[xo + 13], pb, pr)
    return aug_f(x, xo, u, uo, P, pb, pr, out, oo)


@njit(cache=True, error_model="numpy")
def pf_hxu(x, xo, u, uo, lam, lo, P, gx, gu, pb, pr, fresh):
    if fresh:
        path_eval(P, x[xo + 13], pb, pr)
    for i in range(15):
        gx[i] = 0.0
    for i in range(4):
        gu[i] = 0.0
    aug_vjp(x, xo, u, uo, lam, lo, P, pb, pr, gx, 0, gu, 0)
    pf_grad(x, xo, u, uo, P, I_WEGO, pb, pr, 1.0, gx, 0, gu, 0, True)


@njit(cache=True, error_model="numpy")
def pf_phix(x, xo, P, gx, pb, pr):
    path_eval(P, x[xo + 13], pb, pr)
    for i in range(15):
        gx[i] = 0.0
    pf_grad(x, xo, x, 0, P, I_WEGO, pb, pr, 1.0, gx, 0, gx, 0, False)


# Linear-quadratic: f = A x + B u, L = (x'Qx + u'Ru)/2, phi = x'Sx/2.
# An indefinite R turns the problem into a zero-sum game.
# P = [nx, nu, A (nx*nx), B (nx*nu), Q (nx*nx), R (nu*nu), S (nx*nx)], row-major.

@njit(cache=True, error_model="numpy")
def _lq_dims(P):
    nx = int(P[0])
    nu = int(P[1])
    oA = 2
    oB = oA + nx * nx
    oQ = oB + nx * nu
    oR = oQ + nx * nx
    oS = oR + nu * nu
    return nx, nu, oA, oB, oQ, oR, oS


@njit(cache=True, error_model="numpy")
def lq_f(x, xo, u, uo, P, out, oo, pb, pr):
    nx, nu, oA, oB, oQ, oR, oS = _lq_dims(P)
    for i in range(nx):
        s = 0.0
        for j in range(nx):
            s += P[oA + i * nx + j] * x[xo + j]
        for j in range(nu):
            s += P[oB + i * nu + j] * u[uo + j]
        out[oo + i] = s
    return OK


@njit(cache=True, error_model="numpy")
def lq_hxu(x, xo, u, uo, lam, lo, P, gx, gu, pb, pr, fresh):
    nx, nu, oA, oB, oQ, oR, oS = _lq_dims(P)
    for i in range(nx):
        s = 0.0
        for j in range(nx):
            s += P[oQ + i * nx + j] * x[xo + j] + P[oA + j * nx + i] * lam[lo + j]
        gx[i] = s
    for i in range(nu):
        s = 0.0
        for j in range(nu):
            s += P[oR + i * nu + j] * u[uo + j]
        for j in range(nx):
            s += P[oB + j * nu + i] * lam[lo + j]
        gu[i] = s


@njit(cache=True, error_model="numpy")
def lq_phix(x, xo, P, gx, pb, pr):
    nx, nu, oA, oB, oQ, oR, oS = _lq_dims(P)
    for i in range(nx):
        s = 0.0
        for j in range(nx):
            s += P[oS + i * nx + j] * x[xo + j]
        gx[i] = s


# Problem families, selected by an integer so the horizon routines below
# stay plain compiled functions.
KIND_NMPC = 0
KIND_NRHDG = 1
KIND_LQ = 2
KIND_PF = 3


@njit(cache=True, error_model="numpy")
def stage_f(kind, x, xo, u, uo, P, out, oo, pb, pr):
    if kind == KIND_NMPC:
        return nmpc_f(x, xo, u, uo, P, out, oo, pb, pr)
    if kind == KIND_NRHDG:
        return nrhdg_f(x, xo, u, uo, P, out, oo, pb, pr)
    if kind == KIND_PF:
        return pf_f(x, xo, u, uo, P, out, oo, pb, pr)
    return lq_f(x, xo, u, uo, P, out, oo, pb, pr)


@njit(cache=True, error_model="numpy")
def stage_hxu(kind, x, xo, u, uo, lam, lo, P, gx, gu, pb, pr, fresh):
    if kind == KIND_NMPC:
        nmpc_hxu(x, xo, u, uo, lam, lo, P, gx, gu, pb, pr, fresh)
    elif kind == KIND_NRHDG:
        nrhdg_hxu(x, xo, u, uo, lam, lo, P, gx, gu, pb, pr, fresh)
    elif kind == KIND_PF:
        pf_hxu(x, xo, u, uo, lam, lo, P, gx, gu, pb, pr, fresh)
    else:
        lq_hxu(x, xo, u, uo, lam, lo, P, gx, gu, pb, pr, fresh)


@njit(cache=True, error_model="numpy")
def stage_phix(kind, x, xo, P, gx, pb, pr):
    if kind == KIND_NMPC:
        nmpc_phix(x, xo, P, gx, pb, pr)
    elif kind == KIND_NRHDG:
        nrhdg_phix(x, xo, P, gx, pb, pr)
    elif kind == KIND_PF:
        pf_phix(x, xo, P, gx, pb, pr)
    else:
        lq_phix(x, xo, P, gx, pb, pr)


# --------------------------------------------------------------------------
# Horizon residual and continuation update
# --------------------------------------------------------------------------

@njit(cache=True, error_model="numpy")
def residual(kind, P, x0, U, N, nx, nu, dtau, X, Lam, out, pb):
    """Stacked dtau * H_u over the horizon (gradient of the discrete cost).

    Forward Euler prediction into X, backward costate sweep into Lam; both
    are flat (N + 1) * nx vectors; pb needs 8 * (N + 1) rows.
    """
    for i in range(nx):
        X[i] = x0[i]
    dx = np.empty(nx)
    for k in range(N):
        st = stage_f(kind, X, k * nx, U, k * nu, P, dx, 0, pb, 8 * k)
        if st != OK:
            return st
        for i in range(nx):
            X[(k + 1) * nx + i] = X[k * nx + i] + dtau * dx[i]
    gx = np.empty(nx)
    gu = np.empty(nu)
    stage_phix(kind, X, N * nx, P, gx, pb, 8 * N)
    for i in range(nx):
        Lam[N * nx + i] = gx[i]
    for k in range(N - 1, -1, -1):
        stage_hxu(kind, X, k * nx, U, k * nu, Lam, (k + 1) * nx, P, gx, gu, pb, 8 * k, False)
        for j in range(nu):
            out[k * nu + j] = dtau * gu[j]
        if k > 0:
            for i in range(nx):
                Lam[k * nx + i] = Lam[(k + 1) * nx + i] + dtau * gx[i]
    for j in range(out.size):
        if not np.isfinite(out[j]):
            return NONFINITE
    return OK


@njit(cache=True, error_model="numpy")
def residual_jacobian(kind, P, x0, U, N, nx, nu, dtau, step, X, Lam, pb, J):
    """Central-difference dF/dU into J; returns a non-OK status on failure."""
    n = U.size
    Up = U.copy()
    Fp = np.empty(n)
    Fm = np.empty(n)
    for i in range(n):
        Up[i] = U[i] + step
        st = residual(kind, P, x0, Up, N, nx, nu, dtau, X, Lam, Fp, pb)
        if st != OK:
            return st
        Up[i] = U[i] - step
        st = residual(kind, P, x0, Up, N, nx, nu, dtau, X, Lam, Fm, pb)
        if st != OK:
            return st
        Up[i] = U[i]
        for j in range(n):
            J[j, i] = (Fp[j] - Fm[j]) / (2.0 * step)
    return OK


@njit(cache=True, error_model="numpy")
def _norm(v):
    s = 0.0
    for i in range(v.size):
        s += v[i] * v[i]
    return np.sqrt(s)


@njit(cache=True, error_model="numpy")
def _precond(Minv, use, v, out):
    n = v.size
    if not use:
        for i in range(n):
            out[i] = v[i]
        return
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += Minv[i, j] * v[j]
        out[i] = s


@njit(cache=True, error_model="numpy")
def _fd_scale(h, d):
    """Difference step along d: h for |d| <= 1, else h / |d| so the
    perturbation of U never exceeds h."""
    nd = _norm(d)
    if nd > 1.0:
        return h / nd
    return h


@njit(cache=True, error_model="numpy")
def cgmres_step(kind, P, x, xdot, U, Udot, N, nx, nu, dtau, h, zeta, dt,
                kmax, restarts, tol, X, Lam, pb, Minv, use_prec, Jnew, col0, ncol):
    """One continuation update, in place on U and Udot.

    Solves (dF/dU) Udot = -zeta F - (dF/dx) xdot by restarted GMRES with
    forward-difference directional derivatives, warm-started from the
    previous Udot, then advances U by dt * Udot. Iteration stops early once
    the linear residual is below ``tol`` times its initial value. With
    ``use_prec`` the
    system is right-preconditioned by ``Minv``, an approximate inverse of
    dF/dU. Columns col0 .. col0 + ncol - 1 of dF/dU at the current state are
    written into ``Jnew`` by forward differences, so a fresh preconditioner
    can be assembled over several cycles.

    Returns (status, |F|, linear residual before, linear residual after).
    """
    n = U.size
    F = np.empty(n)
    Fx = np.empty(n)
    tmp = np.empty(n)
    Ut = np.empty(n)
    z = np.empty(n)
    st = residual(kind, P, x, U, N, nx, nu, dtau, X, Lam, F, pb)
    if st != OK:
        return st, np.nan, np.nan, np.nan
    fnorm = _norm(F)
    for c in range(col0, min(col0 + ncol, n)):
        for i in range(n):
            Ut[i] = U[i]
        Ut[c] += h
        st = residual(kind, P, x, Ut, N, nx, nu, dtau, X, Lam, tmp, pb)
        if st != OK:
            return st, fnorm, np.nan, np.nan
        for i in range(n):
            Jnew[i, c] = (tmp[i] - F[i]) / h
    xs = np.empty(nx)
    for i in range(nx):
        xs[i] = x[i] + h * xdot[i]
    st = residual(kind, P, xs, U, N, nx, nu, dtau, X, Lam, Fx, pb)
    if st != OK:
        return st, fnorm, np.nan, np.nan
    b = np.empty(n)
    for i in range(n):
        b[i] = -zeta * F[i] - (Fx[i] - F[i]) / h

    V = np.zeros((kmax + 1, n))
    Hm = np.zeros((kmax + 1, kmax))
    cs = np.zeros(kmax)
    sn = np.zeros(kmax)
    g = np.zeros(kmax + 1)
    y = np.zeros(kmax)
    res0 = np.nan
    res1 = np.nan
    for cycle in range(restarts + 1):
        eps = _fd_scale(h, Udot)
        for i in range(n):
            Ut[i] = U[i] + eps * Udot[i]
        st = residual(kind, P, xs, Ut, N, nx, nu, dtau, X, Lam, tmp, pb)
        if st != OK:
            return st, fnorm, res0, res1
        for i in range(n):
            tmp[i] = b[i] - (tmp[i] - Fx[i]) / eps
        beta = _norm(tmp)
        if cycle == 0:
            res0 = beta
        res1 = beta
        if beta == 0.0 or (cycle > 0 and beta <= tol * res0):
            break
        V[:, :] = 0.0
        Hm[:, :] = 0.0
        g[:] = 0.0
        for i in range(n):
            V[0, i] = tmp[i] / beta
        g[0] = beta
        kk = 0
        for j in range(kmax):
            _precond(Minv, use_prec, V[j], z)
            eps = _fd_scale(h, z)
            for i in range(n):
                Ut[i] = U[i] + eps * z[i]
            st = residual(kind, P, xs, Ut, N, nx, nu, dtau, X, Lam, tmp, pb)
            if st != OK:
                return st, fnorm, res0, res1
            for i in range(n):
                tmp[i] = (tmp[i] - Fx[i]) / eps
            # modified Gram-Schmidt
            for i in range(j + 1):
                hij = 0.0
                for m in range(n):
                    hij += tmp[m] * V[i, m]
                Hm[i, j] = hij
                for m in range(n):
                    tmp[m] -= hij * V[i, m]
            hn = _norm(tmp)
            Hm[j + 1, j] = hn
            if hn > 0.0:
                for m in range(n):
                    V[j + 1, m] = tmp[m] / hn
            for i in range(j):
                t0 = cs[i] * Hm[i, j] + sn[i] * Hm[i + 1, j]
                Hm[i + 1, j] = -sn[i] * Hm[i, j] + cs[i] * Hm[i + 1, j]
                Hm[i, j] = t0
            a = Hm[j, j]
            bb = Hm[j + 1, j]
            rr = np.sqrt(a * a + bb * bb)
            if rr == 0.0:
                cs[j] = 1.0
                sn[j] = 0.0
            else:
                cs[j] = a / rr
                sn[j] = bb / rr
            Hm[j, j] = rr
            Hm[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            kk = j + 1
            if hn == 0.0 or abs(g[j + 1]) <= tol * res0:
                break
        for i in range(kk - 1, -1, -1):
            s = g[i]
            for m in range(i + 1, kk):
                s -= Hm[i, m] * y[m]
            y[i] = s / Hm[i, i] if Hm[i, i] != 0.0 else 0.0
        for m in range(n):
            tmp[m] = 0.0
        for i in range(kk):
            for m in range(n):
                tmp[m] += y[i] * V[i, m]
        _precond(Minv, use_prec, tmp, z)
        for m in range(n):
            Udot[m] += z[m]
        res1 = abs(g[kk])
    for i in range(n):
        U[i] += dt * Udot[i]
    return OK, fnorm, res0, res1


@njit(cache=True, error_model="numpy")
def pair_f(x, u_a, u_b, P, out, pb):
    path_eval(P, x[13], pb, 0)
    path_eval(P, x[28], pb, 4)
    st = aug_f(x, 0, u_a, 0, P, pb, 0, out, 0)
    st |= aug_f(x, 15, u_b, 0, P, pb, 4, out, 15)
    return st


@njit(cache=True, error_model="numpy")
def rk4_pair(x, u_a, u_b, P, dt, out, pb):
    """Classical RK4 on two stacked augmented drones, then renormalize q."""
    k1 = np.empty(30)
    k2 = np.empty(30)
    k3 = np.empty(30)
    k4 = np.empty(30)
    st = pair_f(x, u_a, u_b, P, k1, pb)
    st |= pair_f(x + 0.5 * dt * k1, u_a, u_b, P, k2, pb)
    st |= pair_f(x + 0.5 * dt * k2, u_a, u_b, P, k3, pb)
    st |= pair_f(x + dt * k3, u_a, u_b, P, k4, pb)
    if st != OK:
        return SINGULAR
    for i in range(30):
        out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    for off in (9, 24):
        nq = np.sqrt(out[off] ** 2 + out[off + 1] ** 2 + out[off + 2] ** 2 + out[off + 3] ** 2)
        for i in range(4):
            out[off + i] /= nq
    return OK


@njit(cache=True, error_model="numpy")
def project(P, p, theta, lo, hi, tol, max_iter, pb):
    """Newton on (r - p) . r' = 0 from theta, clamped to [lo, hi].

    Returns the parameter, or NaN if Newton did not reach a local minimum
    of the distance within max_iter steps.
    """
    for _ in range(max_iter):
        path_eval(P, theta, pb, 0)
        g = 0.0
        hess = 0.0
        for j in range(3):
            e = pb[0, j] - p[j]
            g += e * pb[1, j]
            hess += pb[1, j] * pb[1, j] + e * pb[2, j]
        if abs(g) < tol and hess > 0.0:
            return theta
        if hess <= 0.0:
            # walk downhill on the distance instead of towards a maximum
            step = -1e-2 if g > 0.0 else 1e-2
        else:
            step = -g / hess
        theta = min(max(theta + step, lo), hi)
    return np.nan


@njit(cache=True, error_model="numpy")
def potential_value(P, x_e, p_o, th_o, pb):
    """Potential seen by the drone with augmented state x_e."""
    path_eval(P, x_e[13], pb, 0)
    path_eval(P, th_o, pb, 4)
    r2 = 0.0
    for j in range(3):
        d = (p_o[j] - pb[4, j]) - (x_e[j] - pb[0, j])
        r2 += d * d
    alpha, beta, gamma = P[I_POT], P[I_POT + 1], P[I_POT + 2]
    tdel = th_o - x_e[13]
    z = (tdel - P[I_POT + 3]) / alpha
    return np.exp(-z * z) * np.tanh(tdel - P[I_POT + 4]) * beta / (1.0 + gamma * r2)
