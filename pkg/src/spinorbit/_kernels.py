"""Compiled right-hand side and energy for the integrator hot loop.

These mirror ``dynamics.generalized_forces`` for the quadratic elastic and
Rayleigh functions; the numpy assembly there stays the reference and the
test suite checks the two agree.

``scal`` packs ``(p, GM, m, I0, kappa, mass_beta, A, B, epsilon)``.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _grad_veff(y, scal, C, Dz, g):
    p, G, m, I0, A, B, eps = scal[0], scal[1], scal[2], scal[3], scal[6], scal[7], scal[8]
    n = C.size
    R = y[0]
    J1, J2, J3 = y[3], y[4], y[5]
    Dm = m * R * R + I0 + J3
    gam = y[1] + y[2]
    c2 = math.cos(gam) ** 2
    tidal = J1 - 2.0 * J2 + J3 + 3.0 * (J2 - J1) * c2
    R3 = R * R * R
    g[0] = -p * p * m * R / (Dm * Dm) + G * m / (R * R) + 3.0 * G * tidal / (R3 * R)
    dg = 3.0 * G * (J2 - J1) * math.sin(2.0 * gam) / R3
    g[1] = dg
    g[2] = dg
    sJ = J1 + J2 + J3
    cz = 0.0
    for j in range(n):
        cz += C[j] * y[6 + j]
    for i in range(3):
        Ji = y[3 + i]
        g[3 + i] = (A * Ji + B * (sJ - Ji) + cz) / eps
    g[3] -= G / R3 * (1.0 - 3.0 * c2)
    g[4] -= G / R3 * (-2.0 + 3.0 * c2)
    g[5] -= G / R3 + p * p / (2.0 * Dm * Dm)
    for j in range(n):
        s = C[j] * sJ
        for l in range(n):
            s += Dz[j, l] * y[6 + l]
        g[6 + j] = s / eps


@njit(cache=True)
def rhs(x, scal, mJ, mz, C, Dz, eta, out):
    """Time derivative of ``x = (y, ydot, psi)``; returns the (chi, beta) block determinant."""
    n = C.size
    k = 6 + n
    p, m, I0, kappa, mb = scal[0], scal[2], scal[3], scal[4], scal[5]
    y = x[:k]
    yd = x[k:2 * k]
    R = y[0]
    u0 = I0 + y[5]
    u1 = kappa * (y[3] - y[4])
    Dm = m * R * R + u0
    b00 = u0 - u0 * u0 / Dm
    b01 = u1 - u0 * u1 / Dm
    b11 = mb - u1 * u1 / Dm
    w0, w1 = yd[1], yd[2]

    f = np.empty(k)
    _grad_veff(y, scal, C, Dz, f)
    for i in range(k):
        f[i] = -f[i]

    # partials of u, Dm and the kinetic block along R, J1, J2, J3
    idx = (0, 3, 4, 5)
    du0 = (0.0, 0.0, 0.0, 1.0)
    du1 = (0.0, kappa, -kappa, 0.0)
    dD = (2.0 * m * R, 0.0, 0.0, 1.0)
    da00 = (0.0, 0.0, 0.0, 1.0)
    da01 = (0.0, kappa, -kappa, 0.0)
    mw0 = 0.0
    mw1 = 0.0
    gy0 = 0.0
    gy1 = 0.0
    D2 = Dm * Dm
    for q in range(4):
        j = idx[q]
        dm00 = da00[q] - 2.0 * du0[q] * u0 / Dm + u0 * u0 * dD[q] / D2
        dm01 = da01[q] - (du0[q] * u1 + u0 * du1[q]) / Dm + u0 * u1 * dD[q] / D2
        dm11 = -2.0 * du1[q] * u1 / Dm + u1 * u1 * dD[q] / D2
        dA0 = p * du0[q] / Dm - p * u0 * dD[q] / D2
        dA1 = p * du1[q] / Dm - p * u1 * dD[q] / D2
        ydj = yd[j]
        mw0 += ydj * (dm00 * w0 + dm01 * w1)
        mw1 += ydj * (dm01 * w0 + dm11 * w1)
        gy0 += dA0 * ydj
        gy1 += dA1 * ydj
        f[j] += 0.5 * (dm00 * w0 * w0 + 2.0 * dm01 * w0 * w1 + dm11 * w1 * w1) + dA0 * w0 + dA1 * w1
    f[1] -= mw0 + gy0
    f[2] -= mw1 + gy1
    ne = k - 2
    for i in range(ne):
        s = 0.0
        for l in range(ne):
            s += eta[i, l] * yd[2 + l]
        f[2 + i] -= s

    det = b00 * b11 - b01 * b01
    out[:k] = yd
    out[k] = f[0] / m
    out[k + 1] = (b11 * f[1] - b01 * f[2]) / det
    out[k + 2] = (b00 * f[2] - b01 * f[1]) / det
    for i in range(3):
        out[k + 3 + i] = f[3 + i] / mJ[i]
    for j in range(n):
        out[k + 6 + j] = f[6 + j] / mz[j]
    out[2 * k] = (p - u0 * w0 - u1 * w1) / Dm
    return det


@njit(cache=True)
def energy(x, scal, mJ, mz, C, Dz):
    n = C.size
    k = 6 + n
    p, G, m, I0, kappa, mb, A, B, eps = (scal[0], scal[1], scal[2], scal[3], scal[4],
                                         scal[5], scal[6], scal[7], scal[8])
    y = x[:k]
    yd = x[k:2 * k]
    R = y[0]
    J1, J2, J3 = y[3], y[4], y[5]
    u0 = I0 + J3
    u1 = kappa * (J1 - J2)
    Dm = m * R * R + u0
    w0, w1 = yd[1], yd[2]
    b = u0 * w0 + u1 * w1
    t2 = 0.5 * m * yd[0] ** 2 + 0.5 * (u0 * w0 * w0 + 2.0 * u1 * w0 * w1 + mb * w1 * w1) - b * b / (2.0 * Dm)
    for i in range(3):
        t2 += 0.5 * mJ[i] * yd[3 + i] ** 2
    for j in range(n):
        t2 += 0.5 * mz[j] * yd[6 + j] ** 2
    c2 = math.cos(y[1] + y[2]) ** 2
    tidal = J1 - 2.0 * J2 + J3 + 3.0 * (J2 - J1) * c2
    sJ = J1 + J2 + J3
    q = 0.5 * A * (J1 * J1 + J2 * J2 + J3 * J3) + B * (J1 * J2 + J1 * J3 + J2 * J3)
    for j in range(n):
        q += C[j] * y[6 + j] * sJ
        for l in range(n):
            q += 0.5 * Dz[j, l] * y[6 + j] * y[6 + l]
    v = p * p / (2.0 * Dm) - G * m / R - G * tidal / (R * R * R) + q / eps
    return t2 + v
