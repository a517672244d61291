"""Compiled fixed-step integrators. Mirrors ``_numpy`` function by function."""

import math

import numpy as np
from numba import njit

_opts = dict(cache=True, nogil=True)


@njit(**_opts)
def phi_point(nfac, ch, tr, pw, lo, hi, v, out):
    for k in range(nfac.shape[0]):
        acc = 1.0
        for j in range(nfac[k]):
            x = v[ch[k, j]]
            t = tr[k, j]
            if t == 1:
                x = abs(x)
            elif t == 2:
                if x < lo[k, j]:
                    x = lo[k, j]
                elif x > hi[k, j]:
                    x = hi[k, j]
                x = math.sqrt(x)
            p = pw[k, j]
            if p == 1:
                acc *= x
            else:
                acc *= x**p
        out[k] = acc


@njit(**_opts)
def _sparse_rhs(theta, nfac, ch, tr, pw, lo, hi, x, u, v, phi, out):
    n = x.shape[0]
    for i in range(n):
        v[i] = x[i]
    for i in range(u.shape[0]):
        v[n + i] = u[i]
    phi_point(nfac, ch, tr, pw, lo, hi, v, phi)
    for i in range(n):
        s = 0.0
        for k in range(phi.shape[0]):
            c = theta[k, i]
            if c != 0.0:
                s += c * phi[k]
        out[i] = s


@njit(**_opts)
def simulate_sparse(theta, nfac, ch, tr, pw, lo, hi, x0, U, dt, substeps, clip_lo, clip_hi, stops):
    T = U.shape[0]
    n = x0.shape[0]
    K = nfac.shape[0]
    X = np.full((T, n), np.nan)
    x = x0.copy()
    for i in range(n):
        X[0, i] = x[i]
    v = np.empty(n + U.shape[1])
    phi = np.empty(K)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    xt = np.empty(n)
    h = dt / substeps
    for t in range(T - 1):
        u = U[t]
        for _ in range(substeps):
            _sparse_rhs(theta, nfac, ch, tr, pw, lo, hi, x, u, v, phi, k1)
            for i in range(n):
                xt[i] = x[i] + 0.5 * h * k1[i]
            _sparse_rhs(theta, nfac, ch, tr, pw, lo, hi, xt, u, v, phi, k2)
            for i in range(n):
                xt[i] = x[i] + 0.5 * h * k2[i]
            _sparse_rhs(theta, nfac, ch, tr, pw, lo, hi, xt, u, v, phi, k3)
            for i in range(n):
                xt[i] = x[i] + h * k3[i]
            _sparse_rhs(theta, nfac, ch, tr, pw, lo, hi, xt, u, v, phi, k4)
            for i in range(n):
                x[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            for i in range(n):
                hit = False
                if x[i] < clip_lo[i]:
                    x[i] = clip_lo[i]
                    hit = True
                elif x[i] > clip_hi[i]:
                    x[i] = clip_hi[i]
                    hit = True
                if hit and stops[i] >= 0:
                    x[stops[i]] = 0.0
        for i in range(n):
            if not math.isfinite(x[i]):
                return X, t + 1
            X[t + 1, i] = x[i]
    return X, -1


@njit(**_opts)
def _bw_rhs(p, y, v, z, u):
    m, c, k, alpha, beta, gamma, delta = p[0], p[1], p[2], p[3], p[4], p[5], p[6]
    acc = (u - c * v - k * y - z) / m
    zd = alpha * v - beta * (gamma * abs(v) * z + delta * v * abs(z))
    return v, acc, zd


@njit(**_opts)
def boucwen(p, x0, U, dt, substeps):
    T = U.shape[0]
    X = np.full((T, 3), np.nan)
    A = np.full(T, np.nan)
    y, v, z = x0[0], x0[1], x0[2]
    h = dt / substeps
    for t in range(T):
        u = U[t]
        X[t, 0] = y
        X[t, 1] = v
        X[t, 2] = z
        A[t] = _bw_rhs(p, y, v, z, u)[1]
        if t == T - 1:
            break
        for _ in range(substeps):
            a1, b1, c1 = _bw_rhs(p, y, v, z, u)
            a2, b2, c2 = _bw_rhs(p, y + 0.5 * h * a1, v + 0.5 * h * b1, z + 0.5 * h * c1, u)
            a3, b3, c3 = _bw_rhs(p, y + 0.5 * h * a2, v + 0.5 * h * b2, z + 0.5 * h * c2, u)
            a4, b4, c4 = _bw_rhs(p, y + h * a3, v + h * b3, z + h * c3, u)
            y += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
            v += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
            z += h / 6.0 * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
        if not (math.isfinite(y) and math.isfinite(v) and math.isfinite(z)):
            return X, A, t + 1
    return X, A, -1


@njit(**_opts)
def _tanks_rhs(p, x1, x2, u):
    s1 = math.sqrt(x1) if x1 > 0.0 else 0.0
    s2 = math.sqrt(x2) if x2 > 0.0 else 0.0
    return -p[0] * s1 + p[1] * u, p[2] * s1 - p[3] * s2


@njit(**_opts)
def tanks(p, x0, U, dt, substeps):
    """p = (k1, k2, k3, k4, x1_max, x2_max, overflow_fraction)."""
    T = U.shape[0]
    X = np.full((T, 2), np.nan)
    x1, x2 = x0[0], x0[1]
    h = dt / substeps
    X[0, 0] = x1
    X[0, 1] = x2
    for t in range(T - 1):
        u = U[t]
        for _ in range(substeps):
            a1, b1 = _tanks_rhs(p, x1, x2, u)
            a2, b2 = _tanks_rhs(p, x1 + 0.5 * h * a1, x2 + 0.5 * h * b1, u)
            a3, b3 = _tanks_rhs(p, x1 + 0.5 * h * a2, x2 + 0.5 * h * b2, u)
            a4, b4 = _tanks_rhs(p, x1 + h * a3, x2 + h * b3, u)
            x1 += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
            x2 += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
            if x1 > p[4]:
                x2 += p[6] * (x1 - p[4])
                x1 = p[4]
            if x1 < 0.0:
                x1 = 0.0
            if x2 < 0.0:
                x2 = 0.0
            elif x2 > p[5]:
                x2 = p[5]
        if not (math.isfinite(x1) and math.isfinite(x2)):
            return X, t + 1
        X[t + 1, 0] = x1
        X[t + 1, 1] = x2
    return X, -1


@njit(**_opts)
def _upper_rhs(k1, k2, x1, u):
    return -k1 * (math.sqrt(x1) if x1 > 0.0 else 0.0) + k2 * u


@njit(**_opts)
def upper_tank(k1, k2, x1_max, x10, U, dt, substeps):
    T = U.shape[0]
    out = np.empty(T)
    x = x10
    out[0] = x
    h = dt / substeps
    for t in range(T - 1):
        u = U[t]
        for _ in range(substeps):
            a1 = _upper_rhs(k1, k2, x, u)
            a2 = _upper_rhs(k1, k2, x + 0.5 * h * a1, u)
            a3 = _upper_rhs(k1, k2, x + 0.5 * h * a2, u)
            a4 = _upper_rhs(k1, k2, x + h * a3, u)
            x += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
            if x < 0.0:
                x = 0.0
            elif x > x1_max:
                x = x1_max
        out[t + 1] = x
    return out


@njit(**_opts)
def _pp_rhs(p, y, v, u):
    """p = (k_free, c_free, gain, y_rest, k_impact, c_impact, y_contact, y_lo, y_hi)."""
    acc = p[2] * u - p[1] * v - p[0] * (y - p[3])
    if y < p[6]:
        acc += -p[4] * (y - p[6]) - p[5] * v
    return v, acc


@njit(**_opts)
def pickplace(p, x0, U, dt, substeps):
    T = U.shape[0]
    X = np.full((T, 2), np.nan)
    y, v = x0[0], x0[1]
    h = dt / substeps
    X[0, 0] = y
    X[0, 1] = v
    for t in range(T - 1):
        u = U[t]
        for _ in range(substeps):
            a1, b1 = _pp_rhs(p, y, v, u)
            a2, b2 = _pp_rhs(p, y + 0.5 * h * a1, v + 0.5 * h * b1, u)
            a3, b3 = _pp_rhs(p, y + 0.5 * h * a2, v + 0.5 * h * b2, u)
            a4, b4 = _pp_rhs(p, y + h * a3, v + h * b3, u)
            y += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
            v += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
            if y < p[7]:
                y = p[7]
                v = 0.0
            elif y > p[8]:
                y = p[8]
                v = 0.0
        if not (math.isfinite(y) and math.isfinite(v)):
            return X, t + 1
        X[t + 1, 0] = y
        X[t + 1, 1] = v
    return X, -1
