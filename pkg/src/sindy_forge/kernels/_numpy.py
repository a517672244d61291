"""Pure-numpy fallback for the compiled integrators (same signatures)."""

import numpy as np


def _phi_factory(nfac, ch, tr, pw, lo, hi):
    used = np.arange(ch.shape[1])[None, :] < nfac[:, None]
    pw = np.where(used, pw, 0)
    is_abs = tr == 1
    is_sqrt = tr == 2

    def phi(v):
        vals = v[ch]
        vals = np.where(is_abs, np.abs(vals), vals)
        vals = np.where(is_sqrt, np.sqrt(np.clip(vals, lo, hi)), vals)
        return np.prod(vals**pw, axis=1)

    return phi


def phi_point(nfac, ch, tr, pw, lo, hi, v, out):
    out[:] = _phi_factory(nfac, ch, tr, pw, lo, hi)(np.asarray(v, dtype=float))


def simulate_sparse(theta, nfac, ch, tr, pw, lo, hi, x0, U, dt, substeps, clip_lo, clip_hi, stops):
    T = U.shape[0]
    n = x0.shape[0]
    X = np.full((T, n), np.nan)
    X[0] = x0
    phi = _phi_factory(nfac, ch, tr, pw, lo, hi)
    theta_t = np.ascontiguousarray(theta.T)
    x = np.array(x0, dtype=float)
    h = dt / substeps
    has_stop = stops >= 0
    with np.errstate(all="ignore"):
        for t in range(T - 1):
            u = U[t]

            def f(xx):
                return theta_t @ phi(np.concatenate((xx, u)))

            for _ in range(substeps):
                a = f(x)
                b = f(x + 0.5 * h * a)
                c = f(x + 0.5 * h * b)
                d = f(x + h * c)
                x = x + h / 6.0 * (a + 2.0 * b + 2.0 * c + d)
                hit = ((x < clip_lo) | (x > clip_hi)) & has_stop
                x = np.clip(x, clip_lo, clip_hi)
                if hit.any():
                    x[stops[hit]] = 0.0
            if not np.isfinite(x).all():
                return X, t + 1
            X[t + 1] = x
    return X, -1


def _bw_rhs(p, s, u):
    m, c, k, alpha, beta, gamma, delta = p
    y, v, z = s
    return np.array([v, (u - c * v - k * y - z) / m, alpha * v - beta * (gamma * abs(v) * z + delta * v * abs(z))])


def boucwen(p, x0, U, dt, substeps):
    T = U.shape[0]
    X = np.full((T, 3), np.nan)
    A = np.full(T, np.nan)
    s = np.array(x0, dtype=float)
    h = dt / substeps
    with np.errstate(all="ignore"):
        for t in range(T):
            X[t] = s
            A[t] = _bw_rhs(p, s, U[t])[1]
            if t == T - 1:
                break
            u = U[t]
            for _ in range(substeps):
                a = _bw_rhs(p, s, u)
                b = _bw_rhs(p, s + 0.5 * h * a, u)
                c = _bw_rhs(p, s + 0.5 * h * b, u)
                d = _bw_rhs(p, s + h * c, u)
                s = s + h / 6.0 * (a + 2.0 * b + 2.0 * c + d)
            if not np.isfinite(s).all():
                return X, A, t + 1
    return X, A, -1


def _tanks_rhs(p, s, u):
    r = np.sqrt(np.maximum(s, 0.0))
    return np.array([-p[0] * r[0] + p[1] * u, p[2] * r[0] - p[3] * r[1]])


def tanks(p, x0, U, dt, substeps):
    T = U.shape[0]
    X = np.full((T, 2), np.nan)
    s = np.array(x0, dtype=float)
    X[0] = s
    h = dt / substeps
    with np.errstate(all="ignore"):
        for t in range(T - 1):
            u = U[t]
            for _ in range(substeps):
                a = _tanks_rhs(p, s, u)
                b = _tanks_rhs(p, s + 0.5 * h * a, u)
                c = _tanks_rhs(p, s + 0.5 * h * b, u)
                d = _tanks_rhs(p, s + h * c, u)
                s = s + h / 6.0 * (a + 2.0 * b + 2.0 * c + d)
                if s[0] > p[4]:
                    s[1] += p[6] * (s[0] - p[4])
                    s[0] = p[4]
                s = np.clip(s, 0.0, [np.inf, p[5]])
            if not np.isfinite(s).all():
                return X, t + 1
            X[t + 1] = s
    return X, -1


def upper_tank(k1, k2, x1_max, x10, U, dt, substeps):
    T = U.shape[0]
    out = np.empty(T)
    x = float(x10)
    out[0] = x
    h = dt / substeps

    def f(xx, u):
        return -k1 * np.sqrt(max(xx, 0.0)) + k2 * u

    for t in range(T - 1):
        u = U[t]
        for _ in range(substeps):
            a = f(x, u)
            b = f(x + 0.5 * h * a, u)
            c = f(x + 0.5 * h * b, u)
            d = f(x + h * c, u)
            x = min(max(x + h / 6.0 * (a + 2.0 * b + 2.0 * c + d), 0.0), x1_max)
        out[t + 1] = x
    return out


def _pp_rhs(p, s, u):
    y, v = s
    acc = p[2] * u - p[1] * v - p[0] * (y - p[3])
    if y < p[6]:
        acc += -p[4] * (y - p[6]) - p[5] * v
    return np.array([v, acc])


def pickplace(p, x0, U, dt, substeps):
    T = U.shape[0]
    X = np.full((T, 2), np.nan)
    s = np.array(x0, dtype=float)
    X[0] = s
    h = dt / substeps
    with np.errstate(all="ignore"):
        for t in range(T - 1):
            u = U[t]
            for _ in range(substeps):
                a = _pp_rhs(p, s, u)
                b = _pp_rhs(p, s + 0.5 * h * a, u)
                c = _pp_rhs(p, s + 0.5 * h * b, u)
                d = _pp_rhs(p, s + h * c, u)
                s = s + h / 6.0 * (a + 2.0 * b + 2.0 * c + d)
                if s[0] < p[7]:
                    s = np.array([p[7], 0.0])
                elif s[0] > p[8]:
                    s = np.array([p[8], 0.0])
            if not np.isfinite(s).all():
                return X, t + 1
            X[t + 1] = s
    return X, -1
