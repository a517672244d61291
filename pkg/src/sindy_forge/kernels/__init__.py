"""Hot integration loops with a numba path and a pure-numpy fallback.

The compiled path is used when numba imports and ``SINDY_FORGE_DISABLE_NUMBA``
is unset (or "0"). Every public function also takes ``backend="numba"|"numpy"``
to force one path, which is how the tests cross-check them.
"""

from __future__ import annotations

import os

import numpy as np

from . import _numpy

try:
    from . import _numba
except ImportError:  # numba missing or broken
    _numba = None

_DISABLED = os.environ.get("SINDY_FORGE_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")
NUMBA_AVAILABLE = _numba is not None
DEFAULT_BACKEND = "numba" if NUMBA_AVAILABLE and not _DISABLED else "numpy"

__all__ = [
    "DEFAULT_BACKEND",
    "NUMBA_AVAILABLE",
    "boucwen",
    "pickplace",
    "simulate_sparse",
    "tanks",
    "upper_tank",
]


def _impl(backend):
    backend = backend or DEFAULT_BACKEND
    if backend == "numba":
        if _numba is None:
            raise RuntimeError("numba backend requested but numba is not importable")
        return _numba
    if backend == "numpy":
        return _numpy
    raise ValueError(f"unknown backend {backend!r}")


def _f(a, ndim=1):
    a = np.ascontiguousarray(a, dtype=np.float64)
    return a.reshape(-1) if ndim == 1 else a


def simulate_sparse(theta, table, x0, U, dt, substeps, clip_lo, clip_hi, stops=None, backend=None):
    """RK4 of ``x' = theta^T phi(x, u)`` with zero-order-hold inputs.

    States are clipped to ``[clip_lo, clip_hi]`` after every substep. When
    state ``i`` is clipped and ``stops[i] >= 0``, state ``stops[i]`` is set
    to zero (an inelastic end stop for a position/velocity pair).
    Returns ``(X, diverged_at)``; ``diverged_at`` is -1 when all samples are finite.
    """
    nfac, ch, tr, pw, lo, hi = table
    n = np.size(x0)
    stops = np.full(n, -1, dtype=np.int64) if stops is None else np.ascontiguousarray(stops, dtype=np.int64)
    X, bad = _impl(backend).simulate_sparse(
        _f(theta, 2), nfac, ch, tr, pw, _f(lo, 2), _f(hi, 2),
        _f(x0), _f(U, 2), float(dt), int(substeps), _f(clip_lo), _f(clip_hi), stops,
    )
    return X, int(bad)


def boucwen(params, x0, u, dt, substeps, backend=None):
    """params = (m, c, k, alpha, beta, gamma, delta); states (y, ydot, z).

    Returns ``(X, yddot, diverged_at)``.
    """
    X, A, bad = _impl(backend).boucwen(_f(params), _f(x0), _f(u), float(dt), int(substeps))
    return X, A, int(bad)


def tanks(params, x0, u, dt, substeps, backend=None):
    """params = (k1, k2, k3, k4, x1_max, x2_max, overflow_fraction)."""
    X, bad = _impl(backend).tanks(_f(params), _f(x0), _f(u), float(dt), int(substeps))
    return X, int(bad)


def upper_tank(k1, k2, x1_max, x10, u, dt, substeps, backend=None):
    return _impl(backend).upper_tank(float(k1), float(k2), float(x1_max), float(x10), _f(u), float(dt), int(substeps))


def pickplace(params, x0, u, dt, substeps, backend=None):
    """params = (k_free, c_free, gain, y_rest, k_impact, c_impact, y_contact, y_lo, y_hi)."""
    X, bad = _impl(backend).pickplace(_f(params), _f(x0), _f(u), float(dt), int(substeps))
    return X, int(bad)
