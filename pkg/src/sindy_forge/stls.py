"""Sequential Thresholded Least Squares.

Each column of the coefficient matrix is solved independently: a least
squares fit on the current support, then every coefficient with
``|theta_h| < lambda`` is dropped, until the support stops changing.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DataError, ParameterError

RANK_RTOL = 1e-12
RIDGE_SCALE = 1e-10


@dataclass(frozen=True)
class StlsSpec:
    lam: float = 0.1
    max_iter: int | None = None  # None -> library size
    ridge_eps: float = 0.0

    def __post_init__(self):
        if not self.lam >= 0:
            raise ParameterError("threshold must be nonnegative")
        if self.max_iter is not None and self.max_iter < 1:
            raise ParameterError("max_iter must be >= 1")
        if not self.ridge_eps >= 0:
            raise ParameterError("ridge_eps must be nonnegative")


@dataclass(frozen=True)
class StlsResult:
    theta: np.ndarray
    support: tuple[int, ...]
    iterations: int
    converged: bool
    residual_sse: float
    supports: tuple[tuple[int, ...], ...] = ()  # support after every iteration


def lstsq(A: np.ndarray, b: np.ndarray, ridge_eps: float = 0.0) -> np.ndarray:
    """Least squares via pivoted QR; ridge-jittered normal equations when
    rank deficient (or when ``ridge_eps`` > 0 is requested)."""
    k = A.shape[1]
    if k == 0:
        return np.zeros(0)
    # Column equilibration: rank decisions must not depend on feature units.
    norms = np.linalg.norm(A, axis=0)
    zero = norms == 0
    scale = np.where(zero, 1.0, norms)
    As = A / scale
    if ridge_eps == 0.0 and not zero.any():
        Q, R, piv = scipy.linalg.qr(As, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        if diag.size == k and diag[-1] > RANK_RTOL * diag[0] * max(A.shape):
            x = np.empty(k)
            x[piv] = scipy.linalg.solve_triangular(R, Q.T @ b)
            return x / scale
    if ridge_eps > 0:
        # User-requested jitter acts on the raw problem.
        try:
            return scipy.linalg.solve(A.T @ A + ridge_eps * np.eye(k), A.T @ b, assume_a="pos")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            return np.linalg.lstsq(A, b, rcond=None)[0]
    gram = As.T @ As
    eps = RIDGE_SCALE * np.trace(gram) / k
    if eps <= 0:
        return np.zeros(k)
    try:
        x = scipy.linalg.solve(gram + eps * np.eye(k), As.T @ b, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        x = np.linalg.lstsq(As, b, rcond=None)[0]
    x[zero] = 0.0
    return x / scale


def stls_solve(phi: np.ndarray, target: np.ndarray, spec: StlsSpec = StlsSpec()) -> StlsResult:
    phi = np.asarray(phi, dtype=float)
    target = np.asarray(target, dtype=float).reshape(-1)
    if phi.ndim != 2 or phi.shape[0] != target.shape[0]:
        raise DataError(f"shape mismatch: phi {phi.shape}, target {target.shape}")
    if phi.shape[0] < 1:
        raise DataError("need at least one sample")
    if not (np.isfinite(phi).all() and np.isfinite(target).all()):
        raise DataError("phi and target must be finite")
    n_phi = phi.shape[1]
    max_iter = spec.max_iter or max(n_phi, 1)

    support = np.arange(n_phi)
    theta = np.zeros(n_phi)
    history = []
    converged = False
    it = 0
    while it < max_iter:
        if support.size == 0:
            converged = True
            break
        it += 1
        coef = lstsq(phi[:, support], target, spec.ridge_eps)
        theta = np.zeros(n_phi)
        theta[support] = coef
        keep = support[np.abs(coef) >= spec.lam]
        history.append(tuple(int(i) for i in keep))
        if keep.size == support.size:
            converged = True
            break
        support = keep
        if support.size == 0:
            theta = np.zeros(n_phi)
            converged = True
            break
    if not converged:
        # Out of iterations: enforce the threshold on the last solve.
        theta[np.abs(theta) < spec.lam] = 0.0
        support = np.flatnonzero(theta)
    resid = target - phi @ theta
    return StlsResult(
        theta=theta,
        support=tuple(int(i) for i in support),
        iterations=it,
        converged=converged,
        residual_sse=float(resid @ resid),
        supports=tuple(history),
    )


def stls_solve_multi(phi: np.ndarray, targets: np.ndarray, spec: StlsSpec = StlsSpec(), jobs: int = 1) -> list[StlsResult]:
    """Column-wise :func:`stls_solve`; results are ordered by column."""
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        targets = targets[:, None]
    if targets.shape[0] != np.shape(phi)[0]:
        raise DataError("phi and targets must have the same number of rows")
    cols = range(targets.shape[1])
    if jobs > 1 and targets.shape[1] > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(lambda j: stls_solve(phi, targets[:, j], spec), cols))
    return [stls_solve(phi, targets[:, j], spec) for j in cols]


def objective(phi: np.ndarray, target: np.ndarray, support, lam: float) -> float:
    """Sparse fitting objective: SSE of the restricted least squares fit plus
    ``lam**2`` per active term."""
    support = list(support)
    if support:
        coef = lstsq(phi[:, support], target)
        resid = target - phi[:, support] @ coef
    else:
        resid = np.asarray(target, dtype=float)
    return float(resid @ resid) + lam**2 * len(support)
