"""Derivative estimation from sampled states.

``central`` is the classic second-order stencil (one-sided second-order at
both ends). ``smoothed`` post-processes that estimate g by solving

    min_v ||v - g||^2 + lambda_d * ||D2 v||^2

with D2 the second-difference operator in sample units, so lambda_d is
dimensionless and unaffected by a change of time units.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg import solveh_banded

from .errors import DataError, ParameterError, StateError
from .timeseries import Trajectory

METHODS = ("central", "smoothed")


@dataclass(frozen=True)
class DiffSpec:
    method: str = "central"
    lambda_d: float = 0.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ParameterError(f"unknown differentiation method {self.method!r}")
        if not self.lambda_d >= 0:
            raise ParameterError("lambda_d must be nonnegative")


def central_difference(y: np.ndarray, dt: float) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape[0] < 3:
        raise DataError("differentiation needs at least 3 samples")
    return np.gradient(y, dt, axis=0, edge_order=2)


def _smoothing_bands(T: int, lam: float) -> np.ndarray:
    """Upper banded form of I + lam * D2^T D2 (pentadiagonal, SPD)."""
    d2 = sparse.diags([1.0, -2.0, 1.0], [0, 1, 2], shape=(T - 2, T))
    gram = (d2.T @ d2).todia()
    ab = np.zeros((3, T))
    ab[2] = 1.0 + lam * gram.diagonal(0)
    ab[1, 1:] = lam * gram.diagonal(1)
    ab[0, 2:] = lam * gram.diagonal(2)
    return ab


def smooth(g: np.ndarray, lam: float) -> np.ndarray:
    """Tikhonov smoothing of each column of ``g``."""
    g = np.asarray(g, dtype=float)
    if lam == 0:
        return g.copy()
    T = g.shape[0]
    if T < 3:
        raise DataError("smoothing needs at least 3 samples")
    return solveh_banded(_smoothing_bands(T, lam), g, check_finite=False)


def estimate(y: np.ndarray, dt: float, spec: DiffSpec = DiffSpec()) -> np.ndarray:
    """Derivative estimate of each column of ``y`` (or of a 1-D signal)."""
    g = central_difference(y, dt)
    if spec.method == "smoothed":
        g = smooth(g, spec.lambda_d)
    return g


def differentiate(traj: Trajectory, spec: DiffSpec = DiffSpec()) -> Trajectory:
    if len(traj) < 3:
        raise DataError("differentiation needs at least 3 samples")
    return traj.replace(derivatives=estimate(traj.states, traj.dt, spec))


def derivative_of_derivative(traj: Trajectory, spec: DiffSpec = DiffSpec()) -> Trajectory:
    """Trajectory whose states are ``traj.derivatives`` and whose derivatives
    are the second-derivative estimates."""
    if traj.derivatives is None:
        raise StateError("derivatives are not populated; call differentiate first")
    return Trajectory(
        t0=traj.t0,
        dt=traj.dt,
        states=traj.derivatives,
        inputs=traj.inputs,
        derivatives=estimate(traj.derivatives, traj.dt, spec),
        state_names=tuple(f"{s}_dot" for s in traj.state_names),
        input_names=traj.input_names,
    )
