"""Linear ARX baseline: least-squares fit, scored in simulation mode."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError, ParameterError
from ..stls import lstsq
from ..timeseries import Trajectory


@dataclass(frozen=True)
class ArxModel:
    """``y_k = sum a_i y_{k-i} + sum b_j u_{k-nk-j} (+ c)``, i = 1..na, j = 0..nb-1."""

    a: np.ndarray
    b: np.ndarray
    nk: int
    c: float = 0.0

    @property
    def na(self) -> int:
        return self.a.shape[0]

    @property
    def nb(self) -> int:
        return self.b.shape[0]

    @property
    def lag(self) -> int:
        return max(self.na, self.nk + self.nb - 1)

    def to_dict(self) -> dict:
        return {"na": self.na, "nb": self.nb, "nk": self.nk, "a": self.a.tolist(), "b": self.b.tolist(), "c": self.c}


def _check_orders(na, nb, nk):
    if na < 1 or nb < 1:
        raise ParameterError("ARX orders na, nb must be >= 1")
    if nk < 0:
        raise ParameterError("ARX delay nk must be >= 0")


def regressors(y: np.ndarray, u: np.ndarray, na: int, nb: int, nk: int, intercept: bool = False):
    """Regressor matrix and target for rows k = lag..T-1."""
    lag = max(na, nk + nb - 1)
    T = y.shape[0]
    if T - lag < na + nb + int(intercept):
        raise DataError(f"record of {T} samples too short for ARX({na},{nb},{nk})")
    k = np.arange(lag, T)
    cols = [y[k - i] for i in range(1, na + 1)] + [u[k - nk - j] for j in range(nb)]
    if intercept:
        cols.append(np.ones(k.size))
    return np.column_stack(cols), y[k]


def fit_arx(traj: Trajectory, na: int, nb: int, nk: int = 1, intercept: bool = False) -> ArxModel:
    """One-step least squares on the first output and input channels."""
    _check_orders(na, nb, nk)
    if traj.n < 1 or traj.m < 1:
        raise DataError("ARX needs one output and one input channel")
    y = traj.states[:, 0]
    u = traj.inputs[:, 0]
    A, b = regressors(y, u, na, nb, nk, intercept)
    x = lstsq(A, b)
    return ArxModel(a=x[:na].copy(), b=x[na : na + nb].copy(), nk=nk, c=float(x[-1]) if intercept else 0.0)


def simulate_arx(model: ArxModel, u, y_init) -> np.ndarray:
    """Output-feedback simulation; the first ``model.lag`` samples are taken from ``y_init``."""
    u = np.asarray(u, dtype=float).reshape(-1)
    y_init = np.asarray(y_init, dtype=float).reshape(-1)
    T = u.shape[0]
    lag = model.lag
    if y_init.shape[0] < min(lag, T):
        raise DataError(f"need {lag} initial output samples")
    y = np.empty(T)
    y[: min(lag, T)] = y_init[: min(lag, T)]
    a, b = model.a, model.b
    for k in range(lag, T):
        acc = model.c
        for i in range(a.shape[0]):
            acc += a[i] * y[k - 1 - i]
        for j in range(b.shape[0]):
            acc += b[j] * u[k - model.nk - j]
        y[k] = acc
    return y


def simulate_output(model: ArxModel, seg: Trajectory) -> np.ndarray:
    return simulate_arx(model, seg.inputs[:, 0], seg.states[:, 0])
