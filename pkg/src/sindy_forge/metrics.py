"""Scores for simulated outputs against a measured test record.

``bfr`` follows the clipped squared-error ratio literally: 100 * max(0, 1 -
SSE/SST), with SST taken around the mean of the *test* output. This is the
coefficient of determination, not the norm-ratio fit index some toolboxes
call BFR.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class Score:
    bfr: float
    rmse: float
    n_samples: int


def _pair(y, yhat, min_len: int):
    y = np.asarray(y, dtype=float).reshape(-1)
    yhat = np.asarray(yhat, dtype=float).reshape(-1)
    if y.shape != yhat.shape:
        raise DataError(f"length mismatch: {y.shape[0]} measured vs {yhat.shape[0]} simulated")
    if y.shape[0] < min_len:
        raise DataError(f"need at least {min_len} samples, got {y.shape[0]}")
    return y, yhat


def bfr(y, yhat) -> float:
    """Best fit ratio in percent, clipped to [0, 100]."""
    y, yhat = _pair(y, yhat, 2)
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst == 0.0:
        raise DataError("measured output is constant; BFR is undefined")
    sse = float(np.sum((y - yhat) ** 2))
    if not np.isfinite(sse) or sse >= sst:
        return 0.0
    return 100.0 * (1.0 - sse / sst)


def rmse(y, yhat) -> float:
    y, yhat = _pair(y, yhat, 1)
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def score(y, yhat) -> Score:
    return Score(bfr(y, yhat), rmse(y, yhat), int(np.size(y)))
