"""Seeded hyperparameter search (random sampling, optional successive halving).

All sample points are drawn before any objective call, so the trial set does
not depend on ``jobs`` or on completion order. Each dimension draws from its
own stream keyed by its name: adding a dimension leaves the others unchanged.
"""

from __future__ import annotations

import logging
import math
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from ..errors import ConfigError, DivergenceError, NoFeasiblePointError, SindyForgeError

log = logging.getLogger(__name__)

METHODS = ("random", "halving")


@dataclass(frozen=True)
class Dim:
    kind: str  # "loguniform" | "uniform" | "categorical"
    lo: float = 0.0
    hi: float = 0.0
    choices: tuple = ()

    def __post_init__(self):
        if self.kind == "categorical":
            if not self.choices:
                raise ConfigError("categorical dimension needs at least one choice")
            object.__setattr__(self, "choices", tuple(self.choices))
        elif self.kind in ("uniform", "loguniform"):
            if not self.lo < self.hi:
                raise ConfigError(f"{self.kind} dimension needs lo < hi, got [{self.lo}, {self.hi}]")
            if self.kind == "loguniform" and self.lo <= 0:
                raise ConfigError("loguniform dimension needs lo > 0")
        else:
            raise ConfigError(f"unknown dimension kind {self.kind!r}")

    def sample(self, rng: np.random.Generator, size: int) -> list:
        if self.kind == "uniform":
            return [float(v) for v in rng.uniform(self.lo, self.hi, size)]
        if self.kind == "loguniform":
            return [float(v) for v in np.exp(rng.uniform(math.log(self.lo), math.log(self.hi), size))]
        idx = rng.integers(0, len(self.choices), size)
        return [self.choices[i] for i in idx]

    def to_list(self) -> list:
        return ["categorical", list(self.choices)] if self.kind == "categorical" else [self.kind, self.lo, self.hi]


def uniform(lo, hi) -> Dim:
    return Dim("uniform", float(lo), float(hi))


def log_uniform(lo, hi) -> Dim:
    return Dim("loguniform", float(lo), float(hi))


def categorical(choices) -> Dim:
    return Dim("categorical", choices=tuple(choices))


def dim_from_config(spec) -> Dim:
    """``["loguniform", lo, hi]``, ``["uniform", lo, hi]`` or ``["categorical", [..]]``."""
    if isinstance(spec, Dim):
        return spec
    if not isinstance(spec, (list, tuple)) or not spec:
        raise ConfigError(f"bad search dimension {spec!r}")
    kind = spec[0]
    if kind == "categorical":
        if len(spec) != 2 or not isinstance(spec[1], (list, tuple)):
            raise ConfigError(f"categorical dimension must be ['categorical', [choices]], got {spec!r}")
        return categorical(spec[1])
    if len(spec) != 3:
        raise ConfigError(f"{kind} dimension must be [kind, lo, hi], got {spec!r}")
    return Dim(kind, float(spec[1]), float(spec[2]))


@dataclass(frozen=True)
class SearchSpace:
    dims: dict
    budget: int = 200
    seed: int = 0
    method: str = "random"
    min_fidelity: float = 0.25

    def __post_init__(self):
        if not isinstance(self.budget, int) or self.budget < 1:
            raise ConfigError(f"search budget must be an integer >= 1, got {self.budget!r}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown search method {self.method!r}")
        if not 0 < self.min_fidelity <= 1:
            raise ConfigError("min_fidelity must be in (0, 1]")
        object.__setattr__(self, "dims", {k: dim_from_config(v) for k, v in self.dims.items()})

    def draw(self) -> list[dict]:
        cols = {}
        for name, d in self.dims.items():
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, zlib.crc32(name.encode())]))
            cols[name] = d.sample(rng, self.budget)
        return [{k: cols[k][i] for k in self.dims} for i in range(self.budget)]


@dataclass
class TrialRecord:
    trial_id: int
    point: dict
    validation_rmse: float
    wall_time: float
    status: str  # "ok" | "diverged" | "error"
    fidelity: float = 1.0
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "trial_id": self.trial_id,
            "point": self.point,
            "validation_rmse": self.validation_rmse,
            "status": self.status,
            "fidelity": self.fidelity,
            "message": self.message,
            "wall_time": self.wall_time,
        }


@dataclass
class SearchResult:
    best_point: dict
    best_rmse: float
    best_trial: int
    trials: list = field(default_factory=list)
    payload: Any = None  # whatever the objective attached to the best trial


def _run_one(objective, trial_id, point, fidelity):
    t0 = time.perf_counter()
    payload = None
    try:
        out = objective(point, fidelity)
        score, payload = out if isinstance(out, tuple) else (out, None)
        score = float(score)
        status = "ok" if math.isfinite(score) else "diverged"
        msg = ""
    except DivergenceError as exc:
        score, status, msg = math.inf, "diverged", str(exc)
    except (SindyForgeError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        score, status, msg = math.inf, "error", f"{type(exc).__name__}: {exc}"
    if not math.isfinite(score):
        score = math.inf
    rec = TrialRecord(trial_id, dict(point), score, time.perf_counter() - t0, status, fidelity, msg)
    return rec, payload


def _evaluate(objective, batch, fidelity, jobs):
    if jobs > 1 and len(batch) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(lambda tp: _run_one(objective, tp[0], tp[1], fidelity), batch))
    else:
        out = [_run_one(objective, i, p, fidelity) for i, p in batch]
    return sorted(out, key=lambda r: r[0].trial_id)


def search(space: SearchSpace, objective: Callable, jobs: int = 1) -> SearchResult:
    """Minimise ``objective(point, fidelity)`` over ``space``.

    ``objective`` returns a validation RMSE, or ``(rmse, payload)``. The
    fidelity argument is 1.0 except on the early rungs of successive
    halving. Ties go to the lower trial id.
    """
    points = space.draw()
    batch = list(enumerate(points))
    trials: list[TrialRecord] = []
    payloads = {}
    if space.method == "halving":
        rungs = max(0, int(math.floor(math.log2(1.0 / space.min_fidelity))))
        fid = 2.0**-rungs
        while fid < 1.0 and len(batch) > 1:
            done = _evaluate(objective, batch, fid, jobs)
            trials.extend(r for r, _ in done)
            scores = np.array([r.validation_rmse for r, _ in done])
            finite = scores[np.isfinite(scores)]
            if finite.size == 0:
                break
            med = float(np.median(finite))
            batch = [(r.trial_id, r.point) for r, _ in done if r.validation_rmse <= med]
            log.debug("halving rung fidelity=%g kept %d", fid, len(batch))
            fid *= 2.0
    for rec, payload in _evaluate(objective, batch, 1.0, jobs):
        trials.append(rec)
        payloads[rec.trial_id] = payload
    full = [r for r in trials if r.fidelity == 1.0 and math.isfinite(r.validation_rmse)]
    if not full:
        raise NoFeasiblePointError(f"all {len(points)} trials diverged or failed")
    best = min(full, key=lambda r: (r.validation_rmse, r.trial_id))
    return SearchResult(dict(best.point), best.validation_rmse, best.trial_id, trials, payloads.get(best.trial_id))
