"""Identification procedures layered over :mod:`sindy_forge.sindy`.

Each ``*_fit`` returns a :class:`StrategyResult` that knows how to rebuild
its initial state from a fresh record, so validation and test scoring go
through :func:`simulate_output` regardless of the strategy.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .differentiation import DiffSpec, estimate
from .errors import DataError, DivergenceError, ParameterError
from .features import BasisFunction, Factor, FeatureLibrary, boucwen_library, evaluate, make_term, polynomial_library
from .metrics import rmse
from .sindy import SimOptions, SparseModel, _spec_hash, fit, regress, simulate
from .stls import StlsSpec
from .timeseries import Trajectory

log = logging.getLogger(__name__)

SUBSTEPS = 10
DEFAULT_IC_STEPS = 200

KINDS = ("naive", "second_order", "boucwen_hidden", "tanks_hidden")


@dataclass(frozen=True)
class HiddenStateGuess:
    """Physical parameters assumed known for the hidden-state strategies.

    ``params`` holds ``m_L, c_L, k_L`` (Bouc-Wen) or ``k1, k2`` (tanks).
    """

    params: dict
    x1_0: float | None = None
    bounds: dict = field(default_factory=dict)

    def __post_init__(self):
        for k, v in self.params.items():
            if not (v > 0 and math.isfinite(v)):
                raise ParameterError(f"guess parameter {k} must be positive, got {v}")
        for k, (lo, hi) in self.bounds.items():
            if not 0 < lo < hi:
                raise ParameterError(f"bounds for {k} must satisfy 0 < lo < hi")
        if self.x1_0 is not None and self.x1_0 < 0:
            raise ParameterError("x1_0 must be >= 0")
        object.__setattr__(self, "params", dict(self.params))

    def __getitem__(self, key):
        return self.params[key]


@dataclass(frozen=True, eq=False)
class StrategyResult:
    kind: str
    model: SparseModel
    guess: HiddenStateGuess | None
    validation_rmse: float
    diagnostics: dict
    sim_options: SimOptions = SimOptions()
    diff_spec: DiffSpec = DiffSpec()
    ic_grid: tuple | None = None

    def __post_init__(self):
        if not self.validation_rmse >= 0:
            raise ParameterError("validation_rmse must be >= 0")


def _single_output(traj: Trajectory):
    if traj.n != 1:
        raise DataError(f"strategy needs a single observed output channel, got {traj.n}")


def _trace(r) -> dict:
    return {
        "iterations": r.iterations,
        "converged": r.converged,
        "supports": [list(map(int, np.flatnonzero(s))) for s in r.supports],
    }


def _diagnostics(model: SparseModel) -> dict:
    return {f"stls_{model.state_names[j]}": _trace(r) for j, r in enumerate(model.results)}


def second_order_augment(traj: Trajectory, diff_spec: DiffSpec = DiffSpec()) -> Trajectory:
    """States (y, y_dot) with derivatives (y_dot, y_ddot) from the output record."""
    _single_output(traj)
    y = traj.states[:, 0]
    yd = estimate(y, traj.dt, diff_spec)
    ydd = estimate(yd, traj.dt, diff_spec)
    name = traj.state_names[0]
    return Trajectory(
        t0=traj.t0,
        dt=traj.dt,
        states=np.column_stack([y, yd]),
        inputs=traj.inputs,
        derivatives=np.column_stack([yd, ydd]),
        state_names=(name, f"{name}_dot"),
        input_names=traj.input_names,
    )


def unsaturated_rows(y, lo: float, hi: float, tol: float = 0.01, margin: int = 2) -> np.ndarray:
    """Mask of samples away from the known output limits.

    A sample is dropped when it, or any sample within ``margin`` steps, lies
    within ``tol * (hi - lo)`` of a limit; that keeps stencil spikes from
    the end stops out of the regression.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    w = tol * (hi - lo)
    near = (y <= lo + w) | (y >= hi - w)
    if margin > 0 and near.any():
        k = np.ones(2 * margin + 1)
        near = np.convolve(near.astype(float), k, mode="same") > 0
    return ~near


def _linear_term(channel: int, names) -> BasisFunction:
    return make_term([Factor(channel)], names)


def _finish(kind, model, guess, valid, opts, diff_spec, ic_grid, diagnostics) -> StrategyResult:
    res = StrategyResult(kind, model, guess, math.inf, diagnostics, opts, diff_spec, ic_grid)
    if valid is None:
        return dataclasses.replace(res, validation_rmse=0.0)
    try:
        yhat = simulate_output(res, valid)
        score = rmse(valid.states[:, 0], yhat)
    except DivergenceError as exc:
        log.debug("%s validation diverged at sample %d", kind, exc.index)
        score = math.inf
    if not math.isfinite(score):
        score = math.inf
    return dataclasses.replace(res, validation_rmse=score)


def naive_fit(
    traj: Trajectory,
    lib: FeatureLibrary,
    stls_spec: StlsSpec = StlsSpec(),
    diff_spec: DiffSpec = DiffSpec(),
    valid: Trajectory | None = None,
    normalize: bool = False,
    opts: SimOptions = SimOptions(),
    rows: np.ndarray | None = None,
) -> StrategyResult:
    """Plain fit on the observed channels only (the baseline arm).

    ``rows`` optionally masks which samples enter the regression.
    """
    model = fit(traj, lib, stls_spec, diff_spec, normalize=normalize, rows=rows)
    return _finish("naive", model, None, valid, opts, diff_spec, None, _diagnostics(model))


def second_order_fit(
    traj: Trajectory,
    lib: FeatureLibrary | None = None,
    stls_spec: StlsSpec = StlsSpec(),
    diff_spec: DiffSpec = DiffSpec(),
    valid: Trajectory | None = None,
    normalize: bool = False,
    opts: SimOptions = SimOptions(),
    rows: np.ndarray | None = None,
) -> StrategyResult:
    """Derivative-coordinate augmentation: ``y' = y_dot`` is fixed, only
    ``y_dot'`` is learned over ``lib`` (defined on ``(y, y_dot, u...)``)."""
    aug = second_order_augment(traj, diff_spec)
    names = aug.channel_names
    if lib is None:
        lib = polynomial_library(2, aug.m, 2, names)
    if lib.n != 2 or lib.m != aug.m:
        raise ParameterError("second-order library must be defined over (y, y_dot, inputs)")
    if names[1] not in lib.names:
        lib = lib.extend([_linear_term(1, names)])
    phi = evaluate(lib, aug.states, aug.inputs)
    target = aug.derivatives[:, 1]
    if rows is not None:
        phi, target = phi[rows], target[rows]
    theta_z, results = regress(phi, target, stls_spec, normalize)
    theta = np.zeros((len(lib), 2))
    theta[lib.index(names[1]), 0] = 1.0
    theta[:, 1] = theta_z[:, 0]
    model = SparseModel(
        lib, theta, aug.state_names, aug.input_names,
        spec_hash=_spec_hash(lib, stls_spec, diff_spec, {"kind": "second_order", "normalize": normalize}),
        fixed=frozenset({0}),
    )
    diag = {f"stls_{names[1]}": _trace(results[0])}
    return _finish("second_order", model, None, valid, opts, diff_spec, None, diag)


def boucwen_residual(traj: Trajectory, guess: HiddenStateGuess, diff_spec: DiffSpec = DiffSpec()):
    """``(y_dot, y_ddot, z_hat)`` with z_hat = u - c*y_dot - k*y - m*y_ddot."""
    _single_output(traj)
    if traj.m != 1:
        raise DataError("Bouc-Wen strategy needs exactly one input channel")
    y = traj.states[:, 0]
    yd = estimate(y, traj.dt, diff_spec)
    ydd = estimate(yd, traj.dt, diff_spec)
    z = traj.inputs[:, 0] - guess["c_L"] * yd - guess["k_L"] * y - guess["m_L"] * ydd
    return yd, ydd, z


def boucwen_hidden_fit(
    traj: Trajectory,
    guess: HiddenStateGuess,
    stls_spec: StlsSpec = StlsSpec(),
    diff_spec: DiffSpec = DiffSpec(),
    valid: Trajectory | None = None,
    lib: FeatureLibrary | None = None,
    normalize: bool = True,
    opts: SimOptions = SimOptions(),
) -> StrategyResult:
    """Reconstruct z from the force balance, fit ``z'`` on ``(z, y_dot)``, and
    assemble the three-state model with the mechanical rows fixed at the guess.

    ``lib`` is expressed over channels ``(z, y_dot)``; the default is the
    ten-term hysteresis library.
    """
    for key in ("m_L", "c_L", "k_L"):
        if key not in guess.params:
            raise ParameterError(f"Bouc-Wen guess needs {key}")
    lib = lib or boucwen_library()
    if lib.n + lib.m != 2:
        raise ParameterError("z library must be defined over exactly two channels (z, y_dot)")
    yd, _, z = boucwen_residual(traj, guess, diff_spec)
    zd = estimate(z, traj.dt, diff_spec)
    V = np.column_stack([z, yd])
    phi = evaluate(lib, V[:, : lib.n], V[:, lib.n :])
    theta_z, results = regress(phi, zd, stls_spec, normalize)

    y_name, u_name = traj.state_names[0], traj.input_names[0]
    names = (y_name, f"{y_name}_dot", "z", u_name)
    zlib = lib.remap([2, 1], 3, 1, names)
    base = FeatureLibrary(tuple(_linear_term(c, names) for c in range(4)), 3, 1, names)
    full = base.extend(zlib.basis)
    m, c, k = guess["m_L"], guess["c_L"], guess["k_L"]
    theta = np.zeros((len(full), 3))
    theta[1, 0] = 1.0
    theta[:4, 1] = (-k / m, -c / m, -1.0 / m, 1.0 / m)
    for b, coef in zip(zlib.basis, theta_z[:, 0]):
        theta[full.index(b.name), 2] += coef
    model = SparseModel(
        full, theta, names[:3], (u_name,),
        spec_hash=_spec_hash(full, stls_spec, diff_spec, {"kind": "boucwen_hidden", "guess": guess.params, "normalize": normalize}),
        fixed=frozenset({0, 1}),
    )
    diag = {"stls_z": _trace(results[0])}
    diag["zdot_terms"] = {b.name: float(v) for b, v in zip(lib.basis, theta_z[:, 0]) if v != 0.0}
    return _finish("boucwen_hidden", model, guess, valid, opts, diff_spec, None, diag)


def upper_tank_state(guess: HiddenStateGuess, u: np.ndarray, dt: float, x1_max: float, x1_0: float | None = None, substeps: int = SUBSTEPS, backend=None) -> np.ndarray:
    """Open-loop x1 from the guess; depends on the input record only."""
    x10 = guess.x1_0 if x1_0 is None else x1_0
    if x10 is None:
        raise ParameterError("tanks guess needs x1_0")
    if not 0.0 <= x10 <= x1_max:
        raise ParameterError(f"x1_0={x10} outside [0, {x1_max}]")
    return kernels.upper_tank(guess["k1"], guess["k2"], x1_max, x10, np.asarray(u, dtype=float).reshape(-1), dt, substeps, backend=backend)


def tanks_hidden_fit(
    traj: Trajectory,
    guess: HiddenStateGuess,
    lib: FeatureLibrary | None = None,
    stls_spec: StlsSpec = StlsSpec(),
    diff_spec: DiffSpec = DiffSpec(),
    valid: Trajectory | None = None,
    x1_max: float = 10.0,
    ic_grid: tuple | None = None,
    normalize: bool = False,
    opts: SimOptions = SimOptions(),
) -> StrategyResult:
    """Simulate the upper tank from the guess, then fit ``y'`` over
    ``(y, x1, u)``. The assembled model carries the x1 row at the guess and
    clamps x1 to ``[0, x1_max]``.
    """
    for key in ("k1", "k2"):
        if key not in guess.params:
            raise ParameterError(f"tanks guess needs {key}")
    _single_output(traj)
    if traj.m != 1:
        raise DataError("tanks strategy needs exactly one input channel")
    y_name, u_name = traj.state_names[0], traj.input_names[0]
    names = (y_name, "x1", u_name)
    if lib is None:
        lib = polynomial_library(2, 1, 2, names)
    if lib.n != 2 or lib.m != 1:
        raise ParameterError("tanks library must be defined over (y, x1, u)")
    x1 = upper_tank_state(guess, traj.inputs[:, 0], traj.dt, x1_max, substeps=opts.substeps, backend=opts.backend)
    yd = estimate(traj.states[:, 0], traj.dt, diff_spec)
    phi = evaluate(lib, np.column_stack([traj.states[:, 0], x1]), traj.inputs)
    theta_y, results = regress(phi, yd, stls_spec, normalize)

    if not lib.has_custom:
        lib = lib.remap([0, 1, 2], 2, 1, names)
    # extend() skips terms lib already has, so the x1 row reuses them
    sq = make_term([Factor(1, "sqrt", 1, 0.0, x1_max)], names)
    full = lib.extend([sq, _linear_term(2, names)])
    theta = np.zeros((len(full), 2))
    theta[: len(lib), 0] = theta_y[:, 0]
    theta[full.index(sq.name), 1] = -guess["k1"]
    theta[full.index(u_name), 1] = guess["k2"]
    model = SparseModel(
        full, theta, names[:2], (u_name,),
        spec_hash=_spec_hash(full, stls_spec, diff_spec, {"kind": "tanks_hidden", "guess": guess.params, "x1_0": guess.x1_0, "normalize": normalize}),
        fixed=frozenset({1}),
    )
    opts = dataclasses.replace(opts, clip={**(opts.clip or {}), "x1": (0.0, x1_max)})
    grid = tuple(ic_grid) if ic_grid is not None else (0.0, x1_max, DEFAULT_IC_STEPS)
    diag = {f"stls_{y_name}": _trace(results[0])}
    return _finish("tanks_hidden", model, guess, valid, opts, diff_spec, grid, diag)


def estimate_initial_hidden(model: SparseModel, y0: float, ydot0: float, u0=(), grid=(0.0, 10.0, DEFAULT_IC_STEPS), observed: int = 0, hidden: int = 1) -> float:
    """Grid value of the hidden state that best explains ``y'(0)``.

    Minimises ``(ydot0 - f_observed(y0, x_h, u0))**2`` over
    ``linspace(lo, hi, steps)``; the first (smallest) minimiser wins ties.
    """
    lo, hi, steps = grid
    steps = int(steps)
    if lo < 0 or hi < lo:
        raise ParameterError("grid bounds must satisfy 0 <= lo <= hi")
    if steps < 2:
        raise ParameterError("grid needs at least 2 points")
    cand = np.linspace(lo, hi, steps)
    X = np.zeros((steps, model.n))
    X[:, observed] = y0
    X[:, hidden] = cand
    u = np.atleast_1d(np.asarray(u0, dtype=float))
    U = np.tile(u, (steps, 1)) if u.size else np.zeros((steps, 0))
    with np.errstate(all="ignore"):
        pred = evaluate(model.library, X, U) @ model.theta[:, observed]
    obj = (ydot0 - pred) ** 2
    obj = np.where(np.isfinite(obj), obj, np.inf)
    return float(cand[int(np.argmin(obj))])


def initial_state(res: StrategyResult, seg: Trajectory) -> np.ndarray:
    """Initial state for simulating ``res.model`` over the record ``seg``.

    Derivative coordinates come from the stencil on the first samples of
    ``seg``; hidden states from the strategy's reconstruction rule.
    """
    y = seg.states[:, 0]
    if res.kind == "naive":
        return seg.states[0].copy()
    if len(seg) < 3:
        raise DataError("need at least 3 samples to initialise derivative coordinates")
    yd = estimate(y, seg.dt, res.diff_spec)
    if res.kind == "second_order":
        return np.array([y[0], yd[0]])
    if res.kind == "boucwen_hidden":
        _, _, z = boucwen_residual(seg, res.guess, res.diff_spec)
        return np.array([y[0], yd[0], z[0]])
    if res.kind == "tanks_hidden":
        x1 = estimate_initial_hidden(res.model, y[0], yd[0], seg.inputs[0], res.ic_grid)
        return np.array([y[0], x1])
    raise ParameterError(f"unknown strategy kind {res.kind!r}")


def simulate_output(res: StrategyResult, seg: Trajectory, x0=None) -> np.ndarray:
    """Open-loop simulated output over ``seg`` using its recorded input only."""
    x0 = initial_state(res, seg) if x0 is None else x0
    sim = simulate(res.model, x0, seg, res.sim_options)
    return sim.states[:, 0]


__all__ = [
    "HiddenStateGuess",
    "KINDS",
    "StrategyResult",
    "boucwen_hidden_fit",
    "boucwen_residual",
    "estimate_initial_hidden",
    "initial_state",
    "naive_fit",
    "second_order_augment",
    "second_order_fit",
    "simulate_output",
    "tanks_hidden_fit",
    "unsaturated_rows",
    "upper_tank_state",
]
