"""Sparse continuous-time models: fitting, evaluation, simulation and rendering."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .differentiation import DiffSpec, differentiate
from .errors import DataError, DivergenceError, ParameterError
from .features import FeatureLibrary, evaluate, library_from_dict
from .stls import StlsResult, StlsSpec, stls_solve_multi
from .timeseries import Trajectory


@dataclass(frozen=True, eq=False)
class SparseModel:
    library: FeatureLibrary
    theta: np.ndarray  # n_phi x n
    state_names: tuple[str, ...]
    input_names: tuple[str, ...] = ()
    spec_hash: str = ""
    fixed: frozenset = frozenset()  # indices of equations not produced by regression
    results: tuple[StlsResult, ...] = field(default=(), repr=False)

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        if theta.ndim == 1:
            theta = theta[:, None]
        if theta.shape != (len(self.library), len(self.state_names)):
            raise ParameterError(f"theta shape {theta.shape} does not match library size {len(self.library)} x {len(self.state_names)} states")
        if self.library.n != len(self.state_names) or self.library.m != len(self.input_names):
            raise ParameterError("library dimensions do not match state/input names")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "state_names", tuple(self.state_names))
        object.__setattr__(self, "input_names", tuple(self.input_names))
        object.__setattr__(self, "fixed", frozenset(self.fixed))

    @property
    def n(self) -> int:
        return len(self.state_names)

    @property
    def m(self) -> int:
        return len(self.input_names)

    def with_theta(self, theta) -> "SparseModel":
        return dataclasses.replace(self, theta=theta, results=())

    def terms(self, state: int | str) -> list[tuple[str, float]]:
        j = self.state_names.index(state) if isinstance(state, str) else state
        return [(b.name, float(c)) for b, c in zip(self.library.basis, self.theta[:, j]) if c != 0.0]

    def coefficient(self, state: int | str, basis: str) -> float:
        j = self.state_names.index(state) if isinstance(state, str) else state
        return float(self.theta[self.library.index(basis), j])


@dataclass(frozen=True)
class SimOptions:
    substeps: int = 10
    clip: dict | None = None  # state name or index -> (lo, hi)
    stops: dict | None = None  # clipped state -> state zeroed when the clip engages
    backend: str | None = None

    def __post_init__(self):
        if self.substeps < 1:
            raise ParameterError("substeps must be >= 1")


def _spec_hash(lib: FeatureLibrary, stls_spec: StlsSpec, diff_spec: DiffSpec, extra=None) -> str:
    doc = {
        "library": lib.names,
        "stls": dataclasses.asdict(stls_spec),
        "diff": dataclasses.asdict(diff_spec),
        "extra": extra,
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True, default=repr).encode()).hexdigest()[:16]


def _rms(a: np.ndarray) -> np.ndarray:
    r = np.sqrt(np.mean(a**2, axis=0))
    return np.where(r > 0, r, 1.0)


def regress(phi: np.ndarray, targets: np.ndarray, stls_spec: StlsSpec, normalize: bool = False, jobs: int = 1):
    """STLS on ``phi`` for each target column; returns ``(theta, results)``.

    With ``normalize`` library columns and targets are scaled to unit RMS
    first, so the threshold compares each term's relative contribution
    instead of raw coefficients; ``theta`` is returned in original units.
    """
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        targets = targets[:, None]
    if not normalize:
        results = stls_solve_multi(phi, targets, stls_spec, jobs=jobs)
        theta = np.column_stack([r.theta for r in results]) if results else np.zeros((phi.shape[1], 0))
        return theta, tuple(results)
    cs, ts = _rms(phi), _rms(targets)
    results = stls_solve_multi(phi / cs, targets / ts, stls_spec, jobs=jobs)
    theta = np.column_stack([r.theta for r in results]) if results else np.zeros((phi.shape[1], 0))
    return theta / cs[:, None] * ts[None, :], tuple(results)


def fit(
    traj: Trajectory,
    lib: FeatureLibrary,
    stls_spec: StlsSpec = StlsSpec(),
    diff_spec: DiffSpec = DiffSpec(),
    normalize: bool = False,
    jobs: int = 1,
    rows: np.ndarray | None = None,
) -> SparseModel:
    """Regress the state derivatives of ``traj`` on ``lib``.

    Derivatives are estimated with ``diff_spec`` when the trajectory has none,
    always on the full record; ``rows`` (boolean mask or indices) then selects
    the samples used in the regression. See :func:`regress` for ``normalize``.
    """
    if traj.derivatives is None:
        traj = differentiate(traj, diff_spec)
    phi = evaluate(lib, traj.states, traj.inputs)
    target = traj.derivatives
    if rows is not None:
        phi, target = phi[rows], target[rows]
    theta, results = regress(phi, target, stls_spec, normalize, jobs)
    return SparseModel(
        library=lib,
        theta=theta,
        state_names=traj.state_names,
        input_names=traj.input_names,
        spec_hash=_spec_hash(lib, stls_spec, diff_spec, {"normalize": normalize}),
        results=tuple(results),
    )


def rhs(model: SparseModel, x, u=()) -> np.ndarray:
    """Theta^T phi(x, u); accepts a single point or row-stacked points."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    U = u.reshape(X.shape[0], -1) if u.size else np.zeros((X.shape[0], 0))
    out = evaluate(model.library, X, U) @ model.theta
    return out[0] if single else out


def _clip_bounds(model: SparseModel, clip) -> tuple[np.ndarray, np.ndarray]:
    lo = np.full(model.n, -np.inf)
    hi = np.full(model.n, np.inf)
    for key, (a, b) in (clip or {}).items():
        j = _state_index(model, key)
        lo[j] = -np.inf if a is None else a
        hi[j] = np.inf if b is None else b
    return lo, hi


def _state_index(model: SparseModel, key) -> int:
    return model.state_names.index(key) if isinstance(key, str) else int(key)


def _stops(model: SparseModel, stops) -> np.ndarray:
    out = np.full(model.n, -1, dtype=np.int64)
    for a, b in (stops or {}).items():
        out[_state_index(model, a)] = _state_index(model, b)
    return out


def _simulate_python(model, x0, U, dt, opts, lo, hi, stops):
    """Reference path for libraries with custom (uncompilable) terms."""
    T = U.shape[0]
    X = np.full((T, model.n), np.nan)
    x = np.array(x0, dtype=float)
    X[0] = x
    h = dt / opts.substeps
    with np.errstate(all="ignore"):
        for t in range(T - 1):
            u = U[t]
            for _ in range(opts.substeps):
                a = rhs(model, x, u)
                b = rhs(model, x + 0.5 * h * a, u)
                c = rhs(model, x + 0.5 * h * b, u)
                d = rhs(model, x + h * c, u)
                x = x + h / 6.0 * (a + 2 * b + 2 * c + d)
                hit = ((x < lo) | (x > hi)) & (stops >= 0)
                x = np.clip(x, lo, hi)
                x[stops[hit]] = 0.0
            if not np.isfinite(x).all():
                return X, t + 1
            X[t + 1] = x
    return X, -1


def simulate(model: SparseModel, x0, inputs, opts: SimOptions = SimOptions(), *, dt: float | None = None, t0: float = 0.0) -> Trajectory:
    """Open-loop RK4 simulation on the input sample grid.

    ``inputs`` is a Trajectory (its inputs, dt and t0 are used) or a T x m
    array together with ``dt``. Raises :class:`DivergenceError` when a state
    becomes non-finite.
    """
    if isinstance(inputs, Trajectory):
        U, dt, t0 = inputs.inputs, inputs.dt, inputs.t0
    else:
        if dt is None:
            raise ParameterError("dt is required when inputs is an array")
        U = np.asarray(inputs, dtype=float)
        if U.ndim == 1:
            U = U[:, None] if model.m else np.zeros((U.shape[0], 0))
    if U.shape[0] < 1:
        raise DataError("input record must have at least one sample")
    if U.shape[1] != model.m:
        raise DataError(f"model expects {model.m} inputs, got {U.shape[1]}")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != model.n:
        raise DataError(f"x0 has {x0.shape[0]} entries, model has {model.n} states")
    if not np.isfinite(x0).all():
        raise DivergenceError(0, "non-finite initial state")
    lo, hi = _clip_bounds(model, opts.clip)
    stops = _stops(model, opts.stops)
    x0 = np.clip(x0, lo, hi)
    if model.library.has_custom:
        X, bad = _simulate_python(model, x0, U, dt, opts, lo, hi, stops)
    else:
        X, bad = kernels.simulate_sparse(model.theta, model.library.table(), x0, U, dt, opts.substeps, lo, hi, stops, backend=opts.backend)
    if bad >= 0:
        raise DivergenceError(bad)
    return Trajectory(t0=t0, dt=dt, states=X, inputs=U, state_names=model.state_names, input_names=model.input_names)


def _fmt_coef(c: float, precision: int) -> str:
    return f"{c:.{precision}f}"


def render(model: SparseModel, precision: int = 3) -> str:
    """One line per state: ``d<name>/dt = c1*f1 + c2*f2 ...`` in library order."""
    lines = []
    for j, name in enumerate(model.state_names):
        parts = []
        for b, c in zip(model.library.basis, model.theta[:, j]):
            if c == 0.0:
                continue
            mag = _fmt_coef(abs(c), precision)
            term = mag if b.name == "1" else f"{mag}*{b.name}"
            if not parts:
                parts.append(("-" if c < 0 else "") + term)
            else:
                parts.append(("- " if c < 0 else "+ ") + term)
        lines.append(f"d{name}/dt = " + (" ".join(parts) if parts else "0"))
    return "\n".join(lines)


_LINE_RE = re.compile(r"^d(?P<state>.+?)/dt = (?P<rhs>.*)$")
_TERM_RE = re.compile(r"(?P<sign>[+-])?\s*(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?)(?:\*(?P<name>\S+))?")


def parse_equations(text: str, library: FeatureLibrary, state_names: Sequence[str]) -> np.ndarray:
    """Coefficient matrix from text produced by :func:`render`."""
    theta = np.zeros((len(library), len(state_names)))
    for line in text.strip().splitlines():
        mt = _LINE_RE.match(line.strip())
        if mt is None:
            raise ParameterError(f"cannot parse equation line {line!r}")
        j = list(state_names).index(mt["state"])
        body = mt["rhs"].strip()
        if body == "0":
            continue
        pos = 0
        while pos < len(body):
            tm = _TERM_RE.match(body, pos)
            if tm is None or tm.end() == pos:
                raise ParameterError(f"cannot parse term at {body[pos:]!r}")
            val = float(tm["num"]) * (-1.0 if tm["sign"] == "-" else 1.0)
            theta[library.index(tm["name"] or "1"), j] = val
            pos = tm.end()
            while pos < len(body) and body[pos] == " ":
                pos += 1
    return theta


def model_to_dict(model: SparseModel) -> dict:
    coefs = []
    for j, s in enumerate(model.state_names):
        for name, c in model.terms(j):
            coefs.append([s, name, c])
    return {
        "state_names": list(model.state_names),
        "input_names": list(model.input_names),
        "library": model.library.to_dict(),
        "coefficients": coefs,
        "fixed": [model.state_names[j] for j in sorted(model.fixed)],
        "spec_hash": model.spec_hash,
    }


def model_from_dict(doc: dict) -> SparseModel:
    lib = library_from_dict(doc["library"])
    states = list(doc["state_names"])
    theta = np.zeros((len(lib), len(states)))
    for s, name, c in doc["coefficients"]:
        theta[lib.index(name), states.index(s)] = float(c)
    return SparseModel(
        library=lib,
        theta=theta,
        state_names=tuple(states),
        input_names=tuple(doc.get("input_names", ())),
        spec_hash=doc.get("spec_hash", ""),
        fixed=frozenset(states.index(s) for s in doc.get("fixed", [])),
    )

