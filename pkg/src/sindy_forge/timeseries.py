"""Sampled trajectories, contiguous splitting and CSV ingestion/export."""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    BoundsError,
    CsvFormatError,
    CsvParseError,
    DataError,
    ParameterError,
    SchemaError,
)

UNIFORM_RTOL = 1e-6


def _as_2d(a, rows=None, name="array"):
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DataError(f"{name} must be 1-D or 2-D, got shape {arr.shape}")
    if rows is not None and arr.shape[0] != rows:
        raise DataError(f"{name} has {arr.shape[0]} rows, expected {rows}")
    return arr


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Uniformly sampled multichannel record.

    ``states`` is T x n, ``inputs`` T x m and ``derivatives`` (optional) T x n.
    ``hidden`` holds ground-truth channels that are not part of the
    observed state (simulator output only); it is never used for fitting.
    """

    t0: float
    dt: float
    states: np.ndarray
    inputs: np.ndarray
    derivatives: np.ndarray | None = None
    state_names: tuple[str, ...] = ()
    input_names: tuple[str, ...] = ()
    hidden: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ParameterError(f"dt must be positive and finite, got {self.dt}")
        states = _as_2d(self.states, name="states")
        T = states.shape[0]
        inputs = np.zeros((T, 0)) if self.inputs is None else _as_2d(self.inputs, T, "inputs")
        derivs = None
        if self.derivatives is not None:
            derivs = _as_2d(self.derivatives, T, "derivatives")
            if derivs.shape[1] != states.shape[1]:
                raise DataError("derivatives must have one column per state")
        snames = tuple(self.state_names) or tuple(f"x{i}" for i in range(states.shape[1]))
        inames = tuple(self.input_names) or tuple(f"u{i}" for i in range(inputs.shape[1]))
        if len(snames) != states.shape[1] or len(inames) != inputs.shape[1]:
            raise DataError("channel name count does not match column count")
        hidden = {}
        for k, v in dict(self.hidden).items():
            v = np.asarray(v, dtype=float)
            if v.shape[0] != T:
                raise DataError(f"hidden channel {k!r} has {v.shape[0]} rows, expected {T}")
            v.setflags(write=False)
            hidden[k] = v
        for arr in (states, inputs, derivs):
            if arr is not None:
                arr.setflags(write=False)
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "derivatives", derivs)
        object.__setattr__(self, "state_names", snames)
        object.__setattr__(self, "input_names", inames)
        object.__setattr__(self, "hidden", hidden)

    def __len__(self):
        return self.states.shape[0]

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def m(self) -> int:
        return self.inputs.shape[1]

    @property
    def channel_names(self) -> tuple[str, ...]:
        return self.state_names + self.input_names

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    def replace(self, **changes) -> "Trajectory":
        return dataclasses.replace(self, **changes)

    def segment(self, start: int, stop: int) -> "Trajectory":
        """Rows ``start:stop`` with ``t0`` shifted accordingly."""
        if not 0 <= start <= stop <= len(self):
            raise BoundsError(f"segment [{start}, {stop}) outside record of length {len(self)}")
        return Trajectory(
            t0=self.t0 + start * self.dt,
            dt=self.dt,
            states=self.states[start:stop],
            inputs=self.inputs[start:stop],
            derivatives=None if self.derivatives is None else self.derivatives[start:stop],
            state_names=self.state_names,
            input_names=self.input_names,
            hidden={k: v[start:stop] for k, v in self.hidden.items()},
        )


@dataclass(frozen=True)
class SplitSpec:
    train_len: int
    valid_len: int = 0
    test_len: int = 0

    def __post_init__(self):
        if min(self.train_len, self.valid_len, self.test_len) < 0:
            raise ParameterError("split lengths must be nonnegative")
        if self.train_len < 2:
            raise ParameterError("train_len must be at least 2")

    @property
    def total(self) -> int:
        return self.train_len + self.valid_len + self.test_len


def split(traj: Trajectory, spec: SplitSpec) -> tuple[Trajectory, Trajectory, Trajectory]:
    """Cut ``traj`` into contiguous train/validation/test segments."""
    if spec.total > len(traj):
        raise BoundsError(f"split needs {spec.total} samples, record has {len(traj)}")
    a = spec.train_len
    b = a + spec.valid_len
    c = b + spec.test_len
    return traj.segment(0, a), traj.segment(a, b), traj.segment(b, c)


def concatenate(*trajs: Trajectory) -> Trajectory:
    """Join adjacent segments of the same record back together."""
    first = trajs[0]
    derivs = None
    if all(t.derivatives is not None for t in trajs):
        derivs = np.vstack([t.derivatives for t in trajs])
    keys = set(first.hidden)
    for t in trajs[1:]:
        keys &= set(t.hidden)
    return Trajectory(
        t0=first.t0,
        dt=first.dt,
        states=np.vstack([t.states for t in trajs]),
        inputs=np.vstack([t.inputs for t in trajs]),
        derivatives=derivs,
        state_names=first.state_names,
        input_names=first.input_names,
        hidden={k: np.concatenate([t.hidden[k] for t in trajs]) for k in sorted(keys)},
    )


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for :func:`load_csv`.

    Either ``time`` names a column or ``dt`` is given (then ``t0`` applies).
    """

    inputs: Sequence[str]
    states: Sequence[str]
    time: str | None = "t"
    dt: float | None = None
    t0: float = 0.0
    derivatives: Sequence[str] | None = None

    def __post_init__(self):
        if not self.inputs or not self.states:
            raise SchemaError("schema needs at least one input and one state column")
        if self.time is None and self.dt is None:
            raise SchemaError("schema needs a time column or an explicit dt")


def _read_table(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise CsvFormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    return header, rows[1:]


def read_columns(path: str | Path) -> dict[str, np.ndarray]:
    """Parse every column of a numeric CSV into float arrays keyed by header."""
    path = Path(path)
    header, body = _read_table(path)
    data = np.empty((len(body), len(header)))
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise CsvParseError(f"{path}: row {i + 1} has {len(row)} cells, expected {len(header)}", i + 1)
        for j, cell in enumerate(row):
            try:
                data[i, j] = float(cell)
            except ValueError:
                raise CsvParseError(f"{path}: non-numeric cell {cell!r} in row {i + 1}, column {header[j]!r}", i + 1) from None
    return {name: data[:, j] for j, name in enumerate(header)}


def load_csv(path: str | Path, schema: CsvSchema) -> Trajectory:
    cols = read_columns(path)
    wanted = list(schema.inputs) + list(schema.states) + list(schema.derivatives or [])
    if schema.time is not None and schema.dt is None:
        wanted.append(schema.time)
    missing = [c for c in wanted if c not in cols]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {missing}")
    T = len(next(iter(cols.values())))
    if T < 2:
        raise CsvFormatError(f"{path}: need at least 2 data rows, found {T}")

    if schema.dt is not None:
        dt, t0 = float(schema.dt), float(schema.t0)
    else:
        t = cols[schema.time]
        steps = np.diff(t)
        med = float(np.median(steps))
        if not med > 0 or np.any(np.abs(steps - med) > UNIFORM_RTOL * med):
            raise CsvFormatError(f"{path}: time column is not uniformly sampled")
        t0 = float(t[0])
        dt = float((t[-1] - t[0]) / (T - 1))

    derivs = None
    if schema.derivatives:
        derivs = np.column_stack([cols[c] for c in schema.derivatives])
    return Trajectory(
        t0=t0,
        dt=dt,
        states=np.column_stack([cols[c] for c in schema.states]),
        inputs=np.column_stack([cols[c] for c in schema.inputs]),
        derivatives=derivs,
        state_names=tuple(schema.states),
        input_names=tuple(schema.inputs),
    )


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_csv(traj: Trajectory, path: str | Path) -> None:
    """Write ``t``, inputs, states and (if present) ``<state>_dot`` columns."""
    header = ["t", *traj.input_names, *traj.state_names]
    blocks = [traj.t[:, None], traj.inputs, traj.states]
    if traj.derivatives is not None:
        header += [f"{s}_dot" for s in traj.state_names]
        blocks.append(traj.derivatives)
    table = np.hstack(blocks)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in table:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def schema_for(traj: Trajectory) -> CsvSchema:
    """Schema that reads back a file written by :func:`save_csv`."""
    return CsvSchema(
        inputs=traj.input_names,
        states=traj.state_names,
        derivatives=[f"{s}_dot" for s in traj.state_names] if traj.derivatives is not None else None,
    )
