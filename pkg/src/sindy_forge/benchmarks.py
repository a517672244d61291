"""Ground-truth simulators for the three case studies, excitation signals,
measurement noise and hysteresis-loop geometry."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import chirp

from . import kernels
from .errors import DivergenceError, GeometryError, ParameterError
from .timeseries import SplitSpec, Trajectory, split

SUBSTEPS = 10


@dataclass(frozen=True)
class BoucWenParams:
    """Oscillator with a Bouc-Wen hysteretic restoring force ``z``.

    Defaults give the linear part ``ydd = -5 yd - 25000 y - 0.5 z + 0.5 u`` and
    ``zd = 59835.845 yd - 442.497 z|yd| + 357.725 |z| yd``.
    """

    m_L: float = 2.0
    c_L: float = 10.0
    k_L: float = 5.0e4
    alpha: float = 59835.845
    beta: float = 570.725
    gamma: float = 442.497 / 570.725
    delta: float = -357.725 / 570.725

    def __post_init__(self):
        if not (self.m_L > 0 and self.k_L > 0 and self.c_L >= 0):
            raise ParameterError("Bouc-Wen needs m_L > 0, k_L > 0, c_L >= 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.m_L, self.c_L, self.k_L, self.alpha, self.beta, self.gamma, self.delta])

    def zdot_terms(self) -> dict[str, float]:
        """Coefficients of the hidden-state equation on the Bouc-Wen library names."""
        return {
            "ydot": self.alpha,
            "z*|ydot|": -self.beta * self.gamma,
            "|z|*ydot": -self.beta * self.delta,
        }


@dataclass(frozen=True)
class TanksParams:
    """Two cascaded tanks; rates are per second for levels in volts.

    The default upper-tank pair keeps the ratio k2/k1 = 36.012/48.204 with a
    time scale of 1000 s so the dynamics are resolved at a 4 s sample time.
    """

    k1: float = 0.048204
    k2: float = 0.036012
    k3: float = 0.040
    k4: float = 0.045
    x1_max: float = 10.0
    x2_max: float = 10.0
    overflow_fraction: float = 1.0

    def __post_init__(self):
        if min(self.k1, self.k2, self.k3, self.k4) <= 0:
            raise ParameterError("tank rate constants must be positive")
        if min(self.x1_max, self.x2_max) <= 0:
            raise ParameterError("tank saturation levels must be positive")
        if not 0 <= self.overflow_fraction <= 1:
            raise ParameterError("overflow_fraction must lie in [0, 1]")

    def as_array(self) -> np.ndarray:
        return np.array([self.k1, self.k2, self.k3, self.k4, self.x1_max, self.x2_max, self.overflow_fraction])


@dataclass(frozen=True)
class PickPlaceParams:
    """Mounting head: free mode, impact mode below ``y_contact``, hard stops at
    ``y_lo``/``y_hi`` where the velocity is zeroed."""

    k_free: float = 100.0
    c_free: float = 3.0
    gain: float = 500.0
    y_rest: float = -20.0
    k_impact: float = 300.0
    c_impact: float = 2.0
    y_contact: float = 5.0
    y_lo: float = 0.0
    y_hi: float = 25.0

    def __post_init__(self):
        if not self.y_lo < self.y_hi:
            raise ParameterError("need y_lo < y_hi")
        if self.c_free <= 0 or self.c_free + self.c_impact <= 0:
            raise ParameterError("damping must be positive in both modes")

    def as_array(self) -> np.ndarray:
        return np.array([self.k_free, self.c_free, self.gain, self.y_rest, self.k_impact,
                         self.c_impact, self.y_contact, self.y_lo, self.y_hi])


EXCITATION_KINDS = ("sine", "multisine", "sinesweep", "filtered-random", "step")


@dataclass(frozen=True)
class ExcitationSpec:
    """Input signal description.

    ``amplitude`` is the peak for sine/sinesweep/step and the RMS for
    multisine/filtered-random. ``sine`` uses ``f_lo``; a ``step`` switches on at
    ``f_lo`` seconds. ``clip`` bounds the final signal.
    """

    kind: str
    amplitude: float
    duration: float
    f_lo: float = 0.0
    f_hi: float = 0.0
    seed: int = 0
    offset: float = 0.0
    clip: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in EXCITATION_KINDS:
            raise ParameterError(f"unknown excitation kind {self.kind!r}")
        if not self.duration > 0:
            raise ParameterError("excitation duration must be positive")
        if self.kind not in ("sine", "step") and self.f_hi < self.f_lo:
            raise ParameterError("need f_lo <= f_hi")


def excitation(spec: ExcitationSpec, dt: float) -> np.ndarray:
    N = int(round(spec.duration / dt))
    if N < 1:
        raise ParameterError("excitation shorter than one sample")
    nyq = 0.5 / dt
    if spec.kind != "step" and max(spec.f_lo, spec.f_hi) > nyq:
        raise ParameterError(f"excitation band exceeds the Nyquist frequency {nyq}")
    t = dt * np.arange(N)
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "sine":
        u = spec.amplitude * np.sin(2 * np.pi * spec.f_lo * t)
    elif spec.kind == "sinesweep":
        u = spec.amplitude * chirp(t, f0=spec.f_lo, t1=t[-1] if N > 1 else dt, f1=spec.f_hi, method="linear", phi=-90)
    elif spec.kind == "step":
        u = np.where(t >= spec.f_lo, spec.amplitude, 0.0)
    else:
        freqs = np.fft.rfftfreq(N, dt)
        band = (freqs >= spec.f_lo) & (freqs <= spec.f_hi) & (freqs > 0)
        if not band.any():
            raise ParameterError("no DFT bin falls inside the requested band")
        spectrum = np.zeros(freqs.size, dtype=complex)
        if spec.kind == "multisine":
            spectrum[band] = np.exp(2j * np.pi * rng.random(band.sum()))
        else:
            white = np.fft.rfft(rng.standard_normal(N))
            spectrum[band] = white[band]
        u = np.fft.irfft(spectrum, n=N)
        u *= spec.amplitude / np.sqrt(np.mean(u**2))
    u = u + spec.offset
    if spec.clip is not None:
        u = np.clip(u, *spec.clip)
    return u


def _input_array(exc, dt) -> np.ndarray:
    if isinstance(exc, ExcitationSpec):
        return excitation(exc, dt)
    return np.asarray(exc, dtype=float).reshape(-1)


def simulate_boucwen(p: BoucWenParams, exc, dt: float = 1 / 750, x0=(0.0, 0.0, 0.0), substeps: int = SUBSTEPS, backend=None) -> Trajectory:
    """Observed ``y`` and input ``u``; hidden ``ydot``, ``yddot`` and ``z``."""
    if not dt > 0:
        raise ParameterError("dt must be positive")
    u = _input_array(exc, dt)
    X, A, bad = kernels.boucwen(p.as_array(), x0, u, dt, substeps, backend=backend)
    if bad >= 0:
        raise DivergenceError(bad)
    return Trajectory(0.0, dt, X[:, :1], u, state_names=("y",), input_names=("u",),
                      hidden={"ydot": X[:, 1], "yddot": A, "z": X[:, 2]})


def simulate_tanks(p: TanksParams, exc, dt: float = 4.0, x0=(0.0, 0.0), substeps: int = SUBSTEPS, backend=None) -> Trajectory:
    """Observed lower level ``y = x2``; hidden upper level ``x1``."""
    x1, x2 = x0
    if not (0 <= x1 <= p.x1_max and 0 <= x2 <= p.x2_max):
        raise ParameterError("initial tank levels must lie in [0, x_max]")
    u = _input_array(exc, dt)
    X, bad = kernels.tanks(p.as_array(), x0, u, dt, substeps, backend=backend)
    if bad >= 0:
        raise DivergenceError(bad)
    return Trajectory(0.0, dt, X[:, 1:], u, state_names=("y",), input_names=("u",), hidden={"x1": X[:, 0]})


def simulate_upper_tank(k1, k2, x1_max, x10, u, dt, substeps: int = SUBSTEPS, backend=None) -> np.ndarray:
    """Upper-tank level driven by ``u`` alone, clamped to [0, x1_max]."""
    return kernels.upper_tank(k1, k2, x1_max, x10, u, dt, substeps, backend=backend)


def simulate_pickplace(p: PickPlaceParams, exc, dt: float = 1 / 400, x0=None, substeps: int = SUBSTEPS, backend=None) -> Trajectory:
    """Observed head position ``y``; hidden velocity ``ydot``."""
    if not dt > 0:
        raise ParameterError("dt must be positive")
    u = _input_array(exc, dt)
    x0 = (p.y_lo, 0.0) if x0 is None else x0
    X, bad = kernels.pickplace(p.as_array(), x0, u, dt, substeps, backend=backend)
    if bad >= 0:
        raise DivergenceError(bad)
    return Trajectory(0.0, dt, X[:, :1], u, state_names=("y",), input_names=("u",), hidden={"ydot": X[:, 1]})


def add_noise(traj: Trajectory, snr_db: float, seed: int, channels=None) -> Trajectory:
    """Additive white Gaussian noise on observed state channels at ``snr_db``."""
    if math.isinf(snr_db) and snr_db > 0:
        return traj
    if math.isnan(snr_db):
        raise ParameterError("snr_db must not be NaN")
    rng = np.random.default_rng(seed)
    X = np.array(traj.states)
    idx = range(traj.n) if channels is None else [traj.state_names.index(c) if isinstance(c, str) else c for c in channels]
    for j in idx:
        sigma = np.std(X[:, j]) * 10 ** (-snr_db / 20)
        X[:, j] += sigma * rng.standard_normal(X.shape[0])
    return traj.replace(states=X, derivatives=None)


def hysteresis_loop(traj: Trajectory, output: int = 0, input: int = 0) -> tuple[np.ndarray, float]:
    """Displacement-force points and their signed shoelace area (closed polygon)."""
    y = traj.states[:, output]
    u = traj.inputs[:, input]
    if y.shape[0] < 3:
        raise GeometryError("a loop needs at least 3 points")
    area = 0.5 * float(np.sum(y * np.roll(u, -1) - np.roll(y, -1) * u))
    return np.column_stack([y, u]), area


def quasistatic_input(dt: float, amplitude: float = 150.0, freq: float = 0.75, periods: int = 2) -> np.ndarray:
    return excitation(ExcitationSpec("sine", amplitude, periods / freq, f_lo=freq), dt)


def last_period(traj: Trajectory, freq: float) -> Trajectory:
    n = int(round(1.0 / (freq * traj.dt)))
    return traj.segment(len(traj) - n, len(traj))


@dataclass
class Dataset:
    system: str
    train: Trajectory
    valid: Trajectory
    test: Trajectory
    params: object
    meta: dict = field(default_factory=dict)


PRESETS = {
    "boucwen": {
        "dt": 1 / 3000,
        "split": (24000, 6000, 0),
        "train": dict(kind="multisine", amplitude=150.0, f_lo=0.5, f_hi=20.0),
        "test": dict(kind="multisine", amplitude=150.0, f_lo=0.5, f_hi=20.0),
        "test_len": 9000,
        "discard": 3000,
    },
    "tanks": {
        "dt": 4.0,
        "split": (768, 256, 0),
        "train": dict(kind="filtered-random", amplitude=1.5, f_lo=0.0, f_hi=0.008, offset=3.3, clip=(0.0, 10.0)),
        "test": dict(kind="filtered-random", amplitude=1.5, f_lo=0.0, f_hi=0.008, offset=3.3, clip=(0.0, 10.0)),
        "test_len": 1024,
        "discard": 0,
    },
    "pickplace": {
        "dt": 1 / 400,
        "split": (3840, 960, 1200),
        # placement cycle between the stops plus broadband content
        "train": [
            dict(kind="sine", amplitude=4.0, f_lo=0.4),
            dict(kind="filtered-random", amplitude=1.5, f_lo=0.05, f_hi=1.5, offset=5.0),
        ],
        "test": None,
        "test_len": 0,
        "discard": 0,
    },
}

SYSTEMS = tuple(PRESETS)
PRESET_ALIASES = {"paper": "reference"}


def generate_dataset(system: str, preset: str = "reference", seed: int = 0, params=None, snr_db: float = math.inf, dt: float | None = None) -> Dataset:
    """Synthetic train/validation/test records for one benchmark system.

    Training and test records use independent excitation seeds derived from
    ``seed``. Noise (if any) touches observed channels only. Overriding ``dt``
    keeps the preset's record durations.
    """
    if system not in PRESETS:
        raise ParameterError(f"unknown system {system!r}; choose from {', '.join(SYSTEMS)}")
    preset = PRESET_ALIASES.get(preset, preset)
    if preset != "reference":
        raise ParameterError(f"unknown preset {preset!r}")
    cfg = PRESETS[system]
    scale = 1.0
    if dt is None:
        dt = cfg["dt"]
    elif not dt > 0:
        raise ParameterError("dt must be positive")
    else:
        scale = cfg["dt"] / dt

    def n(k):
        return int(round(k * scale))

    ss = np.random.SeedSequence(seed)
    s_train, s_test, s_noise = (int(c.generate_state(1)[0]) for c in ss.spawn(3))
    tr, va, te = (n(k) for k in cfg["split"])
    discard = n(cfg["discard"])
    sim = {
        "boucwen": (simulate_boucwen, BoucWenParams),
        "tanks": (simulate_tanks, TanksParams),
        "pickplace": (simulate_pickplace, PickPlaceParams),
    }[system]
    params = params or sim[1]()

    def record(exc_cfg, length, exc_seed):
        # a list of components is summed; each gets its own seed
        parts = exc_cfg if isinstance(exc_cfg, list) else [exc_cfg]
        u = sum(excitation(ExcitationSpec(duration=(length + discard) * dt, seed=exc_seed + i, **c), dt) for i, c in enumerate(parts))
        full = sim[0](params, u, dt)
        return full.segment(discard, discard + length)

    main = record(cfg["train"], tr + va + te, s_train)
    train, valid, test = split(main, SplitSpec(tr, va, te))
    if cfg["test"] is not None:
        test = record(cfg["test"], n(cfg["test_len"]), s_test)
    if not (math.isinf(snr_db) and snr_db > 0):
        train, valid, test = (add_noise(x, snr_db, s_noise + i) for i, x in enumerate((train, valid, test)))
    return Dataset(system, train, valid, test, params, {"dt": dt, "seed": seed, "preset": preset, "snr_db": snr_db})


def params_to_dict(params) -> dict:
    return {"type": type(params).__name__, **dataclasses.asdict(params)}
