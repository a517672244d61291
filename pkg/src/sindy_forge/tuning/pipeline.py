"""End-to-end experiment: data -> per-arm search -> test scoring -> report."""

from __future__ import annotations

import copy
import dataclasses
import json
import logging
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import __version__, benchmarks, strategies
from ..differentiation import DiffSpec
from ..errors import ConfigError, DivergenceError, SindyForgeError, StageError
from ..features import library_from_spec
from ..metrics import bfr, rmse
from ..sindy import SimOptions, model_to_dict, render
from ..stls import StlsSpec
from ..timeseries import CsvSchema, SplitSpec, Trajectory, load_csv, split
from . import arx
from .config import ExperimentConfig
from .search import SearchResult, search

log = logging.getLogger(__name__)

MIN_TRAIN = 16
TIMING_KEYS = ("wall_time", "timing")


@contextmanager
def stage(name: str):
    try:
        yield
    except StageError:
        raise
    except (SindyForgeError, ValueError, ArithmeticError, OSError, KeyError, np.linalg.LinAlgError) as exc:
        raise StageError(name, exc) from exc


@dataclass
class Data:
    train: Trajectory
    valid: Trajectory
    test: Trajectory
    params: object = None  # simulator parameters when generated
    meta: dict = dataclasses.field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class ArxResult:
    model: arx.ArxModel
    validation_rmse: float


def _schema(doc: dict) -> CsvSchema:
    return CsvSchema(
        inputs=tuple(doc["inputs"]),
        states=tuple(doc["states"]),
        time=doc.get("time", "t"),
        dt=doc.get("dt"),
        t0=doc.get("t0", 0.0),
    )


def load_data(cfg: ExperimentConfig) -> Data:
    if "generate" in cfg.data:
        g = cfg.data["generate"]
        system = g.get("system")
        params = None
        if "params" in g:
            cls = {"boucwen": benchmarks.BoucWenParams, "tanks": benchmarks.TanksParams, "pickplace": benchmarks.PickPlaceParams}.get(system)
            if cls is None:
                raise ConfigError(f"unknown system {system!r}")
            params = cls(**g["params"])
        snr = g.get("snr_db")
        ds = benchmarks.generate_dataset(system, g.get("preset", "reference"), cfg.seed, params, math.inf if snr is None else float(snr))
        return Data(ds.train, ds.valid, ds.test, ds.params, {"source": "generate", "system": system, **ds.meta})
    c = cfg.data["csv"]
    schema = _schema(c["schema"])
    base = cfg.base_dir
    if "path" in c:
        full = load_csv(base / c["path"], schema)
        tr, va, te = split(full, SplitSpec(*c["split"]))
    else:
        tr = load_csv(base / c["train"], schema)
        te = load_csv(base / c["test"], schema)
        va = load_csv(base / c["valid"], schema) if "valid" in c else te
    return Data(tr, va, te, None, {"source": "csv", "dt": tr.dt})


def _library(arm, n, m, names, point):
    spec = copy.deepcopy(arm.library)
    if "degree" in point:
        target = spec["base"] if spec.get("kind") == "sqrt_augmented" else spec
        target.setdefault("kind", "polynomial")
        target["degree"] = int(point["degree"])
    return library_from_spec(spec, n, m, names)


def _diff_spec(arm, point) -> DiffSpec:
    ld = float(point.get("lambda_d", arm.options.get("lambda_d", 0.0)))
    return DiffSpec("smoothed", ld) if ld > 0 else DiffSpec("central")


def _param(arm, point, key):
    v = point.get(key, arm.guess.get(key))
    if v is None:
        raise ConfigError(f"arm {arm.name!r}: no value for {key}")
    return float(v)


def fit_point(arm, point: dict, train: Trajectory, valid: Trajectory | None):
    """Fit one arm at one hyperparameter point; validation RMSE attached."""
    if arm.kind == "arx":
        model = arx.fit_arx(train, int(point["na"]), int(point["nb"]), int(point["nk"]), bool(arm.options.get("intercept", True)))
        score = 0.0
        if valid is not None:
            yhat = arx.simulate_output(model, valid)
            score = rmse(valid.states[:, 0], yhat)
            score = score if math.isfinite(score) else math.inf
        return ArxResult(model, score)
    stls = StlsSpec(lam=float(point["lambda"]))
    diff = _diff_spec(arm, point)
    normalize = bool(point.get("normalize", arm.options.get("normalize", True)))
    opts = SimOptions(substeps=int(arm.options.get("substeps", strategies.SUBSTEPS)))
    y_name = train.state_names[0]
    if arm.kind in ("naive", "second_order"):
        rows = None
        stroke = arm.options.get("stroke")
        if stroke is not None:
            lo, hi = stroke
            rows = strategies.unsaturated_rows(train.states[:, 0], lo, hi)
            stops = {0: 1} if arm.kind == "second_order" else None
            opts = dataclasses.replace(opts, clip={0: (lo, hi)}, stops=stops)
        if arm.kind == "naive":
            lib = _library(arm, train.n, train.m, train.channel_names, point)
            return strategies.naive_fit(train, lib, stls, diff, valid, normalize, opts, rows=rows)
        names = (y_name, f"{y_name}_dot", *train.input_names)
        lib = _library(arm, 2, train.m, names, point)
        return strategies.second_order_fit(train, lib, stls, diff, valid, normalize, opts, rows=rows)
    if arm.kind == "boucwen_hidden":
        guess = strategies.HiddenStateGuess({k: _param(arm, point, k) for k in ("m_L", "c_L", "k_L")})
        lib = _library(arm, 2, 0, ("z", f"{y_name}_dot"), point)
        return strategies.boucwen_hidden_fit(train, guess, stls, diff, valid, lib, normalize, opts)
    if arm.kind == "tanks_hidden":
        x1_max = float(arm.options.get("x1_max", 10.0))
        guess = strategies.HiddenStateGuess({k: _param(arm, point, k) for k in ("k1", "k2")}, x1_0=_param(arm, point, "x1_0"))
        lib = _library(arm, 2, train.m, (y_name, "x1", *train.input_names), point)
        return strategies.tanks_hidden_fit(
            train, guess, lib, stls, diff, valid, x1_max=x1_max, ic_grid=tuple(arm.options["ic_grid"]), normalize=normalize, opts=opts
        )
    raise ConfigError(f"unknown strategy kind {arm.kind!r}")


def predict(result, seg: Trajectory) -> np.ndarray:
    if isinstance(result, ArxResult):
        return arx.simulate_output(result.model, seg)
    return strategies.simulate_output(result, seg)


def _objective(arm, train, valid):
    def objective(point, fidelity=1.0):
        tr = train
        if fidelity < 1.0:
            tr = train.segment(0, max(MIN_TRAIN, int(math.ceil(fidelity * len(train)))))
        res = fit_point(arm, point, tr, valid)
        return res.validation_rmse, res

    return objective


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def _model_doc(result) -> dict:
    if isinstance(result, ArxResult):
        return {"type": "arx", **result.model.to_dict()}
    return {"type": "sparse", **model_to_dict(result.model), "equations": render(result.model, 6)}


def _score(y, yhat) -> dict:
    return {"bfr": bfr(y, yhat), "rmse": rmse(y, yhat), "n_samples": int(y.shape[0])}


def quasistatic_record(params, cfg_q: dict, dt: float) -> Trajectory:
    u = benchmarks.quasistatic_input(dt, float(cfg_q.get("amplitude", 150.0)), float(cfg_q.get("freq", 0.75)), int(cfg_q.get("periods", 2)))
    return benchmarks.simulate_boucwen(params, u, dt)


def _loops(cfg, data, results) -> dict | None:
    q = cfg.quasistatic
    if q is None and data.meta.get("system") == "boucwen":
        q = {}
    if q is None or not isinstance(data.params, benchmarks.BoucWenParams):
        return None
    freq = float(q.get("freq", 0.75))
    truth = quasistatic_record(data.params, q, data.train.dt)
    pts, area = benchmarks.hysteresis_loop(benchmarks.last_period(truth, freq))
    out = {"freq": freq, "amplitude": float(q.get("amplitude", 150.0)), "truth": {"area": area, "points": pts}, "arms": {}}
    seg = Trajectory(truth.t0, truth.dt, truth.states, truth.inputs, state_names=truth.state_names, input_names=truth.input_names)
    for name, res in results.items():
        if isinstance(res, ArxResult):
            continue
        with stage(f"quasistatic:{name}"):
            try:
                yhat = predict(res, seg)
            except DivergenceError as exc:
                out["arms"][name] = {"status": "diverged", "index": exc.index}
                continue
        sim = seg.replace(states=yhat[:, None])
        p, a = benchmarks.hysteresis_loop(benchmarks.last_period(sim, freq))
        out["arms"][name] = {"status": "ok", "area": a, "area_ratio": a / area if area else math.nan, "points": p}
    return out


def run_pipeline(cfg: ExperimentConfig, jobs: int = 1) -> dict:
    """Execute every arm of ``cfg`` and return the report document."""
    t_start = time.perf_counter()
    with stage("data"):
        data = load_data(cfg)
    arms_out = []
    results = {}
    series = {"t": data.test.t, "y_measured": data.test.states[:, 0], "arms": {}}
    for arm in cfg.arms:
        with stage(f"search:{arm.name}"):
            sr: SearchResult = search(arm.space, _objective(arm, data.train, data.valid), jobs=jobs)
        with stage(f"refit:{arm.name}"):
            res = sr.payload if sr.payload is not None else fit_point(arm, sr.best_point, data.train, data.valid)
        results[arm.name] = res
        entry = {
            "name": arm.name,
            "kind": arm.kind,
            "best_point": sr.best_point,
            "best_trial": sr.best_trial,
            "validation_rmse": sr.best_rmse,
            "trials": [t.to_dict() for t in sr.trials],
            "model": _model_doc(res),
        }
        if not isinstance(res, ArxResult):
            entry["diagnostics"] = res.diagnostics
            if res.guess is not None:
                entry["guess"] = {**res.guess.params, **({"x1_0": res.guess.x1_0} if res.guess.x1_0 is not None else {})}
        with stage(f"test:{arm.name}"):
            try:
                yhat = predict(res, data.test)
                entry["status"] = "ok"
                entry["score"] = _score(data.test.states[:, 0], yhat)
                series["arms"][arm.name] = yhat
            except DivergenceError as exc:
                entry["status"] = "diverged"
                entry["score"] = {"bfr": 0.0, "rmse": math.inf, "n_samples": len(data.test), "diverged_at": exc.index}
                series["arms"][arm.name] = None
        arms_out.append(entry)
        log.info("arm %s: validation rmse %.6g, test bfr %.3f", arm.name, sr.best_rmse, entry["score"]["bfr"])
    loops = _loops(cfg, data, results)
    ranking = sorted(arms_out, key=lambda a: (-a["score"]["bfr"], a["name"]))
    report = {
        "tool": "sindy_forge",
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "data": {
            **data.meta,
            "dt": data.train.dt,
            "lengths": {"train": len(data.train), "valid": len(data.valid), "test": len(data.test)},
            "params": benchmarks.params_to_dict(data.params) if data.params is not None else None,
        },
        "arms": arms_out,
        "ranking": [a["name"] for a in ranking],
        "series": series,
        "loops": loops,
        "timing": {"wall_time": time.perf_counter() - t_start},
    }
    return _jsonable(report)


def strip_timing(doc):
    """Copy of a report without wall-clock fields (for determinism checks)."""
    if isinstance(doc, dict):
        return {k: strip_timing(v) for k, v in doc.items() if k not in TIMING_KEYS}
    if isinstance(doc, list):
        return [strip_timing(v) for v in doc]
    return doc


def dumps(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=1, allow_nan=False) + "\n"


def write_report(report: dict, path: str | Path) -> None:
    Path(path).write_text(dumps(report))


def write_plot_data(report: dict, path: str | Path) -> None:
    """CSV with t, y_measured and one simulated column per arm (empty when diverged)."""
    s = report["series"]
    names = list(s["arms"])
    cols = [s["t"], s["y_measured"]] + [s["arms"][n] or [None] * len(s["t"]) for n in names]
    lines = [",".join(["t", "y_measured", *names])]
    for row in zip(*cols):
        lines.append(",".join("" if v is None else (v if isinstance(v, str) else format(v, ".17g")) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
