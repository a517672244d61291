"""Command-line entry point: ``sindy-forge {generate,fit,score,render,search}``.

Exit codes: 0 success, 1 runtime/numeric failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, benchmarks
from .errors import (
    BoundsError,
    ConfigError,
    CsvFormatError,
    CsvParseError,
    DataError,
    ParameterError,
    SchemaError,
    SindyForgeError,
    StageError,
)
from .metrics import bfr, rmse
from .sindy import model_from_dict, render
from .timeseries import read_columns, save_csv

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
USAGE_ERRORS = (ConfigError, SchemaError, CsvFormatError, CsvParseError, ParameterError, BoundsError, FileNotFoundError, IsADirectoryError, PermissionError)

log = logging.getLogger("sindy_forge")


class UsageError(Exception):
    pass


def _setup_logging():
    level = os.environ.get("SINDY_FORGE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _out_dir(args, default=".") -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _truth_csv(ds, path: Path):
    names = None
    rows = []
    for seg_name, seg in (("train", ds.train), ("valid", ds.valid), ("test", ds.test)):
        keys = sorted(seg.hidden)
        names = names or keys
        cols = [seg.t] + [seg.hidden[k] for k in keys]
        for vals in zip(*cols):
            rows.append(",".join([seg_name] + [format(float(v), ".17g") for v in vals]))
    path.write_text(",".join(["segment", "t", *(names or [])]) + "\n" + "\n".join(rows) + "\n")


def cmd_generate(args) -> int:
    if args.system not in benchmarks.SYSTEMS:
        raise UsageError(f"unknown system {args.system!r}; choose from {', '.join(benchmarks.SYSTEMS)}")
    snr = math.inf if args.snr_db is None else args.snr_db
    ds = benchmarks.generate_dataset(args.system, args.preset, args.seed, snr_db=snr, dt=args.dt)
    out = _out_dir(args)
    save_csv(ds.train, out / "train.csv")
    save_csv(ds.valid, out / "valid.csv")
    save_csv(ds.test, out / "test.csv")
    _truth_csv(ds, out / "truth.csv")
    params = {"system": ds.system, "params": benchmarks.params_to_dict(ds.params), **ds.meta}
    params["snr_db"] = None if math.isinf(snr) else snr
    (out / "params.json").write_text(json.dumps(params, indent=1, sort_keys=True) + "\n")
    print(out)
    return EXIT_OK


def _load_cfg(args):
    from .tuning.config import load_config

    if not args.config:
        raise UsageError("--config is required")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def cmd_fit(args) -> int:
    from .tuning.pipeline import run_pipeline, write_plot_data, write_report

    cfg = _load_cfg(args)
    report = run_pipeline(cfg, jobs=args.jobs)
    out = _out_dir(args, cfg.output.get("dir", "."))
    write_report(report, out / "report.json")
    write_plot_data(report, out / "plot_data.csv")
    for arm in report["arms"]:
        s = arm["score"]
        print(f"{arm['name']}: bfr={s['bfr']:.3f} rmse={s['rmse'] if isinstance(s['rmse'], str) else format(s['rmse'], '.6g')} ({arm['status']})")
        if args.render and "equations" in arm["model"]:
            print("  " + arm["model"]["equations"].replace("\n", "\n  "))
    print(out / "report.json")
    return EXIT_OK


def cmd_search(args) -> int:
    from .tuning.pipeline import _jsonable, _objective, dumps, load_data, stage
    from .tuning.search import search

    cfg = _load_cfg(args)
    with stage("data"):
        data = load_data(cfg)
    doc = {"seed": cfg.seed, "arms": {}}
    for arm in cfg.arms:
        with stage(f"search:{arm.name}"):
            sr = search(arm.space, _objective(arm, data.train, data.valid), jobs=args.jobs)
        doc["arms"][arm.name] = {
            "best_point": sr.best_point,
            "best_trial": sr.best_trial,
            "validation_rmse": sr.best_rmse,
            "trials": [t.to_dict() for t in sr.trials],
        }
        print(f"{arm.name}: best trial {sr.best_trial} rmse={sr.best_rmse:.6g} point={json.dumps(sr.best_point, sort_keys=True)}")
    out = _out_dir(args, cfg.output.get("dir", "."))
    (out / "trials.json").write_text(dumps(_jsonable(doc)))
    return EXIT_OK


def _series(path, column):
    cols = read_columns(path)
    if column is None:
        names = [k for k in cols if k != "t"]
        if not names:
            raise UsageError(f"{path}: no data column")
        column = "y" if "y" in cols else names[0]
    if column not in cols:
        raise UsageError(f"{path}: no column {column!r}")
    return cols[column]


def cmd_score(args) -> int:
    y = _series(args.measured, args.column)
    yhat = _series(args.simulated, args.sim_column or args.column)
    if y.shape != yhat.shape:
        raise UsageError(f"length mismatch: {y.shape[0]} measured vs {yhat.shape[0]} simulated rows")
    try:
        out = {"bfr": bfr(y, yhat), "rmse": rmse(y, yhat)}
    except DataError as exc:
        raise UsageError(str(exc)) from None
    print(json.dumps(out))
    return EXIT_OK


def cmd_render(args) -> int:
    try:
        doc = json.loads(Path(args.model).read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{args.model}: not JSON ({exc})") from None
    models = []
    if "arms" in doc:
        for arm in doc["arms"]:
            if args.arm in (None, arm["name"]) and arm["model"].get("type") == "sparse":
                models.append((arm["name"], arm["model"]))
        if args.arm and not models:
            raise UsageError(f"no sparse-model arm named {args.arm!r}")
    else:
        models.append((None, doc))
    for name, m in models:
        if name:
            print(f"# {name}")
        print(render(model_from_dict(m), args.precision))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sindy-forge", description="Sparse identification with hidden-state strategies.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write synthetic train/valid/test CSVs")
    g.add_argument("--system", required=True)
    g.add_argument("--preset", default="reference")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.add_argument("--dt", type=float, help="override the preset sample time (keeps durations)")
    g.add_argument("--snr-db", type=float, default=None)
    g.set_defaults(func=cmd_generate)

    for name, func, helptext in (("fit", cmd_fit, "run an experiment config end to end"), ("search", cmd_search, "run only the hyperparameter search")):
        f = sub.add_parser(name, help=helptext)
        f.add_argument("--config", required=True)
        f.add_argument("--seed", type=int, default=None, help="override the config seed")
        f.add_argument("--out")
        f.add_argument("--jobs", type=int, default=1)
        if name == "fit":
            f.add_argument("--render", action="store_true", help="print fitted equations")
        f.set_defaults(func=func)

    s = sub.add_parser("score", help="BFR and RMSE of a simulated CSV against a measured one")
    s.add_argument("measured")
    s.add_argument("simulated")
    s.add_argument("--column", default=None)
    s.add_argument("--sim-column", default=None)
    s.set_defaults(func=cmd_score)

    r = sub.add_parser("render", help="print equations from a model or report JSON")
    r.add_argument("model")
    r.add_argument("--arm", default=None)
    r.add_argument("--precision", type=int, default=3)
    r.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"error: stage {exc.stage}: {exc.cause}", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc.cause, USAGE_ERRORS) else EXIT_RUNTIME
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SindyForgeError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
