"""Experiment configuration (JSON or TOML) and its validation."""

from __future__ import annotations

import copy
import json
import sys
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from .search import METHODS, SearchSpace, dim_from_config

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

STRATEGIES = ("naive", "second_order", "boucwen_hidden", "tanks_hidden", "arx")
PHYSICAL = {"boucwen_hidden": ("m_L", "c_L", "k_L"), "tanks_hidden": ("k1", "k2")}
DEFAULT_LAMBDA = ["loguniform", 1e-4, 1e2]
DEFAULT_BUDGET = 200
DEFAULT_LIBRARY = {
    "naive": {"kind": "polynomial", "degree": 2},
    "second_order": {"kind": "polynomial", "degree": 2},
    "boucwen_hidden": {"kind": "boucwen"},
    "tanks_hidden": {"kind": "polynomial", "degree": 2},
}
ARX_DEFAULT_SPACE = {
    "na": ["categorical", [1, 2, 3, 4]],
    "nb": ["categorical", [1, 2, 3, 4]],
    "nk": ["categorical", [0, 1, 2]],
}


@dataclass(frozen=True)
class ArmConfig:
    name: str
    kind: str
    library: dict | None
    space: SearchSpace
    guess: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "library": self.library,
            "search": {
                "budget": self.space.budget,
                "method": self.space.method,
                "space": {k: d.to_list() for k, d in self.space.dims.items()},
            },
            "guess": self.guess,
            "options": self.options,
        }


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    seed: int
    data: dict
    arms: tuple
    quasistatic: dict | None = None
    base_dir: Path = Path(".")
    output: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        """Normalised echo for the report (paths kept as written)."""
        return {
            "name": self.name,
            "seed": self.seed,
            "data": self.data,
            "arms": [a.to_dict() for a in self.arms],
            "quasistatic": self.quasistatic,
        }

    def with_seed(self, seed: int) -> "ExperimentConfig":
        doc = copy.deepcopy(self._raw)
        doc["seed"] = int(seed)
        return parse_config(doc, self.base_dir)


def arm_seed(seed: int, name: str) -> int:
    """Per-arm seed keyed by name, so adding or reordering arms changes nothing else."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(name.encode())])
    return int(ss.generate_state(1)[0])


def _arm(doc: dict, seed: int, index: int) -> ArmConfig:
    if not isinstance(doc, dict):
        raise ConfigError(f"arm #{index} must be a table")
    strat = doc.get("strategy", {})
    if isinstance(strat, str):
        strat = {"kind": strat}
    kind = strat.get("kind")
    if kind not in STRATEGIES:
        raise ConfigError(f"arm #{index}: strategy.kind must be one of {', '.join(STRATEGIES)}, got {kind!r}")
    name = str(doc.get("name", kind))
    search = doc.get("search", {})
    budget = search.get("budget", DEFAULT_BUDGET)
    if isinstance(budget, bool) or not isinstance(budget, int) or budget < 1:
        raise ConfigError(f"arm {name!r}: search.budget must be an integer >= 1, got {budget!r}")
    method = search.get("method", "random")
    if method not in METHODS:
        raise ConfigError(f"arm {name!r}: unknown search method {method!r}")
    space = dict(search.get("space", {}))
    if kind == "arx":
        for k, v in ARX_DEFAULT_SPACE.items():
            space.setdefault(k, v)
    else:
        space.setdefault("lambda", DEFAULT_LAMBDA)
    guess = dict(strat.get("guess", {}))
    bounds = strat.get("bounds", {})
    for p in PHYSICAL.get(kind, ()):
        if p in bounds:
            lo, hi = bounds[p]
            if not 0 < lo < hi:
                raise ConfigError(f"arm {name!r}: bounds for {p} must satisfy 0 < lo < hi")
            space.setdefault(p, ["loguniform", lo, hi])
        elif p not in guess and p not in space:
            raise ConfigError(f"arm {name!r}: physical parameter {p} needs strategy.guess or strategy.bounds")
    options = {k: v for k, v in strat.items() if k not in ("kind", "guess", "bounds")}
    if kind == "tanks_hidden":
        x1_max = float(options.setdefault("x1_max", 10.0))
        if "x1_0" in bounds:
            space.setdefault("x1_0", ["uniform", *bounds["x1_0"]])
        elif "x1_0" not in guess and "x1_0" not in space:
            space["x1_0"] = ["uniform", 0.0, x1_max]
        grid = options.setdefault("ic_grid", [0.0, x1_max, 200])
        if len(grid) != 3 or grid[0] < 0 or int(grid[2]) < 2:
            raise ConfigError(f"arm {name!r}: ic_grid must be [lo >= 0, hi, steps >= 2]")
    try:
        dims = {k: dim_from_config(v) for k, v in space.items()}
    except ConfigError as exc:
        raise ConfigError(f"arm {name!r}: {exc}") from None
    library = None if kind == "arx" else doc.get("library", DEFAULT_LIBRARY[kind])
    sp = SearchSpace(dims, budget, arm_seed(seed, name), method, float(search.get("min_fidelity", 0.25)))
    return ArmConfig(name, kind, library, sp, guess, options)


def parse_config(doc: dict, base_dir: str | Path = ".") -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a table")
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    data = doc.get("data")
    if not isinstance(data, dict) or len(set(data) & {"generate", "csv"}) != 1:
        raise ConfigError("data must contain exactly one of 'generate' or 'csv'")
    if "csv" in data:
        c = data["csv"]
        if "schema" not in c or not (("train" in c and "test" in c) or ("path" in c and "split" in c)):
            raise ConfigError("data.csv needs a schema and either train/valid/test files or path + split")
    arms_doc = doc.get("arms")
    if not isinstance(arms_doc, list) or not arms_doc:
        raise ConfigError("config needs a non-empty 'arms' list")
    arms = tuple(_arm(a, seed, i) for i, a in enumerate(arms_doc))
    names = [a.name for a in arms]
    if len(set(names)) != len(names):
        raise ConfigError(f"arm names must be unique, got {names}")
    cfg = ExperimentConfig(
        name=str(doc.get("name", "experiment")),
        seed=seed,
        data=data,
        arms=arms,
        quasistatic=doc.get("quasistatic"),
        base_dir=Path(base_dir),
        output=dict(doc.get("output", {})),
    )
    object.__setattr__(cfg, "_raw", copy.deepcopy(doc))
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        if path.suffix.lower() == ".toml":
            doc = tomllib.loads(text.decode("utf-8"))
        else:
            doc = json.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    return parse_config(doc, path.parent)
