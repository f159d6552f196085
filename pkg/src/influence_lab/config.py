"""Experiment configuration files.

Flat ``key = value`` lines grouped under ``[section]`` headers; ``#`` and ``;``
start comments.  Lists are comma separated.  Unknown sections and keys are
errors.  See the README for the full key table.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError
from .ihvp import METHODS, SolverConfig

COMMANDS = ("convergence", "solvers", "subset", "fit", "influence", "predict-cost")
SOURCES = ("linear", "logistic", "csv")


def _int(s: str) -> int:
    return int(s, 0)


def _float(s: str) -> float:
    return float(s)


def _str(s: str) -> str:
    return s


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(t) for t in s.split(",") if t.strip())


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(float(t)) for t in s.split(",") if t.strip())


def _strs(s: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in s.split(",") if t.strip())


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


SCHEMA = {
    "experiment": {
        "command": _str, "seed": _int, "reps": _int, "n_grid": _ints, "population": _int,
        "population_factor": _int, "out": _str, "threads": _int, "gnuplot": _str,
    },
    "data": {
        "source": _str, "n": _int, "p": _int, "contam_prob": _float, "noise_sd_clean": _float,
        "noise_sd_contam": _float, "theta_true": _floats, "path": _str, "features": _strs,
        "response": _str, "family": _str, "n_classes": _int, "ridge": _float, "z_index": _int,
    },
    "solver": {
        "method": _str, "methods": _strs, "budgets": _ints, "max_iters": _int, "step_size": _float,
        "epochs": _int, "epoch_len": _int, "repeats": _int, "rank": _int, "krylov_dim": _int,
        "seed": _int, "damping": _float, "sgd_init": _str, "tail_average": _bool, "eps": _float,
    },
    "subset": {"alpha_grid": _floats, "n_tests": _int},
    "cost": {
        "kappa": _float, "delta": _float, "sigma2": _float, "n": _int, "eps": _float,
        "decay": _str, "methods": _strs,
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    command: str | None = None
    seed: int = 0
    reps: int | None = None  # default: 100 for simulations, 5 for csv data
    n_grid: tuple[int, ...] = (100, 316, 1000)
    population: int | None = None
    population_factor: int = 20
    out: str | None = None
    threads: int = 1
    gnuplot: str | None = None
    data: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    subset: dict = field(default_factory=dict)
    cost: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    @property
    def source(self) -> str:
        return self.data.get("source", "linear")

    @property
    def repetitions(self) -> int:
        if self.reps is not None:
            return self.reps
        return 5 if self.source == "csv" else 100

    def solver_config(self, method: str | None = None, **override) -> SolverConfig:
        kw = {k: v for k, v in self.solver.items() if k not in ("method", "methods", "budgets", "eps")}
        kw["method"] = method or self.solver.get("method", "exact")
        kw.update(override)
        try:
            return SolverConfig(**kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[solver]: {exc}") from exc

    def with_overrides(self, **kw) -> ExperimentConfig:
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def parse_config(text: str, base_dir: Path = Path(".")) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case sensitive
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc

    parsed: dict[str, dict] = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        parsed[section] = {}
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            try:
                parsed[section][key] = SCHEMA[section][key](raw.strip())
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from exc

    exp = parsed.get("experiment", {})
    cfg = ExperimentConfig(
        data=parsed.get("data", {}), solver=parsed.get("solver", {}),
        subset=parsed.get("subset", {}), cost=parsed.get("cost", {}),
        base_dir=base_dir, **exp,
    )
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, path.parent)


def validate(cfg: ExperimentConfig) -> None:
    if cfg.command is not None and cfg.command not in COMMANDS:
        raise ConfigError(f"unknown command {cfg.command!r}")
    if cfg.source not in SOURCES:
        raise ConfigError(f"[data] source must be one of {SOURCES}")
    if cfg.source == "csv":
        for key in ("path", "features", "response", "family"):
            if key not in cfg.data:
                raise ConfigError(f"[data] source = csv needs {key!r}")
    grid = cfg.n_grid
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 1:
        raise ConfigError("n_grid must be positive and strictly ascending")
    if cfg.repetitions < 1:
        raise ConfigError("reps must be at least 1")
    if cfg.threads < 1:
        raise ConfigError("threads must be at least 1")
    for m in (*cfg.solver.get("methods", ()), cfg.solver.get("method", "exact")):
        if m not in METHODS:
            raise ConfigError(f"unknown solver method {m!r}")
    for a in cfg.subset.get("alpha_grid", ()):
        if not 0.0 <= a < 1.0:
            raise ConfigError("alpha values must lie in [0, 1)")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed must fit in an unsigned 64-bit integer")
