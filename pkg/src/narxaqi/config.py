"""Application config: one YAML file, overridable from the command line."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import yaml

from .dataset import CsvSchema
from .errors import ConfigurationError
from .evalpipe import EvalConfig
from .lm import TrainConfig

EXAMPLE = """\
# narxaqi configuration; every key is optional.
breakpoints: null        # YAML breakpoint table, null = bundled EPA table
run_count: 10
seed: 0
out: out
train:
  mu0: 1.0e-3
  beta: 10.0
  mu_max: 1.0e10
  grad_tol: 1.0e-7
  error_goal: 0.0
  max_epochs: 1000
  val_patience: 6
narx:
  hidden: [10]
  activation: tanh
  d: 1
split:
  narx: [0.70, 0.15, 0.15]
  lr: [0.75, 0.0, 0.15]
meteo: null              # list of features, null = all observed
pollutants: null         # list of pollutant kinds, null = all observed
schema:
  timestamp: timestamp
  site: site
"""


@dataclass
class AppConfig:
    schema: CsvSchema = field(default_factory=CsvSchema)
    breakpoints: Optional[Path] = None
    train: TrainConfig = TrainConfig()
    hidden: tuple[int, ...] = (10,)
    activation: str = "tanh"
    d: int = 1
    narx_ratios: tuple[float, float, float] = (0.70, 0.15, 0.15)
    lr_ratios: tuple[float, float, float] = (0.75, 0.0, 0.15)
    meteo: Optional[tuple[str, ...]] = None
    pollutants: Optional[tuple[str, ...]] = None
    run_count: int = 10
    seed: int = 0
    out: Path = Path("out")

    def eval_config(self) -> EvalConfig:
        return EvalConfig(train=replace(self.train, seed=self.seed), hidden=self.hidden,
                          activation=self.activation, narx_ratios=self.narx_ratios,
                          lr_ratios=self.lr_ratios, d=self.d, meteo=self.meteo,
                          pollutants=self.pollutants)

    def validate(self) -> "AppConfig":
        for name in ("narx_ratios", "lr_ratios"):
            r = getattr(self, name)
            if len(r) != 3 or min(r) < 0 or sum(r) > 1 + 1e-9 or r[2] <= 0:
                raise ConfigurationError(f"{name} must be three non-negative ratios summing "
                                         f"to <= 1 with a positive test share, got {r}")
        if self.run_count < 1:
            raise ConfigurationError("run_count must be >= 1")
        if self.breakpoints is not None and not Path(self.breakpoints).is_file():
            raise ConfigurationError(f"breakpoint file not found: {self.breakpoints}")
        return self


def parse_ratios(text: str) -> tuple[float, float, float]:
    try:
        parts = tuple(float(p) for p in text.split(","))
    except ValueError:
        raise ConfigurationError(f"bad ratios {text!r}") from None
    if len(parts) != 3:
        raise ConfigurationError(f"ratios need three values, got {text!r}")
    return parts


def _ratios(value, name):
    if isinstance(value, str):
        return parse_ratios(value)
    try:
        r = tuple(float(v) for v in value)
    except TypeError:
        raise ConfigurationError(f"{name} must be a list of three numbers") from None
    if len(r) != 3:
        raise ConfigurationError(f"{name} must have three entries")
    return r


def load_config(path: Optional[str | Path] = None) -> AppConfig:
    """Read a YAML config; relative paths resolve against the file's directory."""
    if path is None:
        return AppConfig()
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"invalid config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError("config root must be a mapping")
    base = path.parent
    cfg = AppConfig()
    try:
        if "schema" in data:
            cfg.schema = CsvSchema.from_dict(data["schema"])
        if data.get("breakpoints"):
            cfg.breakpoints = base / data["breakpoints"]
        if "train" in data:
            known = {f.name for f in fields(TrainConfig)}
            unknown = set(data["train"]) - known
            if unknown:
                raise ConfigurationError(f"unknown train keys {sorted(unknown)}")
            # YAML 1.1 reads "1.0e10" as a string, so coerce by declared type
            types = {f.name: (int if f.type in ("int", int) else float)
                     for f in fields(TrainConfig)}
            cfg.train = TrainConfig(**{k: types[k](v) for k, v in data["train"].items()})
        narx = data.get("narx", {})
        if "hidden" in narx:
            cfg.hidden = tuple(int(h) for h in narx["hidden"])
        cfg.activation = narx.get("activation", cfg.activation)
        cfg.d = int(narx.get("d", cfg.d))
        sp = data.get("split", {})
        if "narx" in sp:
            cfg.narx_ratios = _ratios(sp["narx"], "split.narx")
        if "lr" in sp:
            cfg.lr_ratios = _ratios(sp["lr"], "split.lr")
        if data.get("meteo") is not None:
            cfg.meteo = tuple(data["meteo"])
        if data.get("pollutants") is not None:
            cfg.pollutants = tuple(data["pollutants"])
        cfg.run_count = int(data.get("run_count", cfg.run_count))
        cfg.seed = int(data.get("seed", cfg.seed))
        if "out" in data:
            cfg.out = base / data["out"]
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"invalid config value: {exc}") from exc
    return cfg.validate()
