"""Experiment configuration: sectioned key-value files (INI syntax).

Every key has a default, so an empty file is a valid configuration. Unknown
sections or keys, malformed values and forbidden combinations are collected
and reported together in one :class:`ConfigError`.

Reference (section / key = default)::

    [experiment]  seed = 0, output = runs/default
    [network]     hidden = 16,16,16   levels = -1,0,1   thresholds = -0.5,0.5
                  quantise_weights = true   weight_levels = <levels>
                  weight_thresholds = <thresholds>
    [noise]       family = uniform   match_compact = none   c_alpha = 0.0
                  c_beta = 0.5   static_mean = true   static_variance = false
                  decay_interval = partition   decay_power_law = homogeneous
                  anneal_fraction = 0.7
    [train]       strategy = mode   epochs = 200   batch_size = 32
                  learning_rate = 0.01   optimiser = adam   adam_beta1 = 0.9
                  adam_beta2 = 0.999   adam_eps = 1e-8   lr_drop_epoch = none
                  lr_drop_factor = 0.1   stop_early = false
    [data]        generator = two_moons   size = 1000   noise = 0.1
                  val_fraction = 0.2   classes = 2   seed = <experiment seed>
                  features_path, labels_path, n_features (file generator only)
    [regcurve]    family = uniform   mean = 0.5   std = 1/(2 sqrt 3)
                  levels = 0,1   thresholds = 0   x_min = -2   x_max = 2
                  points = 4001
    [check]       family = logistic   layers = 3   lambda_powers = 1
                  mean_coef = -1   mean_power = 0.5   std_coef = 1
                  std_power = 1   rate_powers = <search>   epsilon = 1
                  grid_exponents = 20   tol = 0.01   widths = 2,8,8,8,2
    [sweep]       decay_intervals = partition,same_start,same_end,overlapped
                  strategies = mode   seeds = <experiment seed>
                  include_static = false
"""

from __future__ import annotations

import configparser
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from .datasets import DatasetSpec
from .errors import ConfigError
from .noise import NoiseFamily
from .regulariser import Strategy
from .schedule import DecayInterval, DecayPowerLaw

_NONE = ("", "none", "null")


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(v) for v in s.split(",") if v.strip())


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in s.split(",") if v.strip())


def _words(s: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in s.split(",") if v.strip())


def _opt_int(s: str):
    return None if s.strip().lower() in _NONE else int(s)


def _opt_str(s: str):
    return None if s.strip().lower() in _NONE else s.strip()


def _opt_floats(s: str):
    return None if s.strip().lower() in _NONE else _floats(s)


def _opt_ints(s: str):
    return None if s.strip().lower() in _NONE else _ints(s)


def _enum(cls):
    def parse(s: str):
        return cls(s.strip())

    return parse


SCHEMA = {
    "experiment": {"seed": int, "output": str},
    "network": {
        "hidden": _ints,
        "levels": _floats,
        "thresholds": _floats,
        "quantise_weights": _bool,
        "weight_levels": _opt_floats,
        "weight_thresholds": _opt_floats,
    },
    "noise": {
        "family": _words,
        "match_compact": _opt_str,
        "c_alpha": float,
        "c_beta": float,
        "static_mean": _bool,
        "static_variance": _bool,
        "decay_interval": _enum(DecayInterval),
        "decay_power_law": _enum(DecayPowerLaw),
        "anneal_fraction": float,
    },
    "train": {
        "strategy": _enum(Strategy),
        "epochs": int,
        "batch_size": int,
        "learning_rate": float,
        "optimiser": str,
        "adam_beta1": float,
        "adam_beta2": float,
        "adam_eps": float,
        "lr_drop_epoch": _opt_int,
        "lr_drop_factor": float,
        "stop_early": _bool,
    },
    "data": {
        "generator": str,
        "size": int,
        "noise": float,
        "val_fraction": float,
        "classes": int,
        "seed": _opt_int,
        "features_path": _opt_str,
        "labels_path": _opt_str,
        "n_features": _opt_int,
    },
    "regcurve": {
        "family": _enum(NoiseFamily),
        "mean": float,
        "std": float,
        "levels": _floats,
        "thresholds": _floats,
        "x_min": float,
        "x_max": float,
        "points": int,
    },
    "check": {
        "family": _enum(NoiseFamily),
        "layers": int,
        "lambda_powers": _floats,
        "mean_coef": float,
        "mean_power": float,
        "std_coef": float,
        "std_power": float,
        "rate_powers": _opt_floats,
        "epsilon": float,
        "grid_exponents": int,
        "tol": float,
        "widths": _ints,
    },
    "sweep": {
        "decay_intervals": _words,
        "strategies": _words,
        "seeds": _opt_ints,
        "include_static": _bool,
    },
}


@dataclass
class NetworkSection:
    hidden: tuple[int, ...] = (16, 16, 16)
    levels: tuple[float, ...] = (-1.0, 0.0, 1.0)
    thresholds: tuple[float, ...] = (-0.5, 0.5)
    quantise_weights: bool = True
    weight_levels: tuple[float, ...] | None = None
    weight_thresholds: tuple[float, ...] | None = None


@dataclass
class NoiseSection:
    family: tuple[str, ...] = ("uniform",)
    match_compact: str | None = None
    c_alpha: float = 0.0
    c_beta: float = 0.5
    static_mean: bool = True
    static_variance: bool = False
    decay_interval: DecayInterval = DecayInterval.PARTITION
    decay_power_law: DecayPowerLaw = DecayPowerLaw.HOMOGENEOUS
    anneal_fraction: float = 0.7


@dataclass
class TrainSection:
    strategy: Strategy = Strategy.MODE
    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 0.01
    optimiser: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    lr_drop_epoch: int | None = None
    lr_drop_factor: float = 0.1
    stop_early: bool = False


@dataclass
class DataSection:
    generator: str = "two_moons"
    size: int = 1000
    noise: float = 0.1
    val_fraction: float = 0.2
    classes: int = 2
    seed: int | None = None
    features_path: str | None = None
    labels_path: str | None = None
    n_features: int | None = None


@dataclass
class RegcurveSection:
    family: NoiseFamily = NoiseFamily.UNIFORM
    mean: float = 0.5
    std: float = 1.0 / (2.0 * math.sqrt(3.0))
    levels: tuple[float, ...] = (0.0, 1.0)
    thresholds: tuple[float, ...] = (0.0,)
    x_min: float = -2.0
    x_max: float = 2.0
    points: int = 4001


@dataclass
class CheckSection:
    family: NoiseFamily = NoiseFamily.LOGISTIC
    layers: int = 3
    lambda_powers: tuple[float, ...] = (1.0,)
    mean_coef: float = -1.0
    mean_power: float = 0.5
    std_coef: float = 1.0
    std_power: float = 1.0
    rate_powers: tuple[float, ...] | None = None
    epsilon: float = 1.0
    grid_exponents: int = 20
    tol: float = 1e-2
    widths: tuple[int, ...] = (2, 8, 8, 8, 2)


@dataclass
class SweepSection:
    decay_intervals: tuple[str, ...] = tuple(d.value for d in DecayInterval)
    strategies: tuple[str, ...] = ("mode",)
    seeds: tuple[int, ...] | None = None
    include_static: bool = False


@dataclass
class ExperimentConfig:
    seed: int = 0
    output: str = "runs/default"
    network: NetworkSection = field(default_factory=NetworkSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    train: TrainSection = field(default_factory=TrainSection)
    data: DataSection = field(default_factory=DataSection)
    regcurve: RegcurveSection = field(default_factory=RegcurveSection)
    check: CheckSection = field(default_factory=CheckSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    base_dir: Path = Path(".")
    warnings: list[str] = field(default_factory=list)

    @property
    def dataset(self) -> DatasetSpec:
        d = self.data
        return DatasetSpec(
            generator=d.generator,
            size=d.size,
            noise=d.noise,
            val_fraction=d.val_fraction,
            classes=d.classes,
            seed=self.seed if d.seed is None else d.seed,
            features_path=d.features_path,
            labels_path=d.labels_path,
            n_features=d.n_features,
        )

    @property
    def sweep_seeds(self) -> list[int]:
        if self.sweep.seeds is None:
            return [self.seed]
        return [int(s) for s in self.sweep.seeds]


def validate(cfg: ExperimentConfig) -> list[str]:
    """Cross-field checks; returns messages naming the offending keys."""
    errs = []
    net, nz, tr = cfg.network, cfg.noise, cfg.train
    if len(net.thresholds) != len(net.levels) - 1:
        errs.append("network.thresholds: need one fewer threshold than levels")
    if any(b <= a for a, b in zip(net.levels, net.levels[1:])):
        errs.append("network.levels: must be strictly increasing")
    if any(b <= a for a, b in zip(net.thresholds, net.thresholds[1:])):
        errs.append("network.thresholds: must be strictly increasing")
    wl = net.weight_levels or net.levels
    wt = net.weight_thresholds or net.thresholds
    if len(wt) != len(wl) - 1:
        errs.append("network.weight_thresholds: need one fewer threshold than weight_levels")
    if any(h < 1 for h in net.hidden) or not net.hidden:
        errs.append("network.hidden: need at least one hidden layer of positive width")
    for fam in nz.family:
        try:
            NoiseFamily(fam)
        except ValueError:
            errs.append(f"noise.family: unknown family {fam!r}")
    if len(nz.family) not in (1, len(net.hidden)):
        errs.append("noise.family: give one family or one per hidden layer")
    if nz.match_compact is not None:
        if nz.match_compact not in ("uniform", "triangular"):
            errs.append("noise.match_compact: must be uniform, triangular or none")
        elif any(NoiseFamily(f).compact for f in nz.family if f in NoiseFamily._value2member_map_):
            errs.append("noise.match_compact: only applies to normal/logistic families")
    if not nz.c_beta > 0:
        errs.append("noise.c_beta: must be positive (zero noise gives zero gradients)")
    if nz.c_alpha < 0:
        errs.append("noise.c_alpha: must be non-negative")
    if nz.static_mean and nz.c_alpha != 0:
        errs.append("noise.c_alpha: must be 0 when static_mean = true")
    if not 0 < nz.anneal_fraction <= 1:
        errs.append("noise.anneal_fraction: must lie in (0, 1]")
    if nz.static_variance and tr.strategy is Strategy.EXPECTATION:
        errs.append(
            "train.strategy: expectation forward cannot be combined with noise.static_variance = true "
            "(the noise never collapses, so removing it at deployment changes the learnt function)"
        )
    if not nz.static_variance and len(net.hidden) < 2:
        errs.append("network.hidden: annealing schedules need at least 2 quantised layers")
    if tr.epochs < 1:
        errs.append("train.epochs: must be >= 1")
    if tr.batch_size < 1:
        errs.append("train.batch_size: must be >= 1")
    if tr.learning_rate < 0:
        errs.append("train.learning_rate: must be non-negative")
    if tr.optimiser not in ("sgd", "adam"):
        errs.append(f"train.optimiser: unknown optimiser {tr.optimiser!r}")
    if not 0 <= cfg.seed < 2**64:
        errs.append("experiment.seed: must be an unsigned 64-bit integer")
    try:
        cfg.dataset
    except ConfigError as exc:
        errs.append(f"data: {exc}")
    rc = cfg.regcurve
    if len(rc.thresholds) != len(rc.levels) - 1:
        errs.append("regcurve.thresholds: need one fewer threshold than levels")
    if rc.std < 0:
        errs.append("regcurve.std: must be non-negative")
    if rc.points < 2 or not rc.x_max > rc.x_min:
        errs.append("regcurve.points: need points >= 2 and x_max > x_min")
    ck = cfg.check
    if ck.layers < 1:
        errs.append("check.layers: must be >= 1")
    if len(ck.lambda_powers) not in (1, ck.layers):
        errs.append("check.lambda_powers: give one power or one per layer")
    if ck.rate_powers is not None and len(ck.rate_powers) != ck.layers + 1:
        errs.append("check.rate_powers: need layers + 1 exponents")
    if ck.grid_exponents < 1:
        errs.append("check.grid_exponents: must be >= 1")
    if len(ck.widths) != ck.layers + 2:
        errs.append("check.widths: need layers + 2 sizes (input, hidden..., output)")
    for d in cfg.sweep.decay_intervals:
        if d not in DecayInterval._value2member_map_:
            errs.append(f"sweep.decay_intervals: unknown decay interval {d!r}")
    for s in cfg.sweep.strategies:
        if s not in Strategy._value2member_map_:
            errs.append(f"sweep.strategies: unknown strategy {s!r}")
    return errs


_SECTIONS = {
    "network": NetworkSection,
    "noise": NoiseSection,
    "train": TrainSection,
    "data": DataSection,
    "regcurve": RegcurveSection,
    "check": CheckSection,
    "sweep": SweepSection,
}


def parse_config_text(text: str, base_dir: Path = Path(".")) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    errors = []
    values: dict[str, dict] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            errors.append(f"{section}: unknown section")
            continue
        values[section] = {}
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                errors.append(f"{section}.{key}: unknown key")
                continue
            try:
                values[section][key] = SCHEMA[section][key](raw)
            except (ValueError, TypeError) as exc:
                errors.append(f"{section}.{key}: invalid value {raw!r} ({exc})")
    if errors:
        raise ConfigError("; ".join(errors))
    exp = values.pop("experiment", {})
    kwargs = {name: cls(**values.get(name, {})) for name, cls in _SECTIONS.items()}
    cfg = ExperimentConfig(**exp, **kwargs, base_dir=base_dir)
    errors = validate(cfg)
    if cfg.noise.static_mean and cfg.noise.static_variance:
        for key in ("decay_interval", "decay_power_law"):
            if key in values.get("noise", {}):
                cfg.warnings.append(f"noise.{key}: not relevant for static noise, value ignored")
    if errors:
        raise ConfigError("; ".join(errors))
    for msg in cfg.warnings:
        warnings.warn(msg, stacklevel=2)
    return cfg


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"configuration file not found: {path}")
    return parse_config_text(path.read_text(encoding="utf-8"), path.parent)
