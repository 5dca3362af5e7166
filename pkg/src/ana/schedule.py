"""Per-layer annealing schedules for the noise mean and standard deviation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from enum import Enum

from .errors import ConfigError
from .noise import NoiseParams


class DecayInterval(str, Enum):
    SAME_START = "same_start"
    SAME_END = "same_end"
    PARTITION = "partition"
    OVERLAPPED = "overlapped"


class DecayPowerLaw(str, Enum):
    HOMOGENEOUS = "homogeneous"
    PROGRESSIVE = "progressive"


@dataclass(frozen=True)
class AnnealingRange:
    t_start: float
    t_end: float

    def __post_init__(self):
        if not 0 <= self.t_start < self.t_end:
            raise ConfigError(
                f"annealing range needs 0 <= t_start < t_end, got [{self.t_start}, {self.t_end}]"
            )


def lambda_at(rng: AnnealingRange, t: float) -> float:
    """Clamped linear ramp: 1 before ``t_start``, 0 after ``t_end``."""
    lam = (rng.t_end - t) / (rng.t_end - rng.t_start)
    return max(0.0, min(lam, 1.0))


@dataclass(frozen=True)
class LayerScheduleSpec:
    range: AnnealingRange = AnnealingRange(0, 1)
    c_alpha: float = 0.0
    c_beta: float = 1.0
    d_alpha: int = 1
    d_beta: int = 1
    static_mean: bool = True
    static_variance: bool = False

    def __post_init__(self):
        if not self.c_beta > 0:
            raise ConfigError("c_beta must be positive; zero noise gives zero gradients")
        if self.c_alpha < 0:
            raise ConfigError("c_alpha must be non-negative")
        if self.static_mean and self.c_alpha != 0:
            raise ConfigError("static_mean requires c_alpha = 0")
        for name in ("d_alpha", "d_beta"):
            d = getattr(self, name)
            if int(d) != d or d < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {d}")

    @property
    def is_static(self) -> bool:
        return self.static_mean and self.static_variance


def params_at(spec: LayerScheduleSpec, t: float) -> NoiseParams:
    lam = lambda_at(spec.range, t)
    mean = 0.0 if spec.static_mean else spec.c_alpha * lam**spec.d_alpha
    std = spec.c_beta if spec.static_variance else spec.c_beta * lam**spec.d_beta
    return NoiseParams(mean, std)


@dataclass(frozen=True)
class ScheduleStrategy:
    decay_interval: DecayInterval = DecayInterval.PARTITION
    decay_power_law: DecayPowerLaw = DecayPowerLaw.HOMOGENEOUS

    def __post_init__(self):
        try:
            object.__setattr__(self, "decay_interval", DecayInterval(self.decay_interval))
            object.__setattr__(self, "decay_power_law", DecayPowerLaw(self.decay_power_law))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def annealing_ranges(interval: DecayInterval, n_layers: int, t_anneal: float) -> list[AnnealingRange]:
    """Ranges for layers 1..L (input first), equally spaced over [0, t_anneal]."""
    L = n_layers
    if L < 2:
        raise ConfigError(f"scheduling needs at least 2 quantised layers, got {L}")
    if not t_anneal > 0:
        raise ConfigError("t_anneal must be positive")
    step = t_anneal / L
    interval = DecayInterval(interval)
    out = []
    for ell in range(1, L + 1):
        if interval is DecayInterval.SAME_START:
            out.append(AnnealingRange(0.0, ell * step))
        elif interval is DecayInterval.SAME_END:
            out.append(AnnealingRange((L - ell) * step, t_anneal))
        elif interval is DecayInterval.PARTITION:
            out.append(AnnealingRange((ell - 1) * step, ell * step))
        else:
            out.append(AnnealingRange(0.0, t_anneal))
    return out


def decay_exponents(law: DecayPowerLaw, n_layers: int) -> list[int]:
    if DecayPowerLaw(law) is DecayPowerLaw.HOMOGENEOUS:
        return [1] * n_layers
    return [max(1, n_layers - ell) for ell in range(1, n_layers + 1)]


def build_schedule(
    strategy: ScheduleStrategy,
    n_layers: int,
    t_anneal: float,
    base: LayerScheduleSpec,
) -> list[LayerScheduleSpec]:
    """One schedule per quantised layer; the float output layer gets none."""
    if base.is_static:
        warnings.warn(
            "static mean and variance: decay interval and power law have no effect",
            stacklevel=2,
        )
    ranges = annealing_ranges(strategy.decay_interval, n_layers, t_anneal)
    exps = decay_exponents(strategy.decay_power_law, n_layers)
    return [replace(base, range=r, d_alpha=d, d_beta=d) for r, d in zip(ranges, exps)]


def static_schedule(n_layers: int, c_beta: float) -> list[LayerScheduleSpec]:
    """Constant zero-mean noise on every layer: plain straight-through training."""
    spec = LayerScheduleSpec(c_beta=c_beta, static_mean=True, static_variance=True)
    return [spec] * n_layers
