"""Additive noise families parametrised by mean and standard deviation.

All four families are symmetric about their mean. ``std == 0`` is the Dirac
state: its CDF is the right-inclusive step at the mean, so an annealed
regulariser reproduces the quantiser exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import special

from .errors import ConfigError, DomainError

SQRT3 = math.sqrt(3.0)
SQRT6 = math.sqrt(6.0)
SQRT2PI = math.sqrt(2.0 * math.pi)
LOGISTIC_SCALE = SQRT3 / math.pi  # std -> logistic scale


class NoiseFamily(str, Enum):
    UNIFORM = "uniform"
    TRIANGULAR = "triangular"
    NORMAL = "normal"
    LOGISTIC = "logistic"

    @property
    def compact(self) -> bool:
        return self in (NoiseFamily.UNIFORM, NoiseFamily.TRIANGULAR)

    @property
    def strictly_increasing_cdf(self) -> bool:
        return not self.compact


@dataclass(frozen=True)
class NoiseParams:
    mean: float = 0.0
    std: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.mean) and np.isfinite(self.std)):
            raise ConfigError("noise parameters must be finite")
        if self.std < 0:
            raise ConfigError(f"noise std must be non-negative, got {self.std}")

    @property
    def is_dirac(self) -> bool:
        return self.std == 0.0


def _family(family) -> NoiseFamily:
    try:
        return NoiseFamily(family)
    except ValueError:
        raise ConfigError(f"unknown noise family {family!r}") from None


def _out(arr: np.ndarray):
    return arr.item() if arr.ndim == 0 else arr


def half_width(family, params: NoiseParams) -> float:
    """Half-width of the support for compact families (inf otherwise)."""
    family = _family(family)
    if family is NoiseFamily.UNIFORM:
        return SQRT3 * params.std
    if family is NoiseFamily.TRIANGULAR:
        return SQRT6 * params.std
    return math.inf


def pdf(family, params: NoiseParams, x):
    family = _family(family)
    if params.is_dirac:
        raise DomainError("density of a degenerate (std = 0) distribution is undefined")
    u = np.asarray(x, dtype=np.float64) - params.mean
    beta = params.std
    if family is NoiseFamily.UNIFORM:
        w = SQRT3 * beta
        out = np.where(np.abs(u) <= w, 1.0 / (2.0 * w), 0.0)
    elif family is NoiseFamily.TRIANGULAR:
        c = SQRT6 * beta
        out = np.maximum(c - np.abs(u), 0.0) / (c * c)
    elif family is NoiseFamily.NORMAL:
        z = u / beta
        out = np.exp(-0.5 * z * z) / (SQRT2PI * beta)
    else:
        s = beta * LOGISTIC_SCALE
        e = np.exp(-np.abs(u) / s)
        out = e / (s * (1.0 + e) ** 2)
    return _out(out)


def cdf(family, params: NoiseParams, x):
    family = _family(family)
    u = np.asarray(x, dtype=np.float64) - params.mean
    if params.is_dirac:
        return _out((u >= 0).astype(np.float64))
    beta = params.std
    if family is NoiseFamily.UNIFORM:
        w = SQRT3 * beta
        out = np.clip((u + w) / (2.0 * w), 0.0, 1.0)
    elif family is NoiseFamily.TRIANGULAR:
        c = SQRT6 * beta
        v = np.clip(u, -c, c)
        lo = (v + c) ** 2 / (2.0 * c * c)
        hi = 1.0 - (c - v) ** 2 / (2.0 * c * c)
        out = np.where(v < 0, lo, hi)
    elif family is NoiseFamily.NORMAL:
        out = special.ndtr(u / beta)
    else:
        out = special.expit(u / (beta * LOGISTIC_SCALE))
    return _out(np.asarray(out, dtype=np.float64))


def ppf(family, params: NoiseParams, y):
    """Quantile function; closed forms for every family."""
    family = _family(family)
    y = np.asarray(y, dtype=np.float64)
    if np.any((y < 0) | (y > 1)):
        raise DomainError("quantile level must lie in [0, 1]")
    if params.is_dirac:
        return _out(np.full(y.shape, params.mean))
    beta = params.std
    if family is NoiseFamily.UNIFORM:
        w = SQRT3 * beta
        out = -w + 2.0 * w * y
    elif family is NoiseFamily.TRIANGULAR:
        c = SQRT6 * beta
        out = np.where(y < 0.5, c * (np.sqrt(2.0 * y) - 1.0), c * (1.0 - np.sqrt(2.0 * (1.0 - y))))
    elif family is NoiseFamily.NORMAL:
        out = beta * special.ndtri(y)
    else:
        out = beta * LOGISTIC_SCALE * special.logit(y)
    return _out(params.mean + out)


def max_density(family, params: NoiseParams) -> float:
    """Supremum of the density (attained at the mean)."""
    family = _family(family)
    if params.is_dirac:
        return math.inf
    beta = params.std
    if family is NoiseFamily.UNIFORM:
        return 1.0 / (2.0 * SQRT3 * beta)
    if family is NoiseFamily.TRIANGULAR:
        return 1.0 / (SQRT6 * beta)
    if family is NoiseFamily.NORMAL:
        return 1.0 / (SQRT2PI * beta)
    return 1.0 / (4.0 * beta * LOGISTIC_SCALE)


def sample(family, params: NoiseParams, rng: np.random.Generator, size=None):
    """Draw from the family with an explicitly supplied generator."""
    family = _family(family)
    if params.is_dirac:
        if size is None:
            return float(params.mean)
        return np.full(size, float(params.mean))
    a, beta = params.mean, params.std
    if family is NoiseFamily.UNIFORM:
        w = SQRT3 * beta
        return rng.uniform(a - w, a + w, size)
    if family is NoiseFamily.TRIANGULAR:
        c = SQRT6 * beta
        return rng.triangular(a - c, a, a + c, size)
    if family is NoiseFamily.NORMAL:
        return rng.normal(a, beta, size)
    return rng.logistic(a, beta * LOGISTIC_SCALE, size)


# two-sided 97.5% quantiles of the standard (unit-std) target families
_CENTRAL_95 = {
    NoiseFamily.NORMAL: float(special.ndtri(0.975)),
    NoiseFamily.LOGISTIC: math.log(39.0) * LOGISTIC_SCALE,
}


def equivalent_params(target, compact, params: NoiseParams) -> NoiseParams:
    """Full-support parameters putting exactly 95% of the mass on the compact support.

    The mean is preserved; the returned std makes the ``target`` family assign
    probability 0.95 to the support of ``compact`` with ``params``.
    """
    target, compact = _family(target), _family(compact)
    if not compact.compact or target.compact:
        raise ConfigError(
            f"equivalence maps a compact family to a full-support one, got "
            f"{compact.value} -> {target.value}"
        )
    w = half_width(compact, params)
    return NoiseParams(params.mean, w / _CENTRAL_95[target])
