"""Stair functions: K-quantisers, the parametric Heaviside and linear B-bit quantisers.

Thresholds are right-inclusive everywhere in the package: an input equal to a
threshold belongs to the upper bin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError


def _check_finite(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DomainError("quantiser input must be finite")
    return arr


def _scalar_or_array(arr: np.ndarray):
    return arr.item() if arr.ndim == 0 else arr


def heaviside(theta: float, x):
    """Parametric Heaviside: 1 where ``theta <= x``, else 0."""
    if not np.isfinite(theta):
        raise DomainError("threshold must be finite")
    arr = _check_finite(x)
    return _scalar_or_array((arr >= theta).astype(np.int64))


@dataclass(frozen=True)
class Quantiser:
    """K-level stair function with ordered levels and K-1 ordered thresholds."""

    levels: tuple[float, ...]
    thresholds: tuple[float, ...]

    def __post_init__(self):
        levels = tuple(float(q) for q in self.levels)
        thresholds = tuple(float(t) for t in self.thresholds)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "thresholds", thresholds)
        if len(levels) < 2:
            raise ConfigError("a quantiser needs at least two levels")
        if len(thresholds) != len(levels) - 1:
            raise ConfigError(
                f"expected {len(levels) - 1} thresholds for {len(levels)} levels, "
                f"got {len(thresholds)}"
            )
        if not all(np.isfinite(levels)) or not all(np.isfinite(thresholds)):
            raise ConfigError("levels and thresholds must be finite")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ConfigError("levels must be strictly increasing")
        if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
            raise ConfigError("thresholds must be strictly increasing")

    @property
    def K(self) -> int:
        return len(self.levels)

    @property
    def jumps(self) -> np.ndarray:
        """Level increments ``q_k - q_{k-1}`` for k = 1..K-1."""
        return np.diff(np.asarray(self.levels))

    @property
    def span(self) -> float:
        return self.levels[-1] - self.levels[0]

    def bin_index(self, x):
        arr = _check_finite(x)
        idx = np.searchsorted(np.asarray(self.thresholds), arr, side="right")
        return _scalar_or_array(idx.astype(np.int64))

    def __call__(self, x):
        arr = _check_finite(x)
        idx = np.searchsorted(np.asarray(self.thresholds), arr, side="right")
        return _scalar_or_array(np.asarray(self.levels)[idx])


def quantise(q: Quantiser, x):
    return q(x)


def bin_index(q: Quantiser, x):
    return q.bin_index(x)


def quantise_by_sum(q: Quantiser, x):
    """Evaluate the stair function as ``q_0 + sum_k dq_k * H(theta_k, x)``.

    Slower than :func:`quantise`; kept as an independent route for checks.
    """
    arr = _check_finite(x)
    out = np.full(arr.shape, q.levels[0])
    for theta, dq in zip(q.thresholds, q.jumps):
        out = out + dq * (arr >= theta)
    return _scalar_or_array(out)


def heaviside_quantiser(theta: float = 0.0) -> Quantiser:
    """The Heaviside step at ``theta`` as a 2-quantiser with levels {0, 1}."""
    return Quantiser((0.0, 1.0), (theta,))


def ternary(scale: float = 1.0) -> Quantiser:
    """Symmetric ternary quantiser {-s, 0, s} with thresholds at +-s/2."""
    if scale <= 0:
        raise ConfigError("ternary scale must be positive")
    return Quantiser((-scale, 0.0, scale), (-scale / 2, scale / 2))


@dataclass(frozen=True)
class LinearQuantiserSpec:
    """Hardware-style linear quantiser: offset ``z``, quantum ``eps``, ``bits``."""

    z: int
    eps: float
    bits: int

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigError("quantum eps must be positive")
        if int(self.bits) != self.bits or self.bits < 1:
            raise ConfigError("precision must be an integer >= 1")
        if int(self.z) != self.z:
            raise ConfigError("offset z must be an integer")

    @property
    def K(self) -> int:
        return 2 ** self.bits

    def to_quantiser(self) -> Quantiser:
        k = np.arange(self.K)
        levels = (self.z + k) * self.eps
        return Quantiser(tuple(levels), tuple(levels[1:]))


def linear_quantise(spec: LinearQuantiserSpec, x):
    """``eps * clip(floor(x / eps), z, z + K - 1)``."""
    arr = _check_finite(x)
    n = np.clip(np.floor(arr / spec.eps), spec.z, spec.z + spec.K - 1)
    return _scalar_or_array(spec.eps * n)
