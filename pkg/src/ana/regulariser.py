"""Noise-regularised quantisers.

Adding noise ``nu`` to the input of a quantiser and taking expectations gives

    E[sigma(x - nu)] = q_0 + sum_k (q_k - q_{k-1}) * F(x - theta_k)

where ``F`` is the noise CDF. Its derivative replaces ``F`` by the density.
The same noisy quantiser also defines level probabilities, whose argmax
(mode) and categorical draw (random) are the two sampling forwards.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from . import noise
from .errors import ConfigError
from .noise import NoiseFamily, NoiseParams
from .quantiser import Quantiser


class Strategy(str, Enum):
    EXPECTATION = "expectation"
    MODE = "mode"
    RANDOM = "random"


def as_strategy(value) -> Strategy:
    try:
        return Strategy(value)
    except ValueError:
        raise ConfigError(f"unknown forward strategy {value!r}") from None


def _out(arr):
    arr = np.asarray(arr)
    return arr.item() if arr.ndim == 0 else arr


@dataclass(frozen=True)
class RegularisedActivation:
    quantiser: Quantiser
    family: NoiseFamily = NoiseFamily.UNIFORM
    params: NoiseParams = NoiseParams()
    strategy: Strategy = Strategy.MODE

    def __post_init__(self):
        object.__setattr__(self, "family", NoiseFamily(self.family))
        object.__setattr__(self, "strategy", as_strategy(self.strategy))

    def with_params(self, params: NoiseParams) -> "RegularisedActivation":
        return replace(self, params=params)

    def _shifted(self, x) -> np.ndarray:
        # columns: x - theta_k, k = 1..K-1
        x = np.asarray(x, dtype=np.float64)
        return x[..., None] - np.asarray(self.quantiser.thresholds)

    def expectation(self, x):
        """Smooth forward: expected quantiser output under input noise."""
        F = noise.cdf(self.family, self.params, self._shifted(x))
        out = self.quantiser.levels[0] + np.asarray(F) @ self.quantiser.jumps
        return _out(out)

    def derivative(self, x):
        """Exact derivative of :meth:`expectation`; zero once annealed."""
        x = np.asarray(x, dtype=np.float64)
        if self.params.is_dirac:
            return _out(np.zeros(x.shape))
        f = noise.pdf(self.family, self.params, self._shifted(x))
        return _out(np.asarray(f) @ self.quantiser.jumps)

    def level_probabilities(self, x) -> np.ndarray:
        """Probability of each level; last axis has length K."""
        F = np.asarray(noise.cdf(self.family, self.params, self._shifted(x)))
        ones = np.ones(F.shape[:-1] + (1,))
        zeros = np.zeros(F.shape[:-1] + (1,))
        # P(x - nu >= theta_k) = F(x - theta_k); bin k lies between theta_k and theta_{k+1}
        upper = np.concatenate([ones, F], axis=-1)
        lower = np.concatenate([F, zeros], axis=-1)
        return np.maximum(upper - lower, 0.0)

    def mode(self, x):
        """Most probable level; ties resolve to the lower level."""
        p = self.level_probabilities(x)
        idx = np.argmax(p, axis=-1)
        return _out(np.asarray(self.quantiser.levels)[idx])

    def random(self, x, rng: np.random.Generator):
        """One categorical draw per element from :meth:`level_probabilities`."""
        p = self.level_probabilities(x)
        cum = np.cumsum(p, axis=-1)
        u = rng.random(p.shape[:-1])
        idx = (u[..., None] >= cum[..., :-1]).sum(axis=-1)
        return _out(np.asarray(self.quantiser.levels)[idx])

    def forward(self, x, strategy=None, rng: np.random.Generator | None = None):
        strategy = self.strategy if strategy is None else as_strategy(strategy)
        if strategy is Strategy.EXPECTATION:
            return self.expectation(x)
        if strategy is Strategy.MODE:
            return self.mode(x)
        if rng is None:
            raise ConfigError("random forward strategy needs a generator")
        return self.random(x, rng)

    __call__ = forward

    def lipschitz_bound(self) -> float:
        return self.quantiser.span * noise.max_density(self.family, self.params)


# function-style aliases


def expectation_forward(a: RegularisedActivation, x):
    return a.expectation(x)


def backward(a: RegularisedActivation, x):
    return a.derivative(x)


def level_probabilities(a: RegularisedActivation, x):
    return a.level_probabilities(x)


def mode_forward(a: RegularisedActivation, x):
    return a.mode(x)


def random_forward(a: RegularisedActivation, x, rng: np.random.Generator):
    return a.random(x, rng)
