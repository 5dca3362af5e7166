"""Additive noise annealing for training quantised feedforward networks."""

from .errors import (
    AnaError,
    ConfigError,
    DomainError,
    NumericError,
    ShapeError,
    StateError,
    UnsupportedFamilyError,
)
from .noise import NoiseFamily, NoiseParams
from .quantiser import LinearQuantiserSpec, Quantiser, heaviside, linear_quantise, quantise
from .regulariser import RegularisedActivation, Strategy

__all__ = [
    "AnaError",
    "ConfigError",
    "DomainError",
    "NumericError",
    "ShapeError",
    "StateError",
    "UnsupportedFamilyError",
    "NoiseFamily",
    "NoiseParams",
    "LinearQuantiserSpec",
    "Quantiser",
    "heaviside",
    "linear_quantise",
    "quantise",
    "RegularisedActivation",
    "Strategy",
]
