"""Numerical checks of compositional convergence for Heaviside networks.

A network whose hidden activations are the Heaviside step is regularised
layer by layer with noise whose parameters depend on a global ``lam``. The
regularised features converge to the quantised ones at per-layer rates
``r_l(lam) = lam ** p_l`` provided four limit conditions hold along
``lam -> 0``. A numerical checker cannot prove limits, so every condition is
turned into a trend over a decreasing ``lam`` grid: the trend passes when it is
eventually non-increasing and ends below a tolerance.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from . import noise
from .errors import ConfigError, DomainError, UnsupportedFamilyError
from .network import QUANTISED, Network
from .noise import NoiseFamily, NoiseParams
from .quantiser import heaviside_quantiser
from .regulariser import RegularisedActivation
from .schedule import AnnealingRange, lambda_at

DEFAULT_GRID = tuple(2.0**-k for k in range(1, 21))
DEFAULT_TOL = 1e-2
RATE_CANDIDATES = (0.25, 0.5, 1.0, 2.0)


@dataclass(frozen=True)
class PowerLaw:
    """``lam -> coef * lam ** power``; ``power = 0`` gives a constant."""

    coef: float = 1.0
    power: float = 1.0

    def __call__(self, lam: float) -> float:
        return self.coef * lam**self.power


@dataclass(frozen=True)
class RampLaw:
    """Schedule-style law: a layer's ramp read at virtual time ``1 - lam``.

    Lets the decay-interval ranges of the training schedule be replayed on
    the ``lam`` grid, with the whole anneal mapped onto ``[0, 1]``.
    """

    t_start: float
    t_end: float

    def __call__(self, lam: float) -> float:
        return lambda_at(AnnealingRange(self.t_start, self.t_end), 1.0 - lam)


@dataclass(frozen=True)
class LayerLaw:
    """How one layer's noise depends on the global parameter.

    ``lam`` maps the global parameter to the layer's own ``lam_l``; ``mean``
    and ``std`` map ``lam_l`` to the noise mean and standard deviation.
    """

    family: NoiseFamily = NoiseFamily.LOGISTIC
    lam: Callable[[float], float] = PowerLaw(1.0, 1.0)
    mean: Callable[[float], float] = PowerLaw(0.0, 1.0)
    std: Callable[[float], float] = PowerLaw(1.0, 1.0)

    def params(self, lam: float) -> NoiseParams:
        lam_l = self.lam(lam)
        return NoiseParams(float(self.mean(lam_l)), float(self.std(lam_l)))

    def activation(self, lam: float) -> RegularisedActivation:
        return RegularisedActivation(heaviside_quantiser(), self.family, self.params(lam))


@dataclass(frozen=True)
class ConvergenceRate:
    exponents: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "exponents", tuple(float(p) for p in self.exponents))
        if any(not p > 0 for p in self.exponents):
            raise ConfigError("rate exponents must be positive")

    def __call__(self, layer: int, lam: float) -> float:
        return lam ** self.exponents[layer]

    def __len__(self) -> int:
        return len(self.exponents)


# ----------------------------------------------------------------------------
# inversion


def _bracket(f, lo, hi):
    # widen until f(lo) < 0 < f(hi)
    for _ in range(200):
        if f(lo) < 0:
            break
        lo -= 2 * (hi - lo)
    for _ in range(200):
        if f(hi) > 0:
            break
        hi += 2 * (hi - lo)
    return lo, hi


def _check_invertible(a: RegularisedActivation):
    if not a.family.strictly_increasing_cdf:
        raise UnsupportedFamilyError(
            f"{a.family.value} noise has compact support; its regulariser is not strictly increasing"
        )
    if a.params.is_dirac:
        raise UnsupportedFamilyError("an annealed regulariser is a step and cannot be inverted")


def invert_regulariser(a: RegularisedActivation, y: float, xtol: float = 1e-12) -> float:
    """Solve ``a.expectation(x) = y`` by bisection."""
    _check_invertible(a)
    q = a.quantiser
    if not q.levels[0] < y < q.levels[-1]:
        raise DomainError(f"target {y} outside the open range ({q.levels[0]}, {q.levels[-1]})")
    scale = a.params.std + abs(a.params.mean)
    lo, hi = _bracket(lambda x: a.expectation(x) - y, q.thresholds[0] - scale, q.thresholds[-1] + scale)
    return optimize.bisect(lambda x: a.expectation(x) - y, lo, hi, xtol=xtol, maxiter=2000)


def heaviside_inverse(family, params: NoiseParams, y=None, tail=None, xtol: float = 1e-12) -> float:
    """Inverse of the regularised Heaviside ``s -> F(s)`` by bisection.

    Give either ``y`` (solve ``F(s) = y``) or ``tail`` (solve ``1 - F(s) = tail``);
    the tail form keeps precision when ``y`` is within rounding of 1.
    """
    a = RegularisedActivation(heaviside_quantiser(), family, params)
    _check_invertible(a)
    if (y is None) == (tail is None):
        raise ConfigError("give exactly one of y and tail")
    if y is not None:
        if not 0 < y < 1:
            raise DomainError("y must lie in (0, 1)")
        f = lambda s: noise.cdf(family, params, s) - y  # noqa: E731
    else:
        if not 0 < tail < 1:
            raise DomainError("tail must lie in (0, 1)")
        mirrored = NoiseParams(-params.mean, params.std)
        # survival via symmetry: 1 - F(s) = F_mirrored(-s)
        f = lambda s: tail - noise.cdf(family, mirrored, -s)  # noqa: E731
    scale = params.std + abs(params.mean)
    lo, hi = _bracket(f, -scale, scale)
    return optimize.bisect(f, lo, hi, xtol=xtol, maxiter=2000)


# ----------------------------------------------------------------------------
# hypothesis report

CONDITIONS = ("H_i", "H_ii", "H_iii", "H_iv")
STRUCTURAL = ("lambda_to_zero", "pointwise", "strictly_increasing", "unit_range")


def trend_passes(values: Sequence[float], tol: float = DEFAULT_TOL) -> bool:
    """Eventually non-increasing and final value below ``tol``."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return False
    window = v[-max(3, v.size // 4) :]
    if not np.all(np.isfinite(window)):
        return False
    steps_ok = np.all(window[1:] <= window[:-1] * (1 + 1e-9) + 1e-300)
    return bool(steps_ok and window[-1] < tol)


@dataclass
class ConditionResult:
    name: str
    layer: int  # 1-based
    values: list[float]
    passed: bool


@dataclass
class HypothesisReport:
    grid: list[float]
    epsilon: float
    rates: ConvergenceRate
    conditions: list[ConditionResult] = field(default_factory=list)
    eligible: bool = True

    def verdict(self, name: str) -> bool:
        """True when condition ``name`` passes on every layer it applies to."""
        rows = [c for c in self.conditions if c.name == name]
        return bool(rows) and all(c.passed for c in rows)

    def failing(self) -> list[ConditionResult]:
        return [c for c in self.conditions if not c.passed]

    @property
    def passed(self) -> bool:
        return self.eligible and all(c.passed for c in self.conditions)

    def rows(self) -> list[list]:
        out = []
        for c in self.conditions:
            for lam, val in zip(self.grid, c.values):
                out.append([c.name, c.layer, lam, val])
        return out

    def verdict_lines(self) -> list[str]:
        names = [n for n in CONDITIONS + STRUCTURAL if any(c.name == n for c in self.conditions)]
        return [f"{n}: {'pass' if self.verdict(n) else 'fail'}" for n in names]


def _validate_grid(grid) -> list[float]:
    grid = [float(v) for v in grid]
    if not grid:
        raise ConfigError("lambda grid is empty")
    if any(v <= 0 for v in grid):
        raise ConfigError("lambda grid must be positive")
    if any(b >= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("lambda grid must be strictly decreasing")
    return grid


def _safe(fn):
    try:
        return float(fn())
    except (DomainError, ValueError, ZeroDivisionError, OverflowError):
        return math.nan


@functools.lru_cache(maxsize=4096)
def _structural(law: LayerLaw, grid: tuple, probe_points: tuple, eligible: bool):
    fam = NoiseFamily(law.family)
    ps = [law.params(lam) for lam in grid]
    lam_l = [abs(law.lam(lam)) for lam in grid]
    s = np.asarray(probe_points)
    pointwise = [float(np.max(np.abs(np.asarray(noise.cdf(fam, p, s)) - (s >= 0)))) for p in ps]
    strict = [0.0 if (eligible and p.std > 0) else math.inf for p in ps]
    wide = np.linspace(-10, 10, 41)
    unit = []
    for p in ps:
        F = np.asarray(noise.cdf(fam, p, wide))
        unit.append(float(np.max(np.maximum(-F, F - 1.0).clip(min=0.0))))
    return lam_l, pointwise, strict, unit


@functools.lru_cache(maxsize=4096)
def _inverses(law: LayerLaw, power: float, epsilon: float, grid: tuple):
    """Per-grid-point ``|sigma^-1(eps r)|``, ``|sigma^-1(1 - eps r)|`` and ``1 - sigma(0)``."""
    fam = NoiseFamily(law.family)
    lower, upper, gap = [], [], []
    for lam in grid:
        p = law.params(lam)
        er = epsilon * lam**power
        if p.std > 0:
            lower.append(_safe(lambda: abs(heaviside_inverse(fam, p, y=er))))
            upper.append(_safe(lambda: abs(heaviside_inverse(fam, p, tail=er))))
            # survival via symmetry: 1 - F(0) = F_mirrored(0)
            gap.append(float(noise.cdf(fam, NoiseParams(-p.mean, p.std), 0.0)))
        else:
            lower.append(math.nan)
            upper.append(math.nan)
            gap.append(float(p.mean > 0))
    return lower, upper, gap


def check_hypotheses(
    laws: Sequence[LayerLaw],
    rates: ConvergenceRate,
    epsilon: float = 1.0,
    grid: Sequence[float] = DEFAULT_GRID,
    tol: float = DEFAULT_TOL,
    probe_points: Sequence[float] = (-1.0, -0.1, 0.0, 0.1, 1.0),
) -> HypothesisReport:
    """Evaluate the convergence hypotheses for regularised Heaviside layers.

    ``laws`` covers the regularised layers 1..L-1 and ``rates`` needs one
    exponent per layer 1..L (the identity output layer has a rate too).
    """
    grid = tuple(_validate_grid(grid))
    L = len(laws) + 1
    if len(rates) != L:
        raise ConfigError(f"need {L} rate exponents for {len(laws)} regularised layers")
    report = HypothesisReport(list(grid), epsilon, rates)
    eligible = all(NoiseFamily(law.family).strictly_increasing_cdf for law in laws)
    report.eligible = eligible

    def add(name, layer, values, passed=None):
        passed = trend_passes(values, tol) if passed is None else passed
        report.conditions.append(ConditionResult(name, layer, list(values), passed))

    for ell, law in enumerate(laws, start=1):
        lam_l, pointwise, strict, unit = _structural(law, grid, tuple(probe_points), eligible)
        add("lambda_to_zero", ell, lam_l)
        add("pointwise", ell, pointwise)
        add("strictly_increasing", ell, strict, all(v == 0.0 for v in strict))
        add("unit_range", ell, unit, all(v == 0.0 for v in unit))
        if not eligible:
            continue
        lower, upper, gap = _inverses(law, rates.exponents[ell - 1], float(epsilon), grid)
        r = [rates(ell - 1, lam) for lam in grid]
        add("H_i", ell, lower)
        add("H_ii", ell, upper)
        add("H_iii", ell, [g / rv for g, rv in zip(gap, r)])

    if eligible:
        # H_iv couples layer l's inverse with the previous layer's rate, l = 2..L-1
        for ell in range(2, L):
            _, upper, _ = _inverses(laws[ell - 1], rates.exponents[ell - 1], float(epsilon), grid)
            vals = []
            for lam, denom in zip(grid, upper):
                r_prev = rates(ell - 2, lam)
                vals.append(r_prev / denom if denom and np.isfinite(denom) else math.inf)
            add("H_iv", ell, vals)
    return report


def search_rates(
    laws: Sequence[LayerLaw],
    candidates: Sequence[float] = RATE_CANDIDATES,
    epsilon: float = 1.0,
    grid: Sequence[float] = DEFAULT_GRID,
    tol: float = DEFAULT_TOL,
) -> HypothesisReport | None:
    """First rate assignment (in candidate order) under which every condition passes."""
    L = len(laws) + 1
    for exps in itertools.product(candidates, repeat=L):
        report = check_hypotheses(laws, ConvergenceRate(exps), epsilon, grid, tol)
        if report.passed:
            return report
    return None


def search_triples(
    family=NoiseFamily.LOGISTIC,
    n_regularised: int = 1,
    mean_laws: Sequence[PowerLaw] = (PowerLaw(-1.0, 0.5), PowerLaw(-1.0, 1.0), PowerLaw(0.0, 1.0)),
    std_laws: Sequence[PowerLaw] = (PowerLaw(1.0, 1.0), PowerLaw(1.0, 2.0)),
    candidates: Sequence[float] = RATE_CANDIDATES,
    grid: Sequence[float] = DEFAULT_GRID,
    tol: float = DEFAULT_TOL,
) -> list[tuple[PowerLaw, PowerLaw, HypothesisReport]]:
    """All (mean law, std law) pairs, shared by every layer, that admit passing rates."""
    found = []
    for mean, std in itertools.product(mean_laws, std_laws):
        laws = [LayerLaw(family, PowerLaw(1.0, 1.0), mean, std)] * n_regularised
        report = search_rates(laws, candidates, grid=grid, tol=tol)
        if report is not None:
            found.append((mean, std, report))
    return found


# ----------------------------------------------------------------------------
# empirical feature error


@dataclass
class RatioResult:
    grid: list[float]
    errors: np.ndarray  # (n_grid, n_layers): ||x_reg - x_quant||
    ratios: np.ndarray | None  # errors / r_l(lam), when rates are given

    def rows(self) -> list[list]:
        out = []
        for i, lam in enumerate(self.grid):
            for ell in range(self.errors.shape[1]):
                ratio = self.ratios[i, ell] if self.ratios is not None else math.nan
                out.append([lam, ell + 1, self.errors[i, ell], ratio])
        return out


def measure_ratio(
    net: Network,
    x0,
    laws: Sequence[LayerLaw],
    grid: Sequence[float] = DEFAULT_GRID,
    rates: ConvergenceRate | None = None,
) -> RatioResult:
    """Feature error between regularised (expectation) and quantised passes.

    Every scheduled layer of ``net`` receives the noise of its law at each
    ``lam``. The network is modified in place (noise parameters only).
    """
    grid = _validate_grid(grid)
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.ndim != 1:
        raise ConfigError("measure_ratio takes a single input vector")
    sched = net.scheduled_layers
    if len(laws) != len(sched):
        raise ConfigError(f"need {len(sched)} layer laws, got {len(laws)}")
    if rates is not None and len(rates) != len(net.layers):
        raise ConfigError(f"need {len(net.layers)} rate exponents")
    quantised = net.forward(x0, QUANTISED)
    errors = np.zeros((len(grid), len(net.layers)))
    for i, lam in enumerate(grid):
        net.set_noise([law.params(lam) for law in laws])
        regularised = net.forward(x0, "expectation")
        for ell, (a, b) in enumerate(zip(regularised, quantised)):
            errors[i, ell] = np.linalg.norm(a - b)
    ratios = None
    if rates is not None:
        r = np.array([[rates(ell, lam) for ell in range(len(net.layers))] for lam in grid])
        ratios = errors / r
    return RatioResult(grid, errors, ratios)


def ramp_laws(
    ranges: Sequence[AnnealingRange],
    family=NoiseFamily.LOGISTIC,
    c_beta: float = 1.0,
) -> list[LayerLaw]:
    """Zero-mean layer laws replaying schedule ranges, rescaled to [0, 1]."""
    end = max(r.t_end for r in ranges)
    return [
        LayerLaw(family, RampLaw(r.t_start / end, r.t_end / end), PowerLaw(0.0, 1.0), PowerLaw(c_beta, 1.0))
        for r in ranges
    ]
