import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ana.errors import ConfigError
from ana.noise import NoiseFamily, NoiseParams, half_width, sample
from ana.quantiser import Quantiser, heaviside_quantiser, quantise, ternary
from ana.regulariser import (
    RegularisedActivation,
    Strategy,
    backward,
    expectation_forward,
    level_probabilities,
    mode_forward,
    random_forward,
)

FAMILIES = list(NoiseFamily)
TERN = ternary()
HARD_BETA = 1 / (2 * math.sqrt(3))


def act(q, family, mean=0.0, std=0.0, strategy=Strategy.MODE):
    return RegularisedActivation(q, family, NoiseParams(mean, std), strategy)


def test_clipped_relu_and_hard_sigmoid_examples():
    relu = act(heaviside_quantiser(), NoiseFamily.UNIFORM, 0.5, HARD_BETA)
    for x, y in [(-0.1, 0.0), (0.5, 0.5), (1.2, 1.0)]:
        assert expectation_forward(relu, x) == pytest.approx(y, abs=1e-15)
    sig = act(heaviside_quantiser(), NoiseFamily.UNIFORM, 0.0, HARD_BETA)
    assert expectation_forward(sig, 0.0) == pytest.approx(0.5, abs=1e-15)


def test_clipped_relu_on_grid():
    x = np.arange(-2000, 2001) * 1e-3
    relu = act(heaviside_quantiser(), NoiseFamily.UNIFORM, 0.5, HARD_BETA)
    hs = act(heaviside_quantiser(), NoiseFamily.UNIFORM, 0.0, HARD_BETA)
    assert np.max(np.abs(relu.expectation(x) - np.clip(x, 0, 1))) <= 1e-12
    assert np.max(np.abs(hs.expectation(x) - np.clip(x + 0.5, 0, 1))) <= 1e-12


@pytest.mark.parametrize("family", FAMILIES)
def test_dirac_reverts_to_quantiser(family, rng):
    a = act(TERN, family)
    x = rng.uniform(-2, 2, 500)
    x = np.concatenate([x, TERN.thresholds])
    assert np.array_equal(expectation_forward(a, x), quantise(TERN, x))
    assert np.array_equal(mode_forward(a, x), quantise(TERN, x))
    assert np.array_equal(random_forward(a, x, rng), quantise(TERN, x))
    assert np.all(backward(a, x) == 0.0)
    assert np.array_equal(level_probabilities(a, 0.2), [0.0, 1.0, 0.0])


def test_symmetric_ternary_expectation_at_zero():
    a = act(TERN, NoiseFamily.NORMAL, 0.0, 0.2)
    assert expectation_forward(a, 0.0) == pytest.approx(0.0, abs=1e-15)
    draws = sample(NoiseFamily.NORMAL, a.params, np.random.default_rng(5), 1_000_000)
    y = quantise(TERN, 0.0 - draws)
    assert abs(y.mean()) < 3 * y.std() / 1000


def test_backward_example_matches_finite_difference():
    a = act(TERN, NoiseFamily.LOGISTIC, 0.0, 0.3)
    h = 1e-5
    fd = (expectation_forward(a, 0.1 + h) - expectation_forward(a, 0.1 - h)) / (2 * h)
    assert backward(a, 0.1) == pytest.approx(fd, abs=1e-6)


@pytest.mark.parametrize("family", FAMILIES)
def test_derivative_matches_finite_differences_on_grid(family):
    q = Quantiser((-1.0, 0.2, 0.5, 2.0), (-0.6, 0.1, 0.9))
    a = act(q, family, 0.15, 0.35)
    x = np.linspace(-2.5, 2.5, 201)
    h = 1e-6
    fd = (a.expectation(x + h) - a.expectation(x - h)) / (2 * h)
    d = a.derivative(x)
    if family.compact:
        # skip the kinks of the compact densities
        w = half_width(family, a.params)
        kinks = np.array([t + a.params.mean + s for t in q.thresholds for s in (-w, 0.0, w)])
        keep = np.min(np.abs(x[:, None] - kinks[None, :]), axis=1) > 4 * h
        fd, d = fd[keep], d[keep]
    np.testing.assert_allclose(d, fd, rtol=1e-6, atol=1e-8)


def test_level_probabilities_examples():
    b = act(heaviside_quantiser(0.3), NoiseFamily.NORMAL, 0.0, 0.4)
    np.testing.assert_allclose(level_probabilities(b, 0.3), [0.5, 0.5], atol=1e-15)
    a = act(TERN, NoiseFamily.UNIFORM, 0.0, HARD_BETA)
    p = level_probabilities(a, 0.4)
    # the noise is uniform on [-0.5, 0.5], so x - nu is uniform on [-0.1, 0.9]
    np.testing.assert_allclose(p, [0.0, 0.6, 0.4], atol=1e-15)
    draws = sample(NoiseFamily.UNIFORM, a.params, np.random.default_rng(11), 1_000_000)
    idx = TERN.bin_index(0.4 - draws)
    freq = np.bincount(idx, minlength=3) / idx.size
    assert np.max(np.abs(freq - p)) < 0.002


def test_mode_wide_normal_noise_picks_outer_level():
    # p = (0.47807, 0.03988, 0.48205): the middle level is the least likely
    a = act(TERN, NoiseFamily.NORMAL, 0.0, 10.0)
    np.testing.assert_allclose(
        level_probabilities(a, 0.05), [0.47806923189717654, 0.039877113624962546, 0.4820536544778609], rtol=1e-9
    )
    assert mode_forward(a, 0.05) == 1.0
    assert quantise(TERN, 0.05) == 0.0


def test_mode_ties_go_to_lower_level():
    a = act(heaviside_quantiser(), NoiseFamily.LOGISTIC, 0.0, 1.0)
    assert mode_forward(a, 0.0) == 0.0


def test_random_examples():
    rng = np.random.default_rng(21)
    b = act(heaviside_quantiser(), NoiseFamily.LOGISTIC, 0.0, 0.7)
    y = random_forward(b, np.zeros(100_000), rng)
    assert abs(y.mean() - 0.5) < 0.01
    a = act(TERN, NoiseFamily.UNIFORM, 0.0, 0.5)
    y = random_forward(a, np.full(100_000, 0.3), rng)
    freq = np.array([(y == v).mean() for v in TERN.levels])
    assert np.max(np.abs(freq - level_probabilities(a, 0.3))) < 0.01


def test_forward_dispatch():
    a = act(TERN, NoiseFamily.NORMAL, 0.0, 0.3, Strategy.EXPECTATION)
    assert a(0.2) == a.expectation(0.2)
    assert a.forward(0.2, "mode") == a.mode(0.2)
    with pytest.raises(ConfigError):
        a.forward(0.2, "random")
    with pytest.raises(ConfigError):
        a.forward(0.2, "median")


def test_vector_shapes():
    a = act(TERN, NoiseFamily.NORMAL, 0.0, 0.3)
    x = np.zeros((4, 5))
    assert a.expectation(x).shape == (4, 5)
    assert a.derivative(x).shape == (4, 5)
    assert a.level_probabilities(x).shape == (4, 5, 3)
    assert a.mode(x).shape == (4, 5)


@st.composite
def instances(draw, families=tuple(FAMILIES)):
    k = draw(st.integers(2, 5))
    gaps = draw(st.lists(st.floats(0.2, 2.0), min_size=k - 1, max_size=k - 1))
    lvl_gaps = draw(st.lists(st.floats(0.1, 2.0), min_size=k - 1, max_size=k - 1))
    t0 = draw(st.floats(-2, 2))
    q0 = draw(st.floats(-2, 2))
    thresholds = tuple(t0 + np.cumsum([0.0] + gaps[1:]))
    levels = tuple(q0 + np.cumsum([0.0] + lvl_gaps))
    fam = draw(st.sampled_from(families))
    mean = draw(st.floats(-1, 1))
    std = draw(st.floats(0.01, 3))
    return act(Quantiser(levels, thresholds), fam, mean, std)


xs = st.floats(-6, 6)


@settings(max_examples=150)
@given(instances(), xs)
def test_probabilities_form_a_distribution_with_matching_mean(a, x):
    p = a.level_probabilities(x)
    assert np.all(p >= 0)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert float(p @ np.array(a.quantiser.levels)) == pytest.approx(a.expectation(x), abs=1e-10)


@settings(max_examples=150)
@given(instances(), xs, xs)
def test_expectation_monotone_and_within_level_range(a, x1, x2):
    lo, hi = min(x1, x2), max(x1, x2)
    q = a.quantiser
    assert q.levels[0] - 1e-12 <= a.expectation(lo) <= a.expectation(hi) + 1e-12
    assert a.expectation(hi) <= q.levels[-1] + 1e-12
    assert a.derivative(lo) >= 0


@settings(max_examples=150)
@given(instances(), xs, xs)
def test_lipschitz_bound(a, x1, x2):
    lhs = abs(a.expectation(x1) - a.expectation(x2))
    assert lhs <= a.lipschitz_bound() * abs(x1 - x2) + 1e-12


@settings(max_examples=200)
@given(st.data())
def test_mode_equals_quantiser_binary_any_width(data):
    a = data.draw(instances())
    q = Quantiser(a.quantiser.levels[:2], a.quantiser.thresholds[:1])
    a = RegularisedActivation(q, a.family, NoiseParams(0.0, a.params.std))
    x = data.draw(xs.filter(lambda v: abs(v - q.thresholds[0]) > 1e-9))
    assert a.mode(x) == quantise(q, x)


@settings(max_examples=200)
@given(st.data())
def test_mode_equals_quantiser_compact_narrow_noise(data):
    # compact zero-mean noise no wider than half the narrowest inner bin;
    # x is kept off the thresholds where rounding produces exact ties
    a = data.draw(instances(families=(NoiseFamily.UNIFORM, NoiseFamily.TRIANGULAR)))
    th = np.array(a.quantiser.thresholds)
    d_min = np.min(np.diff(th)) if th.size > 1 else np.inf
    frac = data.draw(st.floats(0.01, 1.0))
    w = min(frac * d_min / 2, 3.0)
    unit = half_width(a.family, NoiseParams(0.0, 1.0))
    a = a.with_params(NoiseParams(0.0, w / unit))
    x = data.draw(xs.filter(lambda v: np.min(np.abs(v - th)) > 1e-9))
    assert a.mode(x) == quantise(a.quantiser, x)


def test_mode_differs_near_threshold_for_full_support_noise():
    # full support: mass leaking from a far bin can beat the own bin right next to a threshold
    q = Quantiser((0.0, 1.0, 2.0), (0.0, 0.2))
    a = act(q, NoiseFamily.LOGISTIC, 0.0, 0.5)
    x = 0.19
    p = a.level_probabilities(x)
    assert quantise(q, x) == 1.0
    assert np.argmax(p) != 1
