import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ana.errors import ConfigError, NumericError, ShapeError, StateError
from ana.network import (
    Conv2d,
    Dense,
    Network,
    dumps_params,
    im2col,
    load_params,
    loads_params,
    save_params,
)
from ana.noise import NoiseFamily, NoiseParams
from ana.quantiser import heaviside_quantiser, ternary
from ana.regulariser import RegularisedActivation
from ana.trainer import cross_entropy

LOGI = NoiseFamily.LOGISTIC


def reg(q, family=LOGI, std=0.3, mean=0.0):
    return RegularisedActivation(q, family, NoiseParams(mean, std))


def test_affine_examples():
    x = np.array([[1.0, 1.0]])
    assert np.array_equal(Dense(np.eye(2), np.zeros(2)).affine(x), x)
    assert np.array_equal(Dense(np.zeros((2, 2)), [3.0, -1.0]).affine(x), [[3.0, -1.0]])
    assert np.array_equal(Dense([[1, 2], [3, 4]], [0, 0]).affine(x), [[3.0, 7.0]])
    with pytest.raises(ShapeError):
        Dense(np.eye(2), np.zeros(2)).affine(np.ones((1, 3)))


def test_shape_validation():
    with pytest.raises(ShapeError):
        Dense(np.eye(2), np.zeros(3))
    with pytest.raises(ShapeError):
        Network([Dense(np.ones((3, 2)), np.zeros(3)), Dense(np.ones((1, 2)), np.zeros(1))])
    with pytest.raises(ConfigError):
        Network([])


def test_single_heaviside_layer():
    net = Network([Dense([[1.0]], [-0.5], reg(heaviside_quantiser()))])
    assert net(np.array([0.7]))[0, 0] == 1.0


def random_net(rng, sizes, q=None, std=0.3, quantise_weights=False, family=LOGI):
    q = q or ternary()
    layers = []
    for i, (a, b) in enumerate(zip(sizes, sizes[1:])):
        last = i == len(sizes) - 2
        act = None if last else reg(q, family, std)
        wact = reg(ternary(), family, std) if (quantise_weights and not last) else None
        layers.append(Dense(rng.normal(0, 1, (b, a)), rng.normal(0, 0.3, b), act, wact))
    return Network(layers)


def test_all_dirac_regularised_equals_quantised(rng):
    net = random_net(rng, [3, 6, 5, 2], quantise_weights=True)
    net.set_noise([NoiseParams()] * 2)
    x = rng.normal(size=(50, 3))
    q = net(x)
    for mode in ("expectation", "mode", "random"):
        assert np.array_equal(net(x, mode, rng), q)


def test_small_noise_expectation_matches_quantised_off_threshold(rng):
    net = random_net(rng, [2, 5, 1], q=heaviside_quantiser(), std=1e-4)
    x = rng.uniform(-2, 2, (400, 2))
    s = net.layers[0].affine(x)
    keep = np.all(np.abs(s) >= 0.1, axis=1)
    np.testing.assert_allclose(net(x[keep], "expectation"), net(x[keep]), atol=1e-12)


def test_nan_propagation_raises():
    net = Network([Dense([[np.nan]], [0.0])])
    with pytest.raises(NumericError):
        net(np.ones((1, 1)))


def test_backward_before_forward():
    with pytest.raises(StateError):
        Network([Dense([[1.0]], [0.0])]).backward(np.ones((1, 1)))


def test_linear_layer_squared_loss_closed_form(rng):
    W, b = rng.normal(size=(3, 4)), rng.normal(size=3)
    x, y = rng.normal(size=4), rng.normal(size=3)
    net = Network([Dense(W, b)])
    out = net(x)
    net.backward(2 * (out - y))
    r = W @ x + b - y
    np.testing.assert_allclose(net.layers[0].grad_weight, 2 * np.outer(r, x), rtol=1e-13)
    np.testing.assert_allclose(net.layers[0].grad_bias, 2 * r, rtol=1e-13)


def loss_and_grads(net, x, y):
    logits = net(x, "expectation")
    loss, g = cross_entropy(logits, y)
    net.backward(g)
    return loss, [gr.copy() for gr in net.gradients()]


def finite_difference(net, x, y, h=1e-6):
    out = []
    for p in net.parameters():
        fd = np.zeros_like(p)
        for i in np.ndindex(p.shape):
            old = p[i]
            p[i] = old + h
            lp = cross_entropy(net(x, "expectation"), y)[0]
            p[i] = old - h
            lm = cross_entropy(net(x, "expectation"), y)[0]
            p[i] = old
            fd[i] = (lp - lm) / (2 * h)
        out.append(fd)
    return out


def assert_grads_close(analytic, numeric, rtol=1e-4, atol=1e-9):
    for a, n in zip(analytic, numeric):
        np.testing.assert_allclose(a, n, rtol=rtol, atol=atol)


@pytest.mark.parametrize("quantise_weights", [False, True])
def test_three_layer_ternary_gradient_check(rng, quantise_weights):
    net = random_net(rng, [3, 5, 4, 3], quantise_weights=quantise_weights)
    x = rng.normal(size=(6, 3))
    y = rng.integers(0, 3, 6)
    _, grads = loss_and_grads(net, x, y)
    assert_grads_close(grads, finite_difference(net, x, y))


def naive_conv(x, w, b, shape, padding):
    C, H, W = shape
    c_out, _, k, _ = w.shape
    xs = np.pad(x.reshape(-1, C, H, W), ((0, 0), (0, 0), (padding,) * 2, (padding,) * 2))
    Ho, Wo = H + 2 * padding - k + 1, W + 2 * padding - k + 1
    out = np.zeros((xs.shape[0], c_out, Ho, Wo))
    for n in range(xs.shape[0]):
        for o in range(c_out):
            for i in range(Ho):
                for j in range(Wo):
                    out[n, o, i, j] = np.sum(xs[n, :, i : i + k, j : j + k] * w[o]) + b[o]
    return out.reshape(xs.shape[0], -1)


@pytest.mark.parametrize("padding", [0, 1])
def test_conv_matches_naive_loops(rng, padding):
    shape = (2, 5, 4)
    w, b = rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3)
    x = rng.normal(size=(2, 40))
    conv = Conv2d(w, b, shape, padding)
    np.testing.assert_allclose(conv.affine(x), naive_conv(x, w, b, shape, padding), rtol=1e-12, atol=1e-12)


def test_im2col_index_layout():
    x = np.arange(9.0).reshape(1, 9)
    cols, index = im2col(x, (1, 3, 3), 2)
    assert cols.shape == (1, 4, 4)
    assert np.array_equal(cols[0, 0], [0, 1, 3, 4])
    assert np.array_equal(cols[0, 3], [4, 5, 7, 8])
    assert index.shape == (4, 4)
    with pytest.raises(ShapeError):
        im2col(x, (1, 3, 3), 4)


def test_conv_network_gradient_check(rng):
    shape = (1, 4, 4)
    conv = Conv2d(rng.normal(size=(2, 1, 3, 3)), rng.normal(0, 0.2, 2), shape, 1, reg(ternary(), std=0.4))
    dense = Dense(rng.normal(size=(3, conv.n_out)), np.zeros(3))
    net = Network([conv, dense])
    x = rng.normal(size=(3, 16))
    y = np.array([0, 2, 1])
    _, grads = loss_and_grads(net, x, y)
    assert_grads_close(grads, finite_difference(net, x, y))


def test_conv_shape_validation():
    with pytest.raises(ShapeError):
        Conv2d(np.zeros((2, 1, 3, 2)), np.zeros(2), (1, 4, 4))
    with pytest.raises(ShapeError):
        Conv2d(np.zeros((2, 1, 3, 3)), np.zeros(2), (2, 4, 4))


def test_hidden_permutation_invariance(rng):
    net = random_net(rng, [3, 6, 2])
    x = rng.normal(size=(10, 3))
    ref = net(x, "expectation")
    perm = rng.permutation(6)
    a, b = net.layers
    net2 = Network(
        [
            Dense(a.weight[perm], a.bias[perm], a.activation),
            Dense(b.weight[:, perm], b.bias, b.activation),
        ]
    )
    np.testing.assert_allclose(net2(x, "expectation"), ref, rtol=1e-13, atol=1e-15)


def test_annealed_layer_blocks_upstream_gradients(rng):
    net = random_net(rng, [3, 5, 4, 2], quantise_weights=True)
    net.set_noise([NoiseParams(), NoiseParams(0, 0.3)])
    x = rng.normal(size=(7, 3))
    _, g = cross_entropy(net(x, "expectation"), rng.integers(0, 2, 7))
    net.backward(g)
    assert np.all(net.layers[0].grad_weight == 0) and np.all(net.layers[0].grad_bias == 0)
    full = [gr.copy() for gr in net.gradients()]
    net.backward(g, stop_early=True)
    for a, b in zip(full, net.gradients()):
        assert np.array_equal(a, b)


def test_dense_constructor(rng):
    act = reg(ternary())
    net = Network.dense([2, 4, 4, 3], act, rng, act)
    assert [type(l) for l in net.layers] == [Dense] * 3
    assert net.layers[-1].activation is None and net.layers[-1].weight_activation is None
    assert np.all(np.abs(net.layers[0].weight) <= 1.0)
    assert np.all(np.abs(net.layers[-1].weight) <= 0.5)
    assert net.scheduled_layers == [0, 1]
    with pytest.raises(ConfigError):
        Network.dense([2, 4, 3], [act, act], rng)
    with pytest.raises(ConfigError):
        net.set_noise([NoiseParams()])


def test_param_roundtrip(rng, tmp_path):
    shape = (1, 4, 4)
    conv = Conv2d(rng.normal(size=(2, 1, 3, 3)), rng.normal(size=2), shape, 1, reg(ternary()), reg(ternary()))
    dense = Dense(rng.normal(size=(3, conv.n_out)), rng.normal(size=3))
    net = Network([conv, dense])
    save_params(net, tmp_path / "p.bin")
    back = load_params(tmp_path / "p.bin")
    for a, b in zip(net.parameters(), back.parameters()):
        assert np.array_equal(a, b)
    assert back.layers[0].activation.quantiser == net.layers[0].activation.quantiser
    assert back.layers[0].padding == 1
    assert dumps_params(back) == dumps_params(net)
    x = rng.normal(size=(2, 16))
    assert np.array_equal(back(x), net(x))


def test_param_format_header(rng):
    net = random_net(rng, [2, 3, 2])
    blob = dumps_params(net)
    head, payload = blob.split(b"\n\n", 1)
    lines = head.decode().split("\n")
    assert lines[:4] == ["ANA-PARAMS 1", "layers 2", "byteorder little", "dtype float64"]
    assert lines[4].startswith("layer dense weight=3x2 activation=family:logistic;levels:-1.0,0.0,1.0;")
    assert len(payload) == 8 * (6 + 3 + 6 + 2)
    assert np.frombuffer(payload[:8], "<f8")[0] == net.layers[0].weight[0, 0]


@pytest.mark.parametrize(
    "mutate",
    [
        lambda b: b.replace(b"ANA-PARAMS 1", b"XYZ"),
        lambda b: b[:-8],
        lambda b: b + b"\x00" * 8,
        lambda b: b.replace(b"\n\n", b"\n", 1),
        lambda b: b.replace(b"layers 2", b"layers 3"),
    ],
)
def test_param_corruption_detected(rng, mutate):
    blob = dumps_params(random_net(rng, [2, 3, 2]))
    with pytest.raises(ConfigError):
        loads_params(mutate(blob))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), batch=st.integers(1, 6))
def test_batch_rows_independent(seed, batch):
    r = np.random.default_rng(seed)
    net = random_net(r, [3, 4, 2])
    x = r.normal(size=(batch, 3))
    full = net(x, "expectation")
    for i in range(batch):
        np.testing.assert_allclose(net(x[i], "expectation")[0], full[i], rtol=1e-13, atol=1e-15)
