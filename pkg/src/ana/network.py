"""Feedforward quantised networks with regularised activations.

Each layer is an affine map followed by an element-wise activation. Hidden
activations are :class:`RegularisedActivation` instances; the last layer is
usually the identity. Weights may pass through their own regularised
quantiser, in which case the optimiser updates the real-valued latent weights
and the forward pass uses their quantised (or regularised) image.

Arrays are batch-first: a batch of inputs has shape ``(batch, n_in)``.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericError, ShapeError, StateError
from .noise import NoiseFamily, NoiseParams
from .quantiser import Quantiser
from .regulariser import RegularisedActivation, Strategy

QUANTISED = "quantised"
MODES = (QUANTISED,) + tuple(s.value for s in Strategy)


def _check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ConfigError(f"unknown forward mode {mode!r}; expected one of {MODES}")
    return mode


def apply_activation(act: RegularisedActivation | None, x: np.ndarray, mode: str, rng=None):
    if act is None:
        return x
    if mode == QUANTISED:
        return act.quantiser(x)
    return act.forward(x, mode, rng)


class Layer:
    """Shared machinery: weight quantisation, activation, caches."""

    weight: np.ndarray
    bias: np.ndarray

    def __init__(self, weight, bias, activation=None, weight_activation=None):
        self.weight = np.array(weight, dtype=np.float64)
        self.bias = np.array(bias, dtype=np.float64)
        self.activation: RegularisedActivation | None = activation
        self.weight_activation: RegularisedActivation | None = weight_activation
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)
        self._cache = None

    # linear part, overridden by subclasses
    n_in: int
    n_out: int

    def _linear(self, x, w):
        raise NotImplementedError

    def _linear_backward(self, delta, x, w):
        """Return (grad wrt effective weight, grad wrt input)."""
        raise NotImplementedError

    @property
    def scheduled(self) -> bool:
        return self.activation is not None or self.weight_activation is not None

    def set_noise(self, params: NoiseParams) -> None:
        if self.activation is not None:
            self.activation = self.activation.with_params(params)
        if self.weight_activation is not None:
            self.weight_activation = self.weight_activation.with_params(params)

    @property
    def annealed(self) -> bool:
        """True when the feature activation has collapsed to the quantiser."""
        return self.activation is not None and self.activation.params.is_dirac

    def effective_weight(self, mode: str = QUANTISED, rng=None) -> np.ndarray:
        return apply_activation(self.weight_activation, self.weight, mode, rng)

    def affine(self, x, mode: str = QUANTISED, rng=None) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_in:
            raise ShapeError(f"layer expects {self.n_in} inputs, got {x.shape[-1]}")
        return self._linear(x, self.effective_weight(mode, rng))

    def forward(self, x, mode: str = QUANTISED, rng=None) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeError(f"layer expects input of shape (batch, {self.n_in}), got {x.shape}")
        w_eff = self.effective_weight(mode, rng)
        s = self._linear(x, w_eff)
        out = apply_activation(self.activation, s, mode, rng)
        self._cache = (x, s, w_eff)
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise StateError("backward called before forward")
        x, s, w_eff = self._cache
        delta = grad_out if self.activation is None else grad_out * self.activation.derivative(s)
        grad_w_eff, grad_in = self._linear_backward(delta, x, w_eff)
        if self.weight_activation is not None:
            grad_w_eff = grad_w_eff * self.weight_activation.derivative(self.weight)
        self.grad_weight = grad_w_eff
        self.grad_bias = self._bias_grad(delta)
        return grad_in

    def zero_grad(self) -> None:
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)

    def _bias_grad(self, delta):
        return delta.sum(axis=0)


class Dense(Layer):
    def __init__(self, weight, bias, activation=None, weight_activation=None):
        super().__init__(weight, bias, activation, weight_activation)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(f"weight {self.weight.shape} and bias {self.bias.shape} do not match")
        self.n_out, self.n_in = self.weight.shape

    def _linear(self, x, w):
        return x @ w.T + self.bias

    def _linear_backward(self, delta, x, w):
        return delta.T @ x, delta @ w


def im2col(x: np.ndarray, shape: tuple[int, int, int], kernel: int, padding: int = 0):
    """Unroll ``kernel x kernel`` patches of flattened (C, H, W) images.

    Returns ``(cols, index)`` where ``cols`` has shape
    ``(batch, H_out * W_out, C * kernel * kernel)`` and ``index`` maps every
    column entry back to its position in the padded flattened input.
    """
    C, H, W = shape
    Hp, Wp = H + 2 * padding, W + 2 * padding
    Ho, Wo = Hp - kernel + 1, Wp - kernel + 1
    if Ho < 1 or Wo < 1:
        raise ShapeError("kernel larger than padded input")
    c, i, j = np.meshgrid(np.arange(C), np.arange(kernel), np.arange(kernel), indexing="ij")
    oi, oj = np.meshgrid(np.arange(Ho), np.arange(Wo), indexing="ij")
    rows = oi.reshape(-1, 1) + i.reshape(1, -1)
    cols = oj.reshape(-1, 1) + j.reshape(1, -1)
    index = c.reshape(1, -1) * Hp * Wp + rows * Wp + cols
    xp = x.reshape(-1, C, H, W)
    if padding:
        xp = np.pad(xp, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    flat = xp.reshape(xp.shape[0], -1)
    return flat[:, index], index


class Conv2d(Layer):
    """Stride-1 2-D convolution lowered to a matrix product over patches.

    Inputs and outputs are flattened channel-major images so that convolutional
    and dense layers chain in the same network.
    """

    def __init__(self, weight, bias, in_shape, padding=0, activation=None, weight_activation=None):
        super().__init__(weight, bias, activation, weight_activation)
        if self.weight.ndim != 4:
            raise ShapeError("conv weight must have shape (C_out, C_in, k, k)")
        c_out, c_in, k, k2 = self.weight.shape
        if k != k2 or tuple(in_shape)[0] != c_in or self.bias.shape != (c_out,):
            raise ShapeError("conv weight, bias and input shape do not match")
        self.in_shape = tuple(int(v) for v in in_shape)
        self.kernel = k
        self.padding = int(padding)
        C, H, W = self.in_shape
        self.out_hw = (H + 2 * padding - k + 1, W + 2 * padding - k + 1)
        self.n_in = C * H * W
        self.n_out = c_out * self.out_hw[0] * self.out_hw[1]

    def _linear(self, x, w):
        cols, _ = im2col(x, self.in_shape, self.kernel, self.padding)
        c_out = w.shape[0]
        s = cols @ w.reshape(c_out, -1).T + self.bias  # (batch, HoWo, C_out)
        return s.transpose(0, 2, 1).reshape(x.shape[0], -1)

    def _linear_backward(self, delta, x, w):
        batch = x.shape[0]
        c_out = w.shape[0]
        cols, index = im2col(x, self.in_shape, self.kernel, self.padding)
        d = delta.reshape(batch, c_out, -1).transpose(0, 2, 1)  # (batch, HoWo, C_out)
        grad_w = np.einsum("bpo,bpk->ok", d, cols).reshape(w.shape)
        dcols = d @ w.reshape(c_out, -1)
        C, H, W = self.in_shape
        p = self.padding
        Hp, Wp = H + 2 * p, W + 2 * p
        dxp = np.zeros((batch, C * Hp * Wp))
        for b in range(batch):
            np.add.at(dxp[b], index, dcols[b])
        dxp = dxp.reshape(batch, C, Hp, Wp)[:, :, p : p + H, p : p + W]
        return grad_w, dxp.reshape(batch, -1)

    def _bias_grad(self, delta):
        c_out = self.weight.shape[0]
        return delta.reshape(delta.shape[0], c_out, -1).sum(axis=(0, 2))


def _per_layer(value, n: int, name: str) -> list:
    if isinstance(value, (list, tuple)):
        if len(value) != n:
            raise ConfigError(f"need {n} {name} entries, got {len(value)}")
        return list(value)
    return [value] * n


class Network:
    """Ordered stack of layers evaluated input first."""

    def __init__(self, layers: list[Layer]):
        if len(layers) < 1:
            raise ConfigError("a network needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.n_out != b.n_in:
                raise ShapeError(f"layer sizes do not chain: {a.n_out} -> {b.n_in}")
        self.layers = list(layers)
        self._features = None

    @classmethod
    def dense(
        cls,
        sizes: list[int],
        activation,
        rng: np.random.Generator,
        weight_activation=None,
    ) -> "Network":
        """MLP with regularised hidden activations and an identity output layer.

        ``activation`` and ``weight_activation`` are shared by every hidden
        layer or given as one entry per hidden layer.

        Float latent weights start uniform in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``.
        Quantised latent weights start uniform over the weight quantiser's
        level span, so they do not all collapse into one bin. Biases start at
        zero. The output layer keeps float weights.
        """
        if len(sizes) < 2:
            raise ConfigError("need at least input and output sizes")
        n_hidden = len(sizes) - 2
        acts = _per_layer(activation, n_hidden, "activation")
        wacts = _per_layer(weight_activation, n_hidden, "weight_activation")
        layers = []
        for ell, (n_in, n_out) in enumerate(zip(sizes, sizes[1:])):
            last = ell == n_hidden
            wq = None if last else wacts[ell]
            if wq is None:
                bound = 1.0 / np.sqrt(n_in)
                w = rng.uniform(-bound, bound, size=(n_out, n_in))
            else:
                lv = wq.quantiser.levels
                w = rng.uniform(lv[0], lv[-1], size=(n_out, n_in))
            layers.append(
                Dense(
                    w,
                    np.zeros(n_out),
                    activation=None if last else acts[ell],
                    weight_activation=None if last else wacts[ell],
                )
            )
        return cls(layers)

    @property
    def n_in(self) -> int:
        return self.layers[0].n_in

    @property
    def n_out(self) -> int:
        return self.layers[-1].n_out

    @property
    def scheduled_layers(self) -> list[int]:
        """Indices of layers carrying a regularised quantiser."""
        return [i for i, layer in enumerate(self.layers) if layer.scheduled]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out

    def gradients(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.grad_weight, layer.grad_bias]
        return out

    def set_noise(self, params: list[NoiseParams]) -> None:
        """Install per-layer noise parameters on every scheduled layer."""
        idx = self.scheduled_layers
        if len(params) != len(idx):
            raise ConfigError(f"expected {len(idx)} noise parameter sets, got {len(params)}")
        for i, p in zip(idx, params):
            self.layers[i].set_noise(p)

    def forward(self, x, mode: str = QUANTISED, rngs=None) -> list[np.ndarray]:
        """Return the features of every layer (last one is the output).

        ``mode`` is ``"quantised"`` (every activation is its bare quantiser) or
        a forward strategy applied with the layers' current noise. ``rngs`` is a
        generator or a per-layer list of generators, needed for ``"random"``.
        """
        _check_mode(mode)
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if rngs is None or isinstance(rngs, np.random.Generator):
            rngs = [rngs] * len(self.layers)
        features = []
        for layer, rng in zip(self.layers, rngs):
            x = layer.forward(x, mode, rng)
            features.append(x)
        if not np.all(np.isfinite(x)):
            raise NumericError("non-finite network output")
        self._features = features
        return features

    def __call__(self, x, mode: str = QUANTISED, rngs=None) -> np.ndarray:
        return self.forward(x, mode, rngs)[-1]

    def backward(self, grad_out, stop_early: bool = False) -> None:
        """Backpropagate ``grad_out`` (gradient wrt the output features).

        With ``stop_early`` the pass halts at the first annealed activation met
        going upstream: its local derivative is identically zero, so every
        gradient at or before it is exactly zero.
        """
        if self._features is None:
            raise StateError("backward called before forward")
        g = np.asarray(grad_out, dtype=np.float64)
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            if stop_early and layer.annealed:
                for upstream in self.layers[: i + 1]:
                    upstream.zero_grad()
                return
            g = layer.backward(g)

    def copy(self) -> "Network":
        import copy

        return copy.deepcopy(self)


# ----------------------------------------------------------------------------
# parameter files: text header, blank line, raw little-endian float64 payload

MAGIC = "ANA-PARAMS 1"


def _fmt_floats(vals) -> str:
    return ",".join(repr(float(v)) for v in vals)


def _act_header(tag: str, act: RegularisedActivation | None) -> str:
    if act is None:
        return f"{tag}=none"
    q = act.quantiser
    return (
        f"{tag}=family:{act.family.value};levels:{_fmt_floats(q.levels)};"
        f"thresholds:{_fmt_floats(q.thresholds)}"
    )


def _parse_act(text: str) -> RegularisedActivation | None:
    if text == "none":
        return None
    fields = dict(part.split(":", 1) for part in text.split(";"))
    q = Quantiser(
        tuple(float(v) for v in fields["levels"].split(",")),
        tuple(float(v) for v in fields["thresholds"].split(",")),
    )
    return RegularisedActivation(q, NoiseFamily(fields["family"]))


def dumps_params(net: Network) -> bytes:
    lines = [MAGIC, f"layers {len(net.layers)}", "byteorder little", "dtype float64"]
    payload = io.BytesIO()
    for layer in net.layers:
        if isinstance(layer, Conv2d):
            kind = (
                f"conv2d weight={'x'.join(map(str, layer.weight.shape))} "
                f"in_shape={'x'.join(map(str, layer.in_shape))} padding={layer.padding}"
            )
        else:
            kind = f"dense weight={layer.n_out}x{layer.n_in}"
        lines.append(
            f"layer {kind} {_act_header('activation', layer.activation)} "
            f"{_act_header('weights', layer.weight_activation)}"
        )
        for arr in (layer.weight, layer.bias):
            payload.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    header = "\n".join(lines) + "\n\n"
    return header.encode("utf-8") + payload.getvalue()


def save_params(net: Network, path) -> None:
    Path(path).write_bytes(dumps_params(net))


def loads_params(blob: bytes) -> Network:
    head, sep, payload = blob.partition(b"\n\n")
    if not sep:
        raise ConfigError("parameter file has no header terminator")
    lines = head.decode("utf-8").split("\n")
    if lines[0] != MAGIC:
        raise ConfigError(f"not a parameter file (magic {lines[0]!r})")
    offset = 0
    layers = []

    def take(shape):
        nonlocal offset
        n = int(np.prod(shape))
        if offset + 8 * n > len(payload):
            raise ConfigError("parameter payload is truncated")
        arr = np.frombuffer(payload, dtype="<f8", count=n, offset=offset).reshape(shape)
        offset += 8 * n
        return arr.astype(np.float64)

    try:
        n_layers = int(lines[1].split(" ")[1])
    except (IndexError, ValueError):
        raise ConfigError("malformed parameter header") from None
    if lines[2:4] != ["byteorder little", "dtype float64"] or len(lines) != 4 + n_layers:
        raise ConfigError("malformed parameter header")
    for line in lines[4:]:
        parts = line.split(" ")
        kind = parts[1]
        kv = dict(p.split("=", 1) for p in parts[2:])
        act = _parse_act(kv["activation"])
        wact = _parse_act(kv["weights"])
        wshape = tuple(int(v) for v in kv["weight"].split("x"))
        w = take(wshape)
        b = take((wshape[0],))
        if kind == "dense":
            layers.append(Dense(w, b, act, wact))
        else:
            in_shape = tuple(int(v) for v in kv["in_shape"].split("x"))
            layers.append(Conv2d(w, b, in_shape, int(kv["padding"]), act, wact))
    if offset != len(payload):
        raise ConfigError("parameter payload size does not match header")
    return Network(layers)


def load_params(path) -> Network:
    return loads_params(Path(path).read_bytes())

