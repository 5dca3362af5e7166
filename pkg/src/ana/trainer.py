"""The annealing training loop, optimisers and the cross-entropy loss."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_softmax, softmax

from .errors import ConfigError, DomainError, NumericError
from .network import QUANTISED, Network
from .noise import NoiseParams
from .regulariser import Strategy, as_strategy
from .schedule import LayerScheduleSpec, params_at

log = logging.getLogger(__name__)


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy over a batch and its gradient wrt the logits.

    ``logits`` is ``(K,)`` or ``(batch, K)``; ``labels`` matches the leading shape.
    """
    z = np.asarray(logits, dtype=np.float64)
    single = z.ndim == 1
    z = np.atleast_2d(z)
    y = np.atleast_1d(np.asarray(labels))
    K = z.shape[1]
    if y.shape != (z.shape[0],) or np.any(y < 0) or np.any(y >= K):
        raise DomainError(f"labels must be class indices in [0, {K})")
    y = y.astype(np.int64)
    logp = log_softmax(z, axis=1)
    rows = np.arange(z.shape[0])
    loss = -logp[rows, y].mean()
    grad = softmax(z, axis=1)
    grad[rows, y] -= 1.0
    grad /= z.shape[0]
    if single:
        return float(loss), grad[0]
    return float(loss), grad


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        for p, g in zip(params, grads):
            p -= self.lr * g


class Adam:
    """Adam with bias-corrected moment estimates; updates parameters in place."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def sgd_step(theta, grad, lr):
    return np.asarray(theta, dtype=np.float64) - lr * np.asarray(grad, dtype=np.float64)


def adam_step(theta, grad, lr, t, m, v, beta1=0.9, beta2=0.999, eps=1e-8):
    """Functional Adam step; returns ``(theta, m, v)``."""
    g = np.asarray(grad, dtype=np.float64)
    m = beta1 * np.asarray(m) + (1 - beta1) * g
    v = beta2 * np.asarray(v) + (1 - beta2) * g * g
    m_hat = m / (1 - beta1**t)
    v_hat = v / (1 - beta2**t)
    return np.asarray(theta) - lr * m_hat / (np.sqrt(v_hat) + eps), m, v


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimiser: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    lr_drop_epoch: int | None = None
    lr_drop_factor: float = 0.1
    strategy: Strategy = Strategy.MODE
    seed: int = 0
    stop_early: bool = False

    def __post_init__(self):
        object.__setattr__(self, "strategy", as_strategy(self.strategy))
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be non-negative")
        if self.optimiser not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimiser {self.optimiser!r}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def make_optimiser(self):
        if self.optimiser == "sgd":
            return SGD(self.learning_rate)
        return Adam(self.learning_rate, self.adam_beta1, self.adam_beta2, self.adam_eps)


def iterations_per_epoch(n: int, batch_size: int) -> int:
    return -(-n // batch_size)


def seed_streams(seed: int, n_layers: int):
    """Independent generators for data order, weight init and per-layer sampling.

    Changing the forward strategy draws from the sampling streams only, so the
    data order and initial weights are the same for every strategy.
    """
    data, init, *sampling = np.random.SeedSequence(seed).spawn(2 + n_layers)
    return (
        np.random.default_rng(data),
        np.random.default_rng(init),
        [np.random.default_rng(s) for s in sampling],
    )


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    train_acc: float
    val_acc_regularised: float
    val_acc_quantised: float
    noise: list[NoiseParams]


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)
    aborted: bool = False

    def header(self) -> list[str]:
        n = len(self.records[0].noise) if self.records else 0
        cols = ["epoch", "loss", "train_acc", "val_acc_regularised", "val_acc_quantised"]
        for i in range(1, n + 1):
            cols += [f"alpha_{i}", f"beta_{i}"]
        return cols

    def rows(self) -> list[list]:
        out = []
        for r in self.records:
            row = [r.epoch, r.loss, r.train_acc, r.val_acc_regularised, r.val_acc_quantised]
            for p in r.noise:
                row += [p.mean, p.std]
            out.append(row)
        return out

    @property
    def final(self) -> EpochRecord:
        return self.records[-1]


def set_noise(net: Network, schedule: list[LayerScheduleSpec], t: float) -> list[NoiseParams]:
    """Look up every scheduled layer's noise at iteration ``t`` and install it."""
    params = [params_at(spec, t) for spec in schedule]
    net.set_noise(params)
    return params


def accuracy(net: Network, x, y, mode: str = QUANTISED, rngs=None) -> float:
    if len(y) == 0:
        return float("nan")
    logits = net(x, mode, rngs)
    return float(np.mean(np.argmax(logits, axis=1) == y))


def train(
    net: Network,
    schedule: list[LayerScheduleSpec],
    data,
    config: TrainConfig,
    rngs=None,
) -> tuple[Network, TrainLog]:
    """Run the annealing loop and return the trained network and its log.

    ``data`` is ``(x_train, y_train, x_val, y_val)``. Each iteration processes
    one minibatch: schedule lookup for every layer, inference with the
    configured strategy, backpropagation, parameter update. Gradients are
    averaged over the minibatch and ``t`` counts minibatches from 1.

    ``rngs`` is ``(data_rng, sampling_rngs)``; by default both derive from
    ``config.seed`` as in :func:`seed_streams`.
    """
    x_train, y_train, x_val, y_val = data
    n_sched = len(net.scheduled_layers)
    if len(schedule) != n_sched:
        raise ConfigError(f"schedule has {len(schedule)} entries for {n_sched} quantised layers")
    if rngs is None:
        data_rng, _, sampling = seed_streams(config.seed, len(net.layers))
    else:
        data_rng, sampling = rngs
    optim = config.make_optimiser()
    strategy = config.strategy.value
    n = len(x_train)
    t = 0
    log_ = TrainLog()
    for epoch in range(1, config.epochs + 1):
        if config.lr_drop_epoch is not None and epoch == config.lr_drop_epoch + 1:
            optim.lr *= config.lr_drop_factor
        order = data_rng.permutation(n)
        losses, correct = [], 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            t += 1
            set_noise(net, schedule, t)
            try:
                logits = net(x_train[idx], strategy, sampling)
                loss, grad = cross_entropy(logits, y_train[idx])
                if not np.isfinite(loss):
                    raise NumericError(f"non-finite loss at iteration {t}")
            except NumericError as err:
                log_.aborted = True
                err.log = log_
                raise
            net.backward(grad, stop_early=config.stop_early)
            optim.step(net.parameters(), net.gradients())
            losses.append(loss * len(idx))
            correct += int(np.sum(np.argmax(logits, axis=1) == y_train[idx]))
        noise = [params_at(spec, t) for spec in schedule]
        rec = EpochRecord(
            epoch=epoch,
            loss=float(np.sum(losses) / n),
            train_acc=correct / n,
            val_acc_regularised=accuracy(net, x_val, y_val, strategy, sampling),
            val_acc_quantised=accuracy(net, x_val, y_val, QUANTISED),
            noise=noise,
        )
        log_.records.append(rec)
        log.debug(
            "epoch %d loss %.4f train %.3f val(q) %.3f",
            epoch, rec.loss, rec.train_acc, rec.val_acc_quantised,
        )
    return net, log_
