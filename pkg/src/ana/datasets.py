"""Small synthetic classification sets for desk-scale experiments."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError

GENERATORS = ("two_moons", "gaussian_blobs", "xor_grid", "file")


@dataclass(frozen=True)
class DatasetSpec:
    generator: str = "two_moons"
    size: int = 1000
    noise: float = 0.1
    val_fraction: float = 0.2
    classes: int = 2
    seed: int = 0
    features_path: str | None = None
    labels_path: str | None = None
    n_features: int | None = None

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ConfigError(f"unknown dataset generator {self.generator!r}")
        if self.noise < 0:
            raise ConfigError("dataset noise must be non-negative")
        if not 0 <= self.val_fraction < 1:
            raise ConfigError("val_fraction must lie in [0, 1)")
        n_classes = 2 if self.generator in ("two_moons", "xor_grid") else self.classes
        if self.generator != "file" and self.size < 2 * n_classes:
            raise ConfigError(f"size {self.size} too small for {n_classes} balanced classes")


def _counts(n: int, k: int) -> list[int]:
    return [n // k + (1 if i < n % k else 0) for i in range(k)]


def two_moons(n: int, noise: float, rng: np.random.Generator):
    n_out, n_in = _counts(n, 2)
    t_out = np.linspace(0, np.pi, n_out)
    t_in = np.linspace(0, np.pi, n_in)
    outer = np.stack([np.cos(t_out), np.sin(t_out)], axis=1)
    inner = np.stack([1 - np.cos(t_in), 0.5 - np.sin(t_in)], axis=1)
    x = np.concatenate([outer, inner])
    y = np.concatenate([np.zeros(n_out, np.int64), np.ones(n_in, np.int64)])
    x = x + rng.normal(0.0, noise, size=x.shape) if noise > 0 else x
    return x, y


def gaussian_blobs(n: int, classes: int, noise: float, rng: np.random.Generator):
    angles = 2 * np.pi * np.arange(classes) / classes
    centres = 3.0 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    xs, ys = [], []
    for k, m in enumerate(_counts(n, classes)):
        xs.append(centres[k] + rng.normal(0.0, noise, size=(m, 2)) if noise > 0 else np.tile(centres[k], (m, 1)))
        ys.append(np.full(m, k, np.int64))
    return np.concatenate(xs), np.concatenate(ys)


def xor_grid(n: int, noise: float, rng: np.random.Generator, cells: int = 4):
    """Checkerboard of ``cells x cells`` unit squares on ``[-cells/2, cells/2]^2``.

    The label is the XOR of the column and row parities, so neighbouring
    squares alternate and no single line separates much more than half.
    """
    xs, ys = [], []
    for c, m in enumerate(_counts(n, cells * cells)):
        i, j = divmod(c, cells)
        lo = np.array([i, j], dtype=np.float64) - cells / 2
        pts = lo + rng.uniform(0.05, 0.95, size=(m, 2))
        if noise > 0:
            pts = pts + rng.normal(0.0, noise, size=pts.shape)
        xs.append(pts)
        ys.append(np.full(m, (i % 2) ^ (j % 2), np.int64))
    return np.concatenate(xs), np.concatenate(ys)


def load_files(spec: DatasetSpec, base: Path | None = None):
    """Flat little-endian float64 features and int64 labels."""
    if not (spec.features_path and spec.labels_path and spec.n_features):
        raise ConfigError("file dataset needs features_path, labels_path and n_features")
    base = base or Path(".")
    feats = np.fromfile(base / spec.features_path, dtype="<f8")
    labels = np.fromfile(base / spec.labels_path, dtype="<i8")
    if feats.size != labels.size * spec.n_features:
        raise ConfigError("feature file size does not match labels x n_features")
    return feats.reshape(labels.size, spec.n_features).astype(np.float64), labels.astype(np.int64)


def generate_dataset(spec: DatasetSpec, base: Path | None = None):
    """Return ``(x_train, y_train, x_val, y_val)``, reproducible from ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    if spec.generator == "two_moons":
        x, y = two_moons(spec.size, spec.noise, rng)
    elif spec.generator == "gaussian_blobs":
        x, y = gaussian_blobs(spec.size, spec.classes, spec.noise, rng)
    elif spec.generator == "xor_grid":
        x, y = xor_grid(spec.size, spec.noise, rng)
    else:
        x, y = load_files(spec, base)
    order = rng.permutation(len(y))
    x, y = x[order], y[order]
    n_val = int(round(spec.val_fraction * len(y)))
    n_train = len(y) - n_val
    return x[:n_train], y[:n_train], x[n_train:], y[n_train:]
