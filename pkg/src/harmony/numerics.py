"""Deterministic dense numeric operations shared by every classifier.

Matrices are 2-D float64 numpy arrays throughout. The heavy lifting is
delegated to the active kernel backend (see harmony.kernels); this module
adds argument validation and the optimizer/initializer conventions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from harmony import kernels
from harmony.rng import Prng


@dataclass(frozen=True)
class SgdConfig:
    """Mini-batch SGD with classical momentum: v <- m*v - lr*g; p <- p + v."""

    learning_rate: float = 0.1
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 30
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    return kernels.matmul(a, b)


def softmax_rows(logits) -> np.ndarray:
    return kernels.softmax_rows(as_matrix(logits, "logits"))


def weighted_cross_entropy(probs, labels, class_weights):
    """Per-class weighted cross-entropy over a batch.

    loss = mean_i w[y_i] * -log(p[i, y_i]) with p floored at LOG_CLAMP;
    returns (loss, gradient w.r.t. the logits that produced probs).
    """
    probs = as_matrix(probs, "probs")
    labels = np.asarray(labels, dtype=np.int64)
    weights = np.asarray(class_weights, dtype=np.float64)
    if labels.ndim != 1 or labels.shape[0] != probs.shape[0]:
        raise ValueError("labels must be a vector with one entry per probs row")
    if weights.shape != (probs.shape[1],):
        raise ValueError(
            f"class_weights must have length {probs.shape[1]}, got {weights.shape}"
        )
    if np.any(weights <= 0):
        raise ValueError("class_weights must be strictly positive")
    if labels.size and (labels.min() < 0 or labels.max() >= probs.shape[1]):
        raise ValueError("labels out of range for probs columns")
    return kernels.weighted_cross_entropy(probs, labels, weights)


def sgd_step(params, velocity, grads, config: SgdConfig):
    """One momentum-SGD update; accepts a single array or a sequence of arrays."""
    single = isinstance(params, np.ndarray)
    p_list = [params] if single else list(params)
    v_list = [velocity] if single else list(velocity)
    g_list = [grads] if single else list(grads)
    if not (len(p_list) == len(v_list) == len(g_list)):
        raise ValueError("params, velocity and grads must have equal length")
    new_p, new_v = [], []
    for p, v, g in zip(p_list, v_list, g_list):
        if np.shape(p) != np.shape(v) or np.shape(p) != np.shape(g):
            raise ValueError(
                f"shape mismatch in sgd_step: {np.shape(p)} vs {np.shape(v)} vs {np.shape(g)}"
            )
        p2, v2 = kernels.sgd_step(p, v, g, config.learning_rate, config.momentum)
        new_p.append(p2)
        new_v.append(v2)
    if single:
        return new_p[0], new_v[0]
    return new_p, new_v


def xavier_init(rows: int, cols: int, rng: Prng) -> np.ndarray:
    """Uniform(-a, a) with a = sqrt(6 / (rows + cols))."""
    if rows < 1 or cols < 1:
        raise ValueError(f"xavier_init needs positive dims, got {rows}x{cols}")
    a = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-a, a, (rows, cols))
