"""Pure-Python (numpy) kernel backend.

Reference implementations of the dense kernels used by classifier
training. The compiled backend in _compiled.pyx mirrors these contracts;
whichever is active is chosen once, at import of harmony.kernels.
"""
from __future__ import annotations

import numpy as np

LOG_CLAMP = 1e-12  # floor for log() inputs; keeps losses finite at p == 0


def matmul(a: np.ndarray, b: np.ndarray, trans_a: bool = False, trans_b: bool = False) -> np.ndarray:
    left = a.T if trans_a else a
    right = b.T if trans_b else b
    return left @ right


def add_row_vector(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    return m + v


def col_sums(m: np.ndarray) -> np.ndarray:
    return m.sum(axis=0)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_grad(upstream: np.ndarray, pre: np.ndarray) -> np.ndarray:
    return np.where(pre > 0.0, upstream, 0.0)


def tanh_forward(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def tanh_grad(upstream: np.ndarray, activated: np.ndarray) -> np.ndarray:
    return upstream * (1.0 - activated * activated)


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def weighted_cross_entropy(probs: np.ndarray, labels: np.ndarray, weights: np.ndarray):
    """Mean weighted negative log-likelihood and its gradient w.r.t. logits.

    Assumes probs are softmax outputs; grad rows are w[y] * (p - onehot(y)) / n.
    """
    n = probs.shape[0]
    rows = np.arange(n)
    w = weights[labels]
    p_true = np.maximum(probs[rows, labels], LOG_CLAMP)
    loss = float(np.sum(w * -np.log(p_true)) / n)
    scale = w / n
    grad = probs * scale[:, None]
    grad[rows, labels] -= scale
    return loss, grad


def sgd_step(param: np.ndarray, velocity: np.ndarray, grad: np.ndarray, lr: float, momentum: float):
    new_velocity = momentum * velocity - lr * grad
    return param + new_velocity, new_velocity
