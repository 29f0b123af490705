"""Training losses with analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LabelRangeError, ShapeMismatchError
from .ops import softmax


@dataclass
class LossResult:
    value: float
    gradient: np.ndarray


def mse_loss(prediction, target):
    """Mean squared error over all elements; gradient wrt prediction."""
    if prediction.shape != target.shape:
        raise ShapeMismatchError(
            f"prediction {prediction.shape} vs target {target.shape}"
        )
    diff = prediction - target
    n = diff.size
    value = float(np.mean(diff * diff))
    return LossResult(value, 2.0 * diff / n)


def cross_entropy_loss(logits, labels):
    """Softmax cross entropy averaged over the batch.

    logits: (K,) or (B,K); labels: int or (B,) ints in [0,K).
    Gradient is (softmax - onehot)/B, so rows sum to zero.
    """
    lg = np.asarray(logits)
    single = lg.ndim == 1
    if single:
        lg = lg[None, :]
    lab = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    b, k = lg.shape
    if lab.shape != (b,):
        raise ShapeMismatchError(f"{b} logit rows vs labels {lab.shape}")
    if lab.min(initial=0) < 0 or lab.max(initial=0) >= k:
        raise LabelRangeError(f"labels must lie in [0,{k})")
    shifted = lg - lg.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    value = float(np.mean(lse - shifted[np.arange(b), lab]))
    grad = softmax(lg, axis=1)
    grad[np.arange(b), lab] -= 1.0
    grad /= b
    if single:
        grad = grad[0]
    return LossResult(value, grad.astype(lg.dtype, copy=False))
