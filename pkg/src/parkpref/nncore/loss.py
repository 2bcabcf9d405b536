"""Weighted binary cross-entropy for the 1-positive-in-560 labels."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError

CLAMP_EPS = 1e-7
AUTO = "auto"


def resolve_pos_weight(labels: np.ndarray, pos_weight) -> float:
    """Concrete positive-class weight for a batch.

    "auto" weighs positives by the batch's negative/positive ratio
    (N - P) / P, which balances the two classes' total loss mass.
    """
    if pos_weight == AUTO:
        n = labels.size
        p = float(labels.sum())
        if p == 0:
            raise ConfigError(
                "pos_weight='auto' needs at least one positive in the batch"
            )
        return (n - p) / p
    w = float(pos_weight)
    if w <= 0:
        raise ConfigError(f"pos_weight must be positive, got {w}")
    return w


def weighted_bce(pred: np.ndarray, label: np.ndarray,
                 pos_weight=AUTO) -> tuple[float, np.ndarray]:
    """Loss and its gradient with respect to the predictions.

    L = -(1/N) * sum( w * y * log p  +  (1 - y) * log(1 - p) ) with
    predictions clamped to [eps, 1-eps] before the logs. The gradient is
    zero where the clamp is active (the prediction is saturated).

    Returns (loss, dL/dpred); the gradient has the prediction's dtype.
    """
    pred = np.asarray(pred)
    label = np.asarray(label)
    if pred.shape != label.shape:
        raise ValueError(f"pred shape {pred.shape} != label shape {label.shape}")
    if pred.size == 0:
        raise ValueError("empty prediction batch")
    w = resolve_pos_weight(label, pos_weight)
    n = pred.size

    p = np.clip(pred, CLAMP_EPS, 1.0 - CLAMP_EPS)
    y = label.astype(pred.dtype, copy=False)
    # Compute the loss in float64 regardless of training dtype: it is a
    # single scalar per batch and drives early stopping comparisons.
    p64 = p.astype(np.float64, copy=False)
    y64 = y.astype(np.float64, copy=False)
    loss = -(w * y64 * np.log(p64) + (1.0 - y64) * np.log1p(-p64)).sum() / n

    grad = -(w * y / p - (1.0 - y) / (1.0 - p)) / n
    grad = grad.astype(pred.dtype, copy=False)
    # No gradient through an active clamp.
    grad = np.where((pred >= CLAMP_EPS) & (pred <= 1.0 - CLAMP_EPS), grad,
                    pred.dtype.type(0))
    return float(loss), grad
