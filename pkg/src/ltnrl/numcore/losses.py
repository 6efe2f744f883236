from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor


def huber_loss(pred: Tensor, target, delta: float = 1.0) -> Tensor:
    """Mean Huber loss: quadratic inside ``delta``, linear outside."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"huber_loss shape mismatch: pred {pred.shape} vs target {target.shape}")
    err = pred - target
    e = err.data
    inside = np.abs(e) <= delta
    out = np.where(inside, 0.5 * e * e, delta * (np.abs(e) - 0.5 * delta))
    slope = np.where(inside, e, delta * np.sign(e))
    n = e.size
    return Tensor._make(np.asarray(out.mean()), (err,), lambda g: (g * slope / n,))


def squared_loss(pred: Tensor, target) -> Tensor:
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"squared_loss shape mismatch: pred {pred.shape} vs target {target.shape}")
    return ((pred - target).square()).mean() * 0.5
