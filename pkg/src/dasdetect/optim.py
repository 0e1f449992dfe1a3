"""Stochastic gradient descent with momentum.

The learning rate sits inside the velocity::

    v     <- momentum * v + lr * grad
    theta <- theta - v
"""
import numpy as np

from .errors import DataError


def sgd_momentum_step(params: dict, grads: dict, velocity: dict, lr: float, momentum: float):
    """Update ``params`` and ``velocity`` in place and return both.

    All three dicts must share keys and per-key shapes.
    """
    if params.keys() != grads.keys() or params.keys() != velocity.keys():
        raise DataError("params, grads and velocity must have the same keys")
    for k in params:
        if not (params[k].shape == grads[k].shape == velocity[k].shape):
            raise DataError(f"shape mismatch for {k!r}: {params[k].shape}, "
                            f"{grads[k].shape}, {velocity[k].shape}")
    for k in params:
        velocity[k] *= momentum
        velocity[k] += lr * grads[k]
        params[k] -= velocity[k]
    return params, velocity


def zeros_like(params: dict) -> dict:
    return {k: np.zeros_like(v) for k, v in params.items()}
