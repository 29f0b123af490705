"""Weight initialization."""

from __future__ import annotations

import numpy as np


def _fans(shape):
    if len(shape) == 4:  # conv (K, K, C_in, F)
        k, _, c, f = shape
        return k * k * c, k * k * f
    if len(shape) == 2:  # dense (N, M)
        return shape[0], shape[1]
    n = int(np.prod(shape))
    return n, n


def glorot_uniform(shape, rng, dtype=np.float32):
    """Uniform on [-L, L] with L = sqrt(6 / (fan_in + fan_out))."""
    if not shape:
        raise ValueError("shape must be nonempty")
    fan_in, fan_out = _fans(tuple(shape))
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def glorot_limit(shape):
    fan_in, fan_out = _fans(tuple(shape))
    return float(np.sqrt(6.0 / (fan_in + fan_out)))
