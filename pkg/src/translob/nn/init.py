"""Seeded parameter initializers."""

import numpy as np


def glorot_uniform(rng: np.random.Generator, shape: tuple) -> np.ndarray:
    """Uniform on ``[-l, l]`` with ``l = sqrt(6 / (fan_in + fan_out))``.

    For a ``[k, Cin, Cout]`` convolution kernel the fans are ``k*Cin`` and ``k*Cout``.
    """
    receptive = int(np.prod(shape[:-2])) if len(shape) > 2 else 1
    fan_in, fan_out = shape[-2] * receptive, shape[-1] * receptive
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)
