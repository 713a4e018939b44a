import numpy as np


def glorot_uniform(rng, shape, dtype=np.float32):
    """Uniform in [-a, a] with a = sqrt(6 / (fan_in + fan_out))."""
    fan_in, fan_out = shape[0], shape[-1]
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape).astype(dtype)


def lstm_bias(hidden, dtype=np.float32):
    """Zero bias except +1 on the forget-gate block."""
    b = np.zeros(4 * hidden, dtype=dtype)
    b[hidden : 2 * hidden] = 1.0
    return b
