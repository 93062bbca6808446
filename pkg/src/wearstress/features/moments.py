"""Statistical moments of a 1-D series."""

import numpy as np

from ..errors import InsufficientDataError


def moments(series):
    """Population (mean, variance, skewness, excess kurtosis).

    Near-constant input (m2 < 1e-12) reports skew and kurtosis as 0 so the
    ratios stay finite.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.size < 2:
        raise InsufficientDataError(f"moments need >= 2 samples, got {x.size}")
    mean = float(np.mean(x))
    d = x - mean
    m2 = float(np.mean(d ** 2))
    if m2 < 1e-12:
        return mean, m2, 0.0, 0.0
    m3 = float(np.mean(d ** 3))
    m4 = float(np.mean(d ** 4))
    return mean, m2, m3 / m2 ** 1.5, m4 / m2 ** 2 - 3.0
