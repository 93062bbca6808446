"""Heart-rate-variability measures on inter-beat interval sequences."""

import numpy as np

from ..errors import InsufficientDataError


def hrv_time(ibi_ms):
    """Time-domain HRV: (mean HR in bpm, RMSSD in ms, pNN50 in %)."""
    ibi = np.asarray(ibi_ms, dtype=np.float64)
    if ibi.size < 3:
        raise InsufficientDataError(
            f"hrv insufficient-data: {ibi.size} intervals, need >= 3")
    diffs = np.diff(ibi)
    hr_mean = 60000.0 / float(np.mean(ibi))
    rmssd = float(np.sqrt(np.mean(diffs ** 2)))
    pnn50 = 100.0 * float(np.sum(np.abs(diffs) > 50.0)) / diffs.size
    return hr_mean, rmssd, pnn50


def poincare_sd(ibi_ms):
    """Poincaré plot axes (SD1, SD2) from population variances.

    A numerically negative SD2 radicand is clamped to 0.
    """
    ibi = np.asarray(ibi_ms, dtype=np.float64)
    if ibi.size < 3:
        raise InsufficientDataError(
            f"hrv insufficient-data: {ibi.size} intervals, need >= 3")
    diffs = np.diff(ibi)
    var_d = float(np.var(diffs))
    var_i = float(np.var(ibi))
    sd1 = np.sqrt(max(0.0, var_d / 2.0))
    sd2 = np.sqrt(max(0.0, 2.0 * var_i - var_d / 2.0))
    return float(sd1), float(sd2)
