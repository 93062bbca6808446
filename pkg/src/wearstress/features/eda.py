"""Electrodermal activity decomposition and SCR peak detection."""

from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

SAMPLE_RATE_HZ = 4.0
TONIC_WINDOW_S = 20.0
SCR_MIN_AMPLITUDE = 0.05   # z-units; inputs arrive z-scored
SCR_MIN_SPACING_S = 1.0


@dataclass
class EdaDecomposition:
    tonic: np.ndarray
    phasic: np.ndarray
    scr_peaks: np.ndarray


def decompose_eda(eda, fs_hz: float = SAMPLE_RATE_HZ) -> EdaDecomposition:
    """Split EDA into tonic/phasic parts and locate SCR peaks.

    Tonic is a centered rolling median (20 s window, edges clamped to the
    available samples); phasic is the residual, so tonic + phasic always
    reconstructs the input exactly. Peaks are phasic local maxima above
    SCR_MIN_AMPLITUDE separated by at least SCR_MIN_SPACING_S.
    """
    x = np.asarray(eda, dtype=np.float64)
    n = x.size
    half = int(round(TONIC_WINDOW_S * fs_hz)) // 2
    tonic = np.empty(n)
    if n > 2 * half:
        windows = np.lib.stride_tricks.sliding_window_view(x, 2 * half + 1)
        tonic[half:n - half] = np.median(windows, axis=1)
        edge = list(range(half)) + list(range(n - half, n))
    else:
        edge = range(n)
    for i in edge:  # clamped windows at the edges
        lo, hi = max(0, i - half), min(n, i + half + 1)
        tonic[i] = np.median(x[lo:hi])
    phasic = x - tonic
    distance = max(1, int(round(SCR_MIN_SPACING_S * fs_hz)))
    peaks, _ = find_peaks(phasic, height=SCR_MIN_AMPLITUDE, distance=distance)
    return EdaDecomposition(tonic=tonic, phasic=phasic, scr_peaks=peaks)


def phasic_auc(decomposition: EdaDecomposition, fs_hz: float = SAMPLE_RATE_HZ) -> float:
    """Area under the positive phasic component, in value-units * seconds."""
    pos = np.clip(decomposition.phasic, 0.0, None)
    return float(np.trapezoid(pos, dx=1.0 / fs_hz))
