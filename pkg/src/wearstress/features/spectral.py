"""Welch band power, dominant frequency, and MFCC extraction."""

import numpy as np
from scipy.fft import dct
from scipy.signal import welch

from ..errors import InsufficientDataError, UsageError

WELCH_SEGMENT = 64
MIN_SERIES_LEN = 64


def welch_psd(series, fs_hz: float):
    """One-sided Welch PSD: Hann window, 64-sample segments, 50% overlap."""
    x = np.asarray(series, dtype=np.float64)
    if x.size < MIN_SERIES_LEN:
        raise InsufficientDataError(
            f"spectral estimate needs >= {MIN_SERIES_LEN} samples, got {x.size}")
    freqs, psd = welch(x, fs=fs_hz, window="hann", nperseg=WELCH_SEGMENT,
                       noverlap=WELCH_SEGMENT // 2, detrend=False,
                       scaling="density", average="mean")
    return freqs, psd


def band_power(series, fs_hz: float, f_lo: float, f_hi: float) -> float:
    """Welch power integrated over [f_lo, f_hi) by the rectangle rule.

    Bands are half-open so band powers over a partition of [0, fs/2] add up
    to the total power exactly; a band ending at the Nyquist frequency also
    includes the Nyquist bin.
    """
    nyquist = fs_hz / 2.0
    if not (0.0 <= f_lo < f_hi <= nyquist + 1e-12):
        raise UsageError(
            f"band [{f_lo}, {f_hi}] outside the valid range [0, {nyquist}]")
    freqs, psd = welch_psd(series, fs_hz)
    df = freqs[1] - freqs[0]
    mask = (freqs >= f_lo) & (freqs < f_hi)
    if f_hi >= nyquist - 1e-12:
        mask |= freqs >= nyquist - 1e-12
    return float(np.sum(psd[mask]) * df)


def dominant_frequency(series, fs_hz: float, f_max: float = 5.0) -> float:
    """Frequency of the largest Welch PSD bin in (0, f_max] Hz."""
    freqs, psd = welch_psd(series, fs_hz)
    mask = (freqs > 0.0) & (freqs <= f_max + 1e-12)
    if not mask.any():
        raise UsageError(f"no spectral bins in (0, {f_max}] at fs={fs_hz}")
    sel = np.flatnonzero(mask)
    return float(freqs[sel[np.argmax(psd[sel])]])


def _mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_inv(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mel: int, n_fft: int, fs_hz: float) -> np.ndarray:
    """Triangular mel filters spanning [0, fs/2], evaluated at rfft bins."""
    edges = _mel_inv(np.linspace(_mel(0.0), _mel(fs_hz / 2.0), n_mel + 2))
    bins = np.fft.rfftfreq(n_fft, d=1.0 / fs_hz)
    fb = np.zeros((n_mel, bins.size))
    for j in range(n_mel):
        lo, mid, hi = edges[j], edges[j + 1], edges[j + 2]
        up = (bins - lo) / (mid - lo)
        down = (hi - bins) / (hi - mid)
        fb[j] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


def mfcc(series, fs_hz: float, n_mel: int = 20, n_coef: int = 4,
         frame: int = 256, hop: int = 128) -> np.ndarray:
    """Frame-averaged mel-frequency cepstral coefficients 0..n_coef-1.

    Per frame: Hann window, magnitude spectrum, triangular mel filterbank,
    log(energy + 1e-10), orthonormal DCT-II.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.size < frame:
        raise InsufficientDataError(
            f"mfcc needs >= {frame} samples, got {x.size}")
    window = np.hanning(frame)
    fb = mel_filterbank(n_mel, frame, fs_hz)
    n_frames = 1 + (x.size - frame) // hop
    coefs = np.zeros(n_coef)
    for i in range(n_frames):
        seg = x[i * hop: i * hop + frame] * window
        mag = np.abs(np.fft.rfft(seg))
        energies = fb @ mag
        cep = dct(np.log(energies + 1e-10), type=2, norm="ortho")
        coefs += cep[:n_coef]
    return coefs / n_frames
