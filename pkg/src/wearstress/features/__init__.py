"""The canonical 42-feature vector computed per epoch.

Composition (channel: count):
  EDA 13  - SCR count, SCL mean, phasic AUC, LF power, sample entropy,
            four moments, MFCC 1-4
  HR  14  - mean bpm, RMSSD, pNN50, HF power, Poincare SD1/SD2/ratio,
            variance/skew/kurtosis, MFCC 1-4
  TEMP 6  - mean, gradient (degC/min), multiscale entropy,
            variance/skew/kurtosis
  ACC  9  - magnitude mean/std, dominant frequency, Lyapunov exponent,
            sample entropy, skew/kurtosis, MFCC 1-2

EDA/HR/TEMP features are computed on the z-scored 4 Hz channels; all ACC
features use the native-rate magnitude so spectral content up to 5 Hz
survives.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..data import ChannelKind, StressLabel
from ..errors import EpochRejectedError, InsufficientDataError
from ..preprocess import Epoch
from .eda import EdaDecomposition, decompose_eda, phasic_auc
from .entropy import coarse_grain, lyapunov_exponent, multiscale_entropy, sample_entropy
from .hrv import hrv_time, poincare_sd
from .moments import moments
from .spectral import band_power, dominant_frequency, mel_filterbank, mfcc, welch_psd

MANIFEST_FORMAT_VERSION = "wearstress-features-v1"

LF_BAND = (0.05, 0.15)
HF_BAND = (0.15, 0.40)
ACC_DOM_FREQ_MAX_HZ = 5.0


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    channel: str
    family: str    # time | frequency | nonlinear | moment | cepstral
    unit: str


def _specs():
    eda = [
        FeatureSpec("eda_scr_count", "eda", "time", "count"),
        FeatureSpec("eda_scl_mean", "eda", "time", "z"),
        FeatureSpec("eda_phasic_auc", "eda", "time", "z*s"),
        FeatureSpec("eda_lf_power", "eda", "frequency", "z^2/Hz*Hz"),
        FeatureSpec("eda_sample_entropy", "eda", "nonlinear", "nats"),
        FeatureSpec("eda_mean", "eda", "moment", "z"),
        FeatureSpec("eda_variance", "eda", "moment", "z^2"),
        FeatureSpec("eda_skew", "eda", "moment", "1"),
        FeatureSpec("eda_kurtosis", "eda", "moment", "1"),
    ] + [FeatureSpec(f"eda_mfcc{i}", "eda", "cepstral", "1") for i in range(1, 5)]
    hr = [
        FeatureSpec("hr_mean_bpm", "hr", "time", "bpm"),
        FeatureSpec("hr_rmssd", "hr", "time", "ms"),
        FeatureSpec("hr_pnn50", "hr", "time", "%"),
        FeatureSpec("hr_hf_power", "hr", "frequency", "z^2/Hz*Hz"),
        FeatureSpec("hr_sd1", "hr", "nonlinear", "ms"),
        FeatureSpec("hr_sd2", "hr", "nonlinear", "ms"),
        FeatureSpec("hr_sd_ratio", "hr", "nonlinear", "1"),
        FeatureSpec("hr_variance", "hr", "moment", "z^2"),
        FeatureSpec("hr_skew", "hr", "moment", "1"),
        FeatureSpec("hr_kurtosis", "hr", "moment", "1"),
    ] + [FeatureSpec(f"hr_mfcc{i}", "hr", "cepstral", "1") for i in range(1, 5)]
    temp = [
        FeatureSpec("temp_mean", "temp", "moment", "z"),
        FeatureSpec("temp_gradient", "temp", "time", "degC/min"),
        FeatureSpec("temp_multiscale_entropy", "temp", "nonlinear", "nats"),
        FeatureSpec("temp_variance", "temp", "moment", "z^2"),
        FeatureSpec("temp_skew", "temp", "moment", "1"),
        FeatureSpec("temp_kurtosis", "temp", "moment", "1"),
    ]
    acc = [
        FeatureSpec("acc_mean", "acc", "time", "g"),
        FeatureSpec("acc_std", "acc", "time", "g"),
        FeatureSpec("acc_dominant_freq", "acc", "frequency", "Hz"),
        FeatureSpec("acc_lyapunov", "acc", "nonlinear", "nats/sample"),
        FeatureSpec("acc_sample_entropy", "acc", "nonlinear", "nats"),
        FeatureSpec("acc_skew", "acc", "moment", "1"),
        FeatureSpec("acc_kurtosis", "acc", "moment", "1"),
        FeatureSpec("acc_mfcc1", "acc", "cepstral", "1"),
        FeatureSpec("acc_mfcc2", "acc", "cepstral", "1"),
    ]
    return tuple(eda + hr + temp + acc)


@dataclass(frozen=True)
class FeatureManifest:
    """The frozen, ordered list of feature definitions."""

    entries: tuple
    version: str = MANIFEST_FORMAT_VERSION

    def __post_init__(self):
        names = [e.name for e in self.entries]
        if len(names) != len(set(names)):
            raise ValueError("feature names must be unique")

    @property
    def names(self):
        return [e.name for e in self.entries]

    def __len__(self):
        return len(self.entries)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def to_dict(self) -> dict:
        return {
            "format": self.version,
            "features": [
                {"name": e.name, "channel": e.channel, "family": e.family,
                 "unit": e.unit}
                for e in self.entries],
        }

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


_DEFAULT = None


def default_manifest() -> FeatureManifest:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = FeatureManifest(entries=_specs())
        assert len(_DEFAULT) == 42
    return _DEFAULT


@dataclass
class FeatureVector:
    values: np.ndarray
    subject_id: str
    shift_id: int
    t0: float
    label: StressLabel


def _linear_slope(y, fs_hz: float) -> float:
    """Least-squares slope in value-units per second."""
    t = np.arange(y.size) / fs_hz
    t = t - t.mean()
    return float(np.dot(t, y - y.mean()) / np.dot(t, t))


def featurize(epoch: Epoch, manifest: FeatureManifest = None) -> FeatureVector:
    """Compute the 42 manifest features for one epoch.

    Raises EpochRejectedError when any sub-computation lacks data or a
    value comes out non-finite, so the caller can drop the epoch with a
    reason.
    """
    manifest = manifest or default_manifest()
    try:
        eda = epoch.channels[ChannelKind.EDA]
        hr = epoch.channels[ChannelKind.HR]
        temp = epoch.channels[ChannelKind.TEMP]
    except KeyError as exc:
        raise EpochRejectedError(f"missing channel {exc}") from None

    values = {}
    try:
        dec = decompose_eda(eda)
        values["eda_scr_count"] = float(dec.scr_peaks.size)
        values["eda_scl_mean"] = float(np.mean(dec.tonic))
        values["eda_phasic_auc"] = phasic_auc(dec)
        values["eda_lf_power"] = band_power(eda, 4.0, *LF_BAND)
        values["eda_sample_entropy"] = sample_entropy(eda)
        m = moments(eda)
        values.update(eda_mean=m[0], eda_variance=m[1], eda_skew=m[2], eda_kurtosis=m[3])
        c = mfcc(eda, 4.0, n_coef=4)
        values.update({f"eda_mfcc{i + 1}": float(c[i]) for i in range(4)})

        hr_mean, rmssd, pnn50 = hrv_time(epoch.ibi_ms)
        values.update(hr_mean_bpm=hr_mean, hr_rmssd=rmssd, hr_pnn50=pnn50)
        values["hr_hf_power"] = band_power(hr, 4.0, *HF_BAND)
        sd1, sd2 = poincare_sd(epoch.ibi_ms)
        values.update(hr_sd1=sd1, hr_sd2=sd2,
                      hr_sd_ratio=sd1 / sd2 if sd2 > 1e-12 else 0.0)
        m = moments(hr)
        values.update(hr_variance=m[1], hr_skew=m[2], hr_kurtosis=m[3])
        c = mfcc(hr, 4.0, n_coef=4)
        values.update({f"hr_mfcc{i + 1}": float(c[i]) for i in range(4)})

        m = moments(temp)
        sigma_temp = epoch.scale.get(ChannelKind.TEMP, (0.0, 1.0))[1]
        values.update(temp_mean=m[0],
                      temp_gradient=_linear_slope(temp, 4.0) * 60.0 * sigma_temp,
                      temp_multiscale_entropy=multiscale_entropy(temp),
                      temp_variance=m[1], temp_skew=m[2], temp_kurtosis=m[3])

        acc = epoch.native_acc
        if acc.size == 0:
            raise InsufficientDataError("no native accelerometer segment")
        m = moments(acc)
        values.update(acc_mean=m[0], acc_std=float(np.std(acc)),
                      acc_dominant_freq=dominant_frequency(acc, epoch.acc_rate_hz,
                                                           ACC_DOM_FREQ_MAX_HZ),
                      acc_lyapunov=lyapunov_exponent(acc),
                      acc_sample_entropy=sample_entropy(acc),
                      acc_skew=m[2], acc_kurtosis=m[3])
        c = mfcc(acc, epoch.acc_rate_hz, n_coef=2)
        values.update(acc_mfcc1=float(c[0]), acc_mfcc2=float(c[1]))
    except InsufficientDataError as exc:
        raise EpochRejectedError(str(exc)) from exc

    vec = np.array([values[name] for name in manifest.names], dtype=np.float64)
    bad = ~np.isfinite(vec)
    if bad.any():
        raise EpochRejectedError(
            f"non-finite feature(s): {[manifest.names[i] for i in np.flatnonzero(bad)]}")
    return FeatureVector(values=vec, subject_id=epoch.subject_id,
                         shift_id=epoch.shift_id, t0=epoch.t0, label=epoch.label)


def featurize_epochs(epochs, manifest: FeatureManifest = None, threads: int = 1):
    """Featurize a batch; returns (vectors, rejections).

    ``rejections`` is a list of ((subject_id, t0), reason) for epochs that
    could not be featurized. Output order follows epoch order regardless of
    thread count.
    """
    manifest = manifest or default_manifest()

    def work(epoch):
        try:
            return featurize(epoch, manifest), None
        except EpochRejectedError as exc:
            return None, ((epoch.subject_id, epoch.t0), str(exc))

    if threads > 1 and len(epochs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, epochs))
    else:
        results = [work(e) for e in epochs]
    vectors = [v for v, _ in results if v is not None]
    rejections = [r for _, r in results if r is not None]
    return vectors, rejections
