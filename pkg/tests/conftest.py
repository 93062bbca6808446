import numpy as np
import pytest

from wearstress.data import ChannelKind, LabeledInterval, RawStream, StressLabel


def make_stream(kind=ChannelKind.EDA, subject="S01", start=0.0, rate=4.0,
                values=None, missing=None, n=100):
    if values is None:
        values = np.sin(np.arange(n) / 7.0)
    values = np.asarray(values, dtype=np.float64)
    if missing is None:
        missing = np.zeros(values.size, dtype=bool)
    return RawStream(subject_id=subject, kind=kind, start_time=start,
                     rate_hz=rate, samples=values, missing_mask=missing)


def make_interval(subject="S01", shift=0, t0=0.0, t1=3600.0,
                  label=StressLabel.BASELINE):
    return LabeledInterval(subject_id=subject, shift_id=shift, t_start=t0,
                           t_end=t1, label=label)


@pytest.fixture(scope="session")
def small_synth():
    """One-subject synthetic recording reused by pipeline-level tests."""
    from wearstress.data import SynthConfig, generate_synthetic

    cfg = SynthConfig(seed=11, n_subjects=1, shifts_per_subject=2,
                      shift_hours=1.0, effect_size=2.0)
    return generate_synthetic(cfg)


@pytest.fixture(scope="session")
def small_epochs(small_synth):
    from wearstress.preprocess import preprocess_streams

    streams, intervals = small_synth
    return preprocess_streams(streams, intervals)


def blob_data(seed=0, n_per_class=60, d=6, spread=0.5):
    """Three well-separated Gaussian blobs."""
    rng = np.random.default_rng(seed)
    centers = np.zeros((3, d))
    centers[1, 0] = 4.0
    centers[2, 1] = 4.0
    X = np.vstack([rng.normal(0.0, spread, (n_per_class, d)) + centers[c]
                   for c in range(3)])
    y = np.repeat(np.arange(3), n_per_class)
    return X, y
