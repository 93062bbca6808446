import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wearstress.data import ChannelKind, LabeledInterval, RawStream, StressLabel
from wearstress.errors import (DataFormatError, InsufficientDataError,
                               RejectionError)
from wearstress.preprocess import (ArtifactMask, Epoch, PreprocessParams,
                                   UniformStream, apply_artifact_mask,
                                   artifact_mask, hr_from_ibi, kalman_impute,
                                   load_epochs, preprocess_streams,
                                   resample_to_4hz, save_epochs, segment,
                                   zscore_per_subject)

from conftest import make_interval, make_stream


def acc_triplet(n=1000, rate=32.0, values=None):
    out = []
    for kind in (ChannelKind.ACC_X, ChannelKind.ACC_Y, ChannelKind.ACC_Z):
        v = np.zeros(n) if values is None else values.copy()
        out.append(make_stream(kind, rate=rate, values=v))
    return out


class TestArtifactMask:
    def test_constant_acceleration_flags_nothing(self):
        ax, ay, az = acc_triplet(values=np.full(1000, 0.7))
        mask = artifact_mask(ax, ay, az, threshold_g=0.3)
        assert not mask.flagged.any()

    def test_injected_deviation_flags_exactly_those_samples(self):
        base = np.full(2000, 0.5)
        bump = base.copy()
        bump[700:703] += 1.0  # 1 g deviation on 3 consecutive samples
        ax = make_stream(ChannelKind.ACC_X, rate=32.0, values=bump)
        ay = make_stream(ChannelKind.ACC_Y, rate=32.0, values=base)
        az = make_stream(ChannelKind.ACC_Z, rate=32.0, values=base)
        mask = artifact_mask(ax, ay, az, threshold_g=0.3, median_window_s=5.0)
        # oracle: recompute the deviation sum by definition
        from scipy.ndimage import median_filter
        window = int(round(5.0 * 32.0)) | 1
        dev = sum(np.abs(s.samples - median_filter(s.samples, size=window,
                                                   mode="nearest"))
                  for s in (ax, ay, az))
        np.testing.assert_array_equal(mask.flagged, dev > 0.3)
        assert sorted(np.flatnonzero(mask.flagged)) == [700, 701, 702]

    def test_infinite_threshold_flags_nothing(self):
        rng = np.random.default_rng(0)
        ax, ay, az = acc_triplet(values=rng.normal(0, 1, 1000))
        mask = artifact_mask(ax, ay, az, threshold_g=np.inf)
        assert not mask.flagged.any()

    def test_axis_length_mismatch(self):
        ax, ay, az = acc_triplet(n=100)
        az = make_stream(ChannelKind.ACC_Z, rate=32.0, values=np.zeros(99))
        with pytest.raises(DataFormatError):
            artifact_mask(ax, ay, az)


class TestApplyArtifactMask:
    def test_empty_mask_is_identity(self):
        s = make_stream(values=np.arange(50.0))
        mask = ArtifactMask(np.zeros(50, bool), 0.0, 4.0)
        out = apply_artifact_mask(s, mask, mode="median")
        assert out == s

    def test_median_replaces_only_flagged(self):
        ramp = np.arange(100.0)
        s = make_stream(values=ramp)
        flags = np.zeros(100, bool)
        flags[40] = True
        out = apply_artifact_mask(s, ArtifactMask(flags, 0.0, 4.0), mode="median")
        assert out.samples[40] == np.median(ramp[30:51])
        untouched = np.ones(100, bool)
        untouched[40] = False
        np.testing.assert_array_equal(out.samples[untouched], ramp[untouched])

    def test_mask_mode_saturation(self):
        s = make_stream(values=np.arange(20.0))
        out = apply_artifact_mask(s, ArtifactMask(np.ones(20, bool), 0.0, 4.0),
                                  mode="mask")
        assert out.missing_mask.all()


class TestResample:
    def test_constant_series(self):
        s = make_stream(rate=1.0, values=np.full(20, 3.3))
        u = resample_to_4hz(s)
        np.testing.assert_allclose(u.samples, 3.3, atol=1e-12)
        assert u.rate_hz == 4.0

    def test_reproduces_cubic_polynomial(self):
        t = np.arange(0.0, 11.0)  # 1 Hz over [0, 10]
        s = make_stream(rate=1.0, values=t ** 3 - 2 * t)
        u = resample_to_4hz(s)
        grid = u.start_time + np.arange(u.samples.size) / 4.0
        np.testing.assert_allclose(u.samples, grid ** 3 - 2 * grid, atol=1e-9)

    def test_identity_on_grid(self):
        v = np.sin(np.arange(40) / 5.0)
        u = resample_to_4hz(make_stream(rate=4.0, values=v))
        np.testing.assert_allclose(u.samples, v, atol=1e-12)

    def test_too_few_knots(self):
        with pytest.raises(InsufficientDataError):
            resample_to_4hz(make_stream(rate=4.0, values=np.ones(3)))

    def test_missing_excluded_and_quality_marks_gaps(self):
        vals = np.sin(np.arange(60) / 3.0)
        miss = np.zeros(60, bool)
        miss[20:40] = True  # 5 s gap at 4 Hz
        vals[miss] = np.nan
        u = resample_to_4hz(make_stream(rate=4.0, values=vals, missing=miss))
        assert np.isfinite(u.samples).all()
        assert not u.quality_mask.all()
        assert u.quality_mask[:15].all()

    def test_hr_from_ibi(self):
        ibi = make_stream(ChannelKind.IBI, rate=1.0,
                          values=np.full(100, 800.0), start=0.0)
        u = hr_from_ibi(ibi)
        assert u.kind is ChannelKind.HR
        np.testing.assert_allclose(u.samples, 75.0, atol=1e-9)


class TestZscore:
    def test_mean_zero_std_one(self):
        rng = np.random.default_rng(1)
        u = UniformStream("S01", ChannelKind.EDA, 0.0,
                          rng.normal(5, 3, 400), np.ones(400, bool))
        out, stats = zscore_per_subject([u])
        assert abs(out[0].samples.mean()) < 1e-9
        assert abs(out[0].samples.std() - 1.0) < 1e-9
        mu, sigma = stats[("S01", ChannelKind.EDA)]
        assert sigma > 0

    def test_constant_maps_to_zeros(self):
        u = UniformStream("S01", ChannelKind.TEMP, 0.0,
                          np.full(100, 8.0), np.ones(100, bool))
        out, _ = zscore_per_subject([u])
        np.testing.assert_array_equal(out[0].samples, 0.0)

    def test_affine_invariance(self):
        rng = np.random.default_rng(2)
        v = rng.normal(0, 1, 300)
        a = UniformStream("S01", ChannelKind.EDA, 0.0, v, np.ones(300, bool))
        b = UniformStream("S01", ChannelKind.EDA, 0.0, 2.5 * v + 7.0,
                          np.ones(300, bool))
        za, _ = zscore_per_subject([a])
        zb, _ = zscore_per_subject([b])
        np.testing.assert_allclose(za[0].samples, zb[0].samples, atol=1e-9)


def uniform(kind, values, subject="S01", start=0.0):
    return UniformStream(subject, kind, start, values,
                         np.ones(len(values), bool))


def channels_for(n, subject="S01", start=0.0):
    rng = np.random.default_rng(0)
    return {k: uniform(k, rng.normal(0, 1, n), subject, start)
            for k in (ChannelKind.EDA, ChannelKind.HR, ChannelKind.TEMP)}


class TestSegment:
    def test_count_formula_20_minutes(self):
        chans = channels_for(4800)
        ivs = [make_interval(t1=1200.0)]
        epochs = segment(chans, None, None, ivs)
        assert len(epochs) == 7  # floor((4800-1200)/600)+1

    def test_short_coverage_zero_epochs(self):
        chans = channels_for(1100)
        assert segment(chans, None, None, [make_interval()]) == []

    def test_consecutive_epochs_share_600_samples(self):
        chans = channels_for(2000)
        epochs = segment(chans, None, None, [make_interval()])
        a, b = epochs[0], epochs[1]
        for kind in a.channels:
            np.testing.assert_array_equal(a.channels[kind][600:],
                                          b.channels[kind][:600])

    def test_epochs_without_interval_dropped(self):
        chans = channels_for(4800)
        # only the first 400 s are labeled
        epochs = segment(chans, None, None, [make_interval(t1=400.0)])
        assert all(e.t0 < 400.0 for e in epochs)

    def test_shift_straddle_dropped(self):
        chans = channels_for(4800)
        ivs = [make_interval(shift=0, t0=0.0, t1=600.0),
               make_interval(shift=1, t0=600.0, t1=1200.0)]
        epochs = segment(chans, None, None, ivs)
        # of the 7 candidate windows only t0=450 crosses t=600
        assert all(e.t0 + 300.0 <= 600.0 or e.t0 >= 600.0 for e in epochs)
        assert len(epochs) == 6

    def test_label_majority_and_tie(self):
        chans = channels_for(1200)
        ivs = [make_interval(t0=0.0, t1=120.0, label=StressLabel.BASELINE),
               make_interval(t0=120.0, t1=300.0, label=StressLabel.ACUTE)]
        assert segment(chans, None, None, ivs)[0].label is StressLabel.ACUTE
        tie = [make_interval(t0=0.0, t1=150.0, label=StressLabel.CHRONIC),
               make_interval(t0=150.0, t1=300.0, label=StressLabel.ACUTE)]
        # equal overlap: the earlier interval's class wins
        assert segment(chans, None, None, tie)[0].label is StressLabel.CHRONIC

    @given(n=st.integers(min_value=1200, max_value=20000))
    @settings(max_examples=25, deadline=None)
    def test_count_formula_property(self, n):
        chans = {ChannelKind.EDA: uniform(ChannelKind.EDA, np.zeros(n))}
        epochs = segment(chans, None, None,
                         [make_interval(t1=n / 4.0 + 300.0)])
        assert len(epochs) == (n - 1200) // 600 + 1


class TestKalman:
    def test_no_missing_identity(self):
        s = make_stream(values=np.sin(np.arange(100) / 3.0))
        out = kalman_impute(s)
        np.testing.assert_array_equal(out.samples, s.samples)

    def test_linear_ramp_gap(self):
        vals = np.array([0.0, 1.0, 2.0, np.nan, 4.0, 5.0])
        s = make_stream(rate=1.0, values=vals, missing=np.isnan(vals))
        out = kalman_impute(s, q=1e-2, r=1e-1, max_missing_frac=0.5)
        assert abs(out.samples[3] - 3.0) < 1e-3
        assert not out.missing_mask.any()

    def test_never_alters_observed(self):
        rng = np.random.default_rng(4)
        vals = rng.normal(0, 1, 200)
        miss = rng.random(200) < 0.02
        vals = vals.copy()
        vals[miss] = np.nan
        s = make_stream(values=vals, missing=miss)
        out = kalman_impute(s, max_missing_frac=0.1)
        np.testing.assert_array_equal(out.samples[~miss], s.samples[~miss])

    def test_rejects_above_threshold(self):
        vals = np.ones(100)
        miss = np.zeros(100, bool)
        miss[:3] = True  # 3% missing
        vals[miss] = np.nan
        with pytest.raises(RejectionError, match="S01/eda"):
            kalman_impute(make_stream(values=vals, missing=miss),
                          max_missing_frac=0.02)


class TestPipelineAndContainer:
    def test_pipeline_produces_finite_epochs(self, small_epochs):
        assert len(small_epochs) > 0
        for e in small_epochs[:5]:
            for arr in e.channels.values():
                assert arr.size == 1200 and np.isfinite(arr).all()
            assert e.native_acc.size == 9600

    def test_thread_count_does_not_change_epochs(self, small_synth):
        streams, intervals = small_synth
        a = preprocess_streams(streams, intervals, threads=1)
        b = preprocess_streams(streams, intervals, threads=4)
        assert len(a) == len(b)
        for ea, eb in zip(a, b):
            assert ea.t0 == eb.t0 and ea.label == eb.label
            for kind in ea.channels:
                np.testing.assert_array_equal(ea.channels[kind],
                                              eb.channels[kind])

    def test_epoch_container_round_trip(self, small_epochs, tmp_path):
        path = tmp_path / "epochs.bin"
        save_epochs(small_epochs, path, PreprocessParams())
        loaded, sidecar = load_epochs(path)
        assert sidecar["format"] == "wearstress-epochs-v1"
        assert len(loaded) == len(small_epochs)
        for a, b in zip(small_epochs, loaded):
            assert a.subject_id == b.subject_id
            assert a.t0 == b.t0
            assert a.label == b.label
            assert a.scale == b.scale
            for kind in a.channels:
                np.testing.assert_array_equal(a.channels[kind], b.channels[kind])
            np.testing.assert_array_equal(a.native_acc, b.native_acc)
            np.testing.assert_array_equal(a.ibi_ms, b.ibi_ms)
