import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from wearstress.data import (ChannelKind, LabeledInterval, RawStream,
                             StressLabel, SynthConfig, generate_synthetic,
                             load_streams, save_streams)
from wearstress.errors import DataFormatError, UsageError

from conftest import make_stream


def tree_hash(root):
    h = hashlib.sha256()
    for path in sorted(Path(root).rglob("*")):
        if path.is_file():
            h.update(str(path.relative_to(root)).encode())
            h.update(path.read_bytes())
    return h.hexdigest()


class TestRawStream:
    def test_invariants(self):
        with pytest.raises(DataFormatError):
            make_stream(rate=0.0)
        with pytest.raises(DataFormatError):
            make_stream(values=np.empty(0))
        with pytest.raises(DataFormatError):
            make_stream(values=np.ones(5), missing=np.zeros(4, bool))

    def test_ibi_timestamps_are_cumulative(self):
        s = make_stream(kind=ChannelKind.IBI, rate=1.0,
                        values=np.array([800.0, 900.0, 1000.0]), start=10.0)
        np.testing.assert_allclose(s.timestamps(), [10.8, 11.7, 12.7])


class TestInterval:
    def test_rejects_degenerate(self):
        with pytest.raises(DataFormatError):
            LabeledInterval("S01", 0, 5.0, 5.0, StressLabel.ACUTE)
        with pytest.raises(DataFormatError):
            LabeledInterval("S01", -1, 0.0, 5.0, StressLabel.ACUTE)

    def test_overlap(self):
        iv = LabeledInterval("S01", 0, 10.0, 20.0, StressLabel.BASELINE)
        assert iv.overlap_s(0.0, 15.0) == 5.0
        assert iv.overlap_s(25.0, 30.0) == 0.0


class TestLoadSave:
    def test_direct_read_declared_rate(self, tmp_path):
        p = tmp_path / "S01" / "eda.csv"
        p.parent.mkdir()
        rows = "\n".join(f"{i * 0.25},{i * 1.5}" for i in range(8))
        p.write_text("# start=0.0 rate=4.0\n" + rows + "\n")
        streams, _ = load_streams(tmp_path)
        assert len(streams) == 1
        assert streams[0].rate_hz == 4.0
        assert streams[0].samples.size == 8
        np.testing.assert_allclose(streams[0].samples, np.arange(8) * 1.5)

    def test_round_trip_bit_for_bit(self, tmp_path):
        rng = np.random.default_rng(5)
        vals = rng.normal(2.0, 0.3, 50)
        miss = np.zeros(50, bool)
        miss[[7, 31]] = True
        vals[miss] = np.nan
        streams = [
            make_stream(ChannelKind.EDA, values=vals, missing=miss, start=123.456),
            make_stream(ChannelKind.IBI, rate=1.0,
                        values=rng.uniform(700, 1000, 30), start=123.456),
        ]
        intervals = [LabeledInterval("S01", 0, 0.0, 50.0, StressLabel.ACUTE)]
        save_streams(streams, intervals, tmp_path)
        loaded, loaded_iv = load_streams(tmp_path)
        assert sorted(streams, key=lambda s: s.kind.value) == \
            sorted(loaded, key=lambda s: s.kind.value)
        assert loaded_iv == intervals
        # saving what was loaded reproduces identical bytes
        other = tmp_path.parent / "again"
        save_streams(loaded, loaded_iv, other)
        assert tree_hash(tmp_path) == tree_hash(other)

    def test_negative_rate_header_rejected(self, tmp_path):
        p = tmp_path / "S01" / "eda.csv"
        p.parent.mkdir()
        p.write_text("# start=0.0 rate=-1.0\n0.0,1.0\n")
        with pytest.raises(DataFormatError, match="rate"):
            load_streams(tmp_path)

    def test_missing_header_names_file(self, tmp_path):
        p = tmp_path / "S01" / "eda.csv"
        p.parent.mkdir()
        p.write_text("0.0,1.0\n0.25,1.5\n")
        with pytest.raises(DataFormatError, match="eda.csv"):
            load_streams(tmp_path)

    def test_non_monotonic_timestamps_rejected(self, tmp_path):
        p = tmp_path / "S01" / "eda.csv"
        p.parent.mkdir()
        p.write_text("# start=0.0 rate=4.0\n0.0,1.0\n0.5,2.0\n0.25,3.0\n")
        with pytest.raises(DataFormatError, match="increasing"):
            load_streams(tmp_path)

    def test_empty_save_writes_only_manifest(self, tmp_path):
        save_streams([], [], tmp_path)
        files = sorted(p.name for p in tmp_path.iterdir())
        assert files == ["manifest.json"]
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["format"] == "wearstress-v1"
        assert manifest["files"] == []

    def test_same_subject_kind_collision(self, tmp_path):
        streams = [make_stream(), make_stream(values=np.ones(5))]
        with pytest.raises(DataFormatError, match="collide"):
            save_streams(streams, [], tmp_path)

    def test_overlapping_intervals_rejected(self, tmp_path):
        ivs = [LabeledInterval("S01", 0, 0.0, 10.0, StressLabel.BASELINE),
               LabeledInterval("S01", 0, 5.0, 15.0, StressLabel.ACUTE)]
        with pytest.raises(DataFormatError, match="overlap"):
            save_streams([make_stream()], ivs, tmp_path)


class TestSynthConfig:
    def test_bad_mix_rejected(self):
        with pytest.raises(UsageError):
            SynthConfig(seed=0, n_subjects=1, shifts_per_subject=1,
                        class_mix=(0.5, 0.5, 0.5))

    def test_bad_shift_hours_rejected(self):
        with pytest.raises(UsageError):
            SynthConfig(seed=0, n_subjects=1, shifts_per_subject=1,
                        shift_hours=0.0)

    def test_negative_effect_rejected(self):
        with pytest.raises(UsageError):
            SynthConfig(seed=0, n_subjects=1, shifts_per_subject=1,
                        effect_size=-1.0)


class TestGenerator:
    def test_zero_shifts_empty(self):
        cfg = SynthConfig(seed=0, n_subjects=3, shifts_per_subject=0)
        streams, intervals = generate_synthetic(cfg)
        assert streams == [] and intervals == []

    def test_determinism_byte_identical(self, tmp_path):
        cfg = SynthConfig(seed=42, n_subjects=1, shifts_per_subject=1,
                          shift_hours=0.25)
        a, b = tmp_path / "a", tmp_path / "b"
        save_streams(*generate_synthetic(cfg), a)
        save_streams(*generate_synthetic(cfg), b)
        assert tree_hash(a) == tree_hash(b)

    def test_acute_raises_mean_eda(self):
        cfg = SynthConfig(seed=3, n_subjects=1, shifts_per_subject=2,
                          shift_hours=1.0, effect_size=3.0)
        streams, intervals = generate_synthetic(cfg)
        eda = next(s for s in streams if s.kind is ChannelKind.EDA)
        t = eda.timestamps()
        means = {}
        for label in (StressLabel.BASELINE, StressLabel.ACUTE):
            mask = np.zeros(t.size, bool)
            for iv in intervals:
                if iv.label is label:
                    mask |= (t >= iv.t_start) & (t < iv.t_end)
            means[label] = np.nanmean(eda.samples[mask])
        assert means[StressLabel.ACUTE] > means[StressLabel.BASELINE]

    def test_label_proportions_match_mix(self):
        mix = (0.8, 0.12, 0.08)
        cfg = SynthConfig(seed=9, n_subjects=4, shifts_per_subject=5,
                          shift_hours=0.5, class_mix=mix)
        _, intervals = generate_synthetic(cfg)
        totals = np.zeros(3)
        for iv in intervals:
            totals[int(iv.label)] += iv.t_end - iv.t_start
        props = totals / totals.sum()
        np.testing.assert_allclose(props, mix, atol=0.02)

    def test_intervals_tile_each_shift(self):
        cfg = SynthConfig(seed=1, n_subjects=1, shifts_per_subject=3,
                          shift_hours=0.5)
        _, intervals = generate_synthetic(cfg)
        for shift in range(3):
            ivs = sorted([iv for iv in intervals if iv.shift_id == shift],
                         key=lambda iv: iv.t_start)
            for a, b in zip(ivs, ivs[1:]):
                assert b.t_start == pytest.approx(a.t_end, abs=1e-6)
            dur = ivs[-1].t_end - ivs[0].t_start
            assert dur == pytest.approx(1800.0, abs=1e-6)
