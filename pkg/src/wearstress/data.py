"""Raw data model, on-disk formats, and the synthetic dataset generator.

On-disk layout (format "wearstress-v1"):

    <root>/<subject_id>/<channel>.csv   header ``# start=<unix_s> rate=<hz>``
                                        then one ``timestamp,value`` row per
                                        sample (empty value = missing)
    <root>/labels.csv                   subject_id,shift_id,t_start,t_end,label
    <root>/manifest.json                file list + format version
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.signal import lfilter

from .errors import DataFormatError, UsageError
from .rng import substream

FORMAT_VERSION = "wearstress-v1"


class ChannelKind(str, Enum):
    """The seven sensor channels a stream can carry."""

    EDA = "eda"        # microsiemens
    HR = "hr"          # beats/min
    IBI = "ibi"        # milliseconds between beats (event series)
    TEMP = "temp"      # degrees Celsius
    ACC_X = "acc_x"    # g
    ACC_Y = "acc_y"    # g
    ACC_Z = "acc_z"    # g


class StressLabel(IntEnum):
    BASELINE = 0
    ACUTE = 1
    CHRONIC = 2

    @property
    def short(self) -> str:
        return self.name.lower()

    @classmethod
    def from_name(cls, name: str) -> "StressLabel":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise DataFormatError(f"unknown stress label {name!r}") from None


LABEL_NAMES = tuple(lbl.short for lbl in StressLabel)


@dataclass
class RawStream:
    """One subject/channel time series at its native rate.

    ``missing_mask`` is True where the sample value is unknown; the stored
    value at those positions is NaN. For IBI streams the samples are
    successive inter-beat intervals in milliseconds and the implied event
    times are ``start_time + cumsum(samples)/1000``.
    """

    subject_id: str
    kind: ChannelKind
    start_time: float
    rate_hz: float
    samples: np.ndarray
    missing_mask: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.missing_mask = np.asarray(self.missing_mask, dtype=bool)
        if self.rate_hz <= 0:
            raise DataFormatError(
                f"stream {self.subject_id}/{self.kind.value}: rate must be positive, got {self.rate_hz}")
        if self.samples.size == 0:
            raise DataFormatError(
                f"stream {self.subject_id}/{self.kind.value}: no samples")
        if self.missing_mask.shape != self.samples.shape:
            raise DataFormatError(
                f"stream {self.subject_id}/{self.kind.value}: mask length "
                f"{self.missing_mask.size} != sample length {self.samples.size}")

    def timestamps(self) -> np.ndarray:
        """Per-sample times: the uniform grid, or beat times for IBI."""
        if self.kind is ChannelKind.IBI:
            return self.start_time + np.cumsum(self.samples) / 1000.0
        return self.start_time + np.arange(self.samples.size) / self.rate_hz

    def duration_s(self) -> float:
        t = self.timestamps()
        return float(t[-1] - self.start_time)

    def __eq__(self, other):
        if not isinstance(other, RawStream):
            return NotImplemented
        return (self.subject_id == other.subject_id
                and self.kind == other.kind
                and self.start_time == other.start_time
                and self.rate_hz == other.rate_hz
                and np.array_equal(self.samples, other.samples, equal_nan=True)
                and np.array_equal(self.missing_mask, other.missing_mask))


@dataclass(frozen=True)
class LabeledInterval:
    """A contiguous stretch of one shift carrying a single stress label."""

    subject_id: str
    shift_id: int
    t_start: float
    t_end: float
    label: StressLabel

    def __post_init__(self):
        if self.shift_id < 0:
            raise DataFormatError(f"negative shift_id {self.shift_id}")
        if not self.t_start < self.t_end:
            raise DataFormatError(
                f"interval for {self.subject_id}: t_start {self.t_start} >= t_end {self.t_end}")

    def overlap_s(self, t0: float, t1: float) -> float:
        return max(0.0, min(self.t_end, t1) - max(self.t_start, t0))


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the synthetic wearable recording generator."""

    seed: int
    n_subjects: int
    shifts_per_subject: int
    shift_hours: float = 8.0
    class_mix: tuple = (0.80, 0.12, 0.08)
    effect_size: float = 1.0

    def __post_init__(self):
        mix = tuple(float(p) for p in self.class_mix)
        object.__setattr__(self, "class_mix", mix)
        if len(mix) != 3 or any(p < 0 or p > 1 for p in mix):
            raise UsageError(f"class_mix must be three proportions in [0,1], got {mix}")
        if abs(sum(mix) - 1.0) > 1e-9:
            raise UsageError(f"class_mix must sum to 1, got {sum(mix)!r}")
        if self.effect_size < 0:
            raise UsageError(f"effect_size must be >= 0, got {self.effect_size}")
        if self.shift_hours <= 0:
            raise UsageError(f"shift_hours must be positive, got {self.shift_hours}")
        if self.n_subjects < 0 or self.shifts_per_subject < 0:
            raise UsageError("n_subjects and shifts_per_subject must be non-negative")


# ---------------------------------------------------------------------------
# disk I/O


_HEADER_RE = re.compile(r"^#\s*start=(\S+)\s+rate=(\S+)\s*$")

_KIND_ORDER = {k: i for i, k in enumerate(ChannelKind)}


def _stream_path(root: Path, stream: RawStream) -> Path:
    return root / stream.subject_id / f"{stream.kind.value}.csv"


def save_streams(streams, intervals, root_path) -> None:
    """Write streams + labels under ``root_path`` in the wearstress-v1 layout."""
    root = Path(root_path)
    root.mkdir(parents=True, exist_ok=True)

    seen = set()
    for s in streams:
        key = (s.subject_id, s.kind)
        if key in seen:
            raise DataFormatError(
                f"two streams for subject {s.subject_id} channel {s.kind.value} "
                "would collide on one file")
        seen.add(key)

    files = []
    for s in sorted(streams, key=lambda s: (s.subject_id, _KIND_ORDER[s.kind])):
        if s.kind is ChannelKind.IBI and s.missing_mask.any():
            raise DataFormatError(
                f"IBI stream for {s.subject_id} contains missing values; "
                "event times would be unrecoverable")
        path = _stream_path(root, s)
        path.parent.mkdir(parents=True, exist_ok=True)
        ts = s.timestamps().tolist()
        lines = [f"# start={float(s.start_time)!r} rate={float(s.rate_hz)!r}"]
        miss = s.missing_mask.tolist()
        vals = s.samples.tolist()
        for t, v, m in zip(ts, vals, miss):
            lines.append(f"{t!r}," if m else f"{t!r},{v!r}")
        path.write_text("\n".join(lines) + "\n")
        files.append(str(path.relative_to(root)))

    _check_interval_overlap(intervals)
    manifest = {"format": FORMAT_VERSION, "files": sorted(files), "labels": None}
    if intervals:
        lab_lines = ["subject_id,shift_id,t_start,t_end,label"]
        for iv in sorted(intervals, key=lambda iv: (iv.subject_id, iv.t_start)):
            lab_lines.append(f"{iv.subject_id},{iv.shift_id},{float(iv.t_start)!r},"
                             f"{float(iv.t_end)!r},{iv.label.short}")
        (root / "labels.csv").write_text("\n".join(lab_lines) + "\n")
        manifest["labels"] = "labels.csv"
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _check_interval_overlap(intervals) -> None:
    by_subject = {}
    for iv in intervals:
        by_subject.setdefault(iv.subject_id, []).append(iv)
    for subject, ivs in by_subject.items():
        ivs = sorted(ivs, key=lambda iv: iv.t_start)
        for a, b in zip(ivs, ivs[1:]):
            if b.t_start < a.t_end - 1e-9:
                raise DataFormatError(
                    f"overlapping intervals for subject {subject}: "
                    f"[{a.t_start}, {a.t_end}) and [{b.t_start}, {b.t_end})")


def _load_stream_file(path: Path, subject_id: str, kind: ChannelKind) -> RawStream:
    with open(path) as fh:
        header = fh.readline()
    m = _HEADER_RE.match(header)
    if not m:
        raise DataFormatError(f"{path}: missing '# start=<unix_s> rate=<hz>' header")
    start_time = float(m.group(1))
    rate_hz = float(m.group(2))
    if rate_hz <= 0:
        raise DataFormatError(f"{path}: declared rate {rate_hz} is not positive")

    try:
        df = pd.read_csv(path, skiprows=1, header=None, names=["t", "v"],
                         float_precision="round_trip")
    except Exception as exc:
        raise DataFormatError(f"{path}: unreadable sample rows ({exc})") from exc
    if len(df) == 0:
        raise DataFormatError(f"{path}: no sample rows")
    ts = df["t"].to_numpy(dtype=np.float64)
    if np.any(~np.isfinite(ts)) or np.any(np.diff(ts) <= 0):
        raise DataFormatError(f"{path}: timestamps are not strictly increasing")
    values = df["v"].to_numpy(dtype=np.float64)
    missing = np.isnan(values)
    return RawStream(subject_id=subject_id, kind=kind, start_time=start_time,
                     rate_hz=rate_hz, samples=values, missing_mask=missing)


def load_streams(root_path):
    """Load all streams and labeled intervals under ``root_path``.

    Returns ``(streams, intervals)`` sorted by (subject, channel) and
    (subject, t_start) respectively.
    """
    root = Path(root_path)
    if not root.is_dir():
        raise UsageError(f"dataset directory not found: {root}")

    manifest_path = root / "manifest.json"
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        if manifest.get("format") != FORMAT_VERSION:
            raise DataFormatError(
                f"{manifest_path}: format {manifest.get('format')!r}, expected {FORMAT_VERSION!r}")
        rel_files = manifest.get("files", [])
    else:
        rel_files = sorted(
            str(p.relative_to(root))
            for p in root.glob("*/*.csv"))

    kind_by_name = {k.value: k for k in ChannelKind}
    streams = []
    for rel in sorted(rel_files):
        path = root / rel
        if not path.exists():
            raise DataFormatError(f"{path}: listed in manifest but absent")
        subject_id = path.parent.name
        kind = kind_by_name.get(path.stem)
        if kind is None:
            raise DataFormatError(f"{path}: unknown channel file name")
        streams.append(_load_stream_file(path, subject_id, kind))
    streams.sort(key=lambda s: (s.subject_id, _KIND_ORDER[s.kind]))

    intervals = []
    labels_path = root / "labels.csv"
    if labels_path.exists():
        df = pd.read_csv(labels_path, float_precision="round_trip")
        expected = ["subject_id", "shift_id", "t_start", "t_end", "label"]
        if list(df.columns) != expected:
            raise DataFormatError(f"{labels_path}: columns {list(df.columns)} != {expected}")
        for row in df.itertuples(index=False):
            intervals.append(LabeledInterval(
                subject_id=str(row.subject_id),
                shift_id=int(row.shift_id),
                t_start=float(row.t_start),
                t_end=float(row.t_end),
                label=StressLabel.from_name(str(row.label))))
        _check_interval_overlap(intervals)
    intervals.sort(key=lambda iv: (iv.subject_id, iv.t_start))
    return streams, intervals


# ---------------------------------------------------------------------------
# synthetic generator

# Signal model constants. Stress effects scale with SynthConfig.effect_size:
# acute episodes add SCR bumps and shorten mean IBI, chronic episodes raise
# the tonic EDA level and impose a positive temperature gradient.
_BASE_TIME = 1_600_000_000.0
_EDA_RATE = 4.0
_TEMP_RATE = 4.0
_ACC_RATE = 32.0

_EDA_LEVEL = 2.0            # uS
_EDA_WANDER = 0.35          # uS, slow tonic drift amplitude
_EDA_NOISE = 0.015          # uS per sample
_SCR_RATE_BASE = 1.5 / 60.0     # events/s at rest
_SCR_RATE_ACUTE = 2.0 / 60.0    # extra events/s per effect unit
_SCR_AMP = (0.20, 0.50)     # uS, uniform range
_SCR_RISE_S = 0.7
_SCR_DECAY_S = 3.0
_CHRONIC_EDA_SHIFT = 0.6    # uS per effect unit
_CHRONIC_TAU_S = 120.0

_IBI_BASE_MS = 850.0
_IBI_ACUTE_DROP = 100.0     # ms per effect unit
_IBI_NOISE_MS = 18.0
_RSA_AMP_MS = 22.0
_RSA_FREQ_HZ = 0.25
_IBI_SLOW_AMP_MS = 28.0
_IBI_SLOW_FREQ_HZ = 0.03
_ACUTE_TAU_S = 45.0

_TEMP_LEVEL = 33.0          # degC
_TEMP_WANDER = 0.25
_TEMP_NOISE = 0.02
_CHRONIC_TEMP_GRAD = 0.02 / 60.0  # degC/s per effect unit
_TEMP_DECAY_TAU_S = 900.0

_ACC_NOISE = 0.03           # g per axis
_BURSTS_PER_HOUR = 2.0
_BURST_DUR_S = (2.0, 5.0)
_BURST_ACC_G = 0.6
_BURST_EDA = 0.7
_WALK_PER_HOUR = 1.5
_WALK_DUR_S = (60.0, 240.0)

_MISSING_FRAC = 0.003


def _plan_shift_intervals(rng, subject_id, shift_id, t0, duration, mix):
    """Tile one shift with intervals whose per-class durations match ``mix``."""
    p_base, p_acute, p_chronic = mix
    episodes = []
    acute_total = p_acute * duration
    if acute_total > 0:
        n_ep = 2 if acute_total >= 900.0 else 1
        episodes += [(StressLabel.ACUTE, acute_total / n_ep)] * n_ep
    chronic_total = p_chronic * duration
    if chronic_total > 0:
        episodes.append((StressLabel.CHRONIC, chronic_total))
    order = rng.permutation(len(episodes))
    episodes = [episodes[i] for i in order]

    base_total = duration - sum(d for _, d in episodes)
    gaps = rng.dirichlet(np.ones(len(episodes) + 1)) * base_total if episodes \
        else np.array([base_total])

    out = []
    cursor = t0
    for i, (label, dur) in enumerate(episodes):
        gap = float(gaps[i])
        if gap > 1e-9:
            out.append(LabeledInterval(subject_id, shift_id, cursor, cursor + gap,
                                       StressLabel.BASELINE))
            cursor += gap
        out.append(LabeledInterval(subject_id, shift_id, cursor, cursor + dur, label))
        cursor += dur
    if t0 + duration - cursor > 1e-9:
        out.append(LabeledInterval(subject_id, shift_id, cursor, t0 + duration,
                                   StressLabel.BASELINE))
    return out


def _indicator(intervals, label, t0, n, rate):
    """Per-sample 0/1 indicator of ``label`` coverage on a uniform grid."""
    ind = np.zeros(n)
    for iv in intervals:
        if iv.label is not label:
            continue
        i0 = max(0, int(np.ceil((iv.t_start - t0) * rate - 1e-9)))
        i1 = min(n, int(np.ceil((iv.t_end - t0) * rate - 1e-9)))
        ind[i0:i1] = 1.0
    return ind


def _smooth_onset(x, tau_s, rate):
    """First-order lag toward x, modelling physiological onset/offset."""
    alpha = 1.0 / (tau_s * rate)
    return lfilter([alpha], [1.0, -(1.0 - alpha)], x)


def _scr_kernel(rate):
    t = np.arange(0.0, 20.0, 1.0 / rate)
    k = np.exp(-t / _SCR_DECAY_S) - np.exp(-t / _SCR_RISE_S)
    return k / k.max()


def _inject_missing(rng, values):
    mask = rng.random(values.size) < _MISSING_FRAC
    values = values.copy()
    values[mask] = np.nan
    return values, mask


def _generate_subject(cfg: SynthConfig, subject_idx: int):
    rng = substream(cfg.seed, "synth", subject_idx)
    subject_id = f"S{subject_idx + 1:02d}"
    shift_s = cfg.shift_hours * 3600.0
    total_s = cfg.shifts_per_subject * shift_s
    es = cfg.effect_size

    intervals = []
    for k in range(cfg.shifts_per_subject):
        intervals += _plan_shift_intervals(
            rng, subject_id, k, _BASE_TIME + k * shift_s, shift_s, cfg.class_mix)

    # Motion schedule first: bursts corrupt both ACC and EDA.
    n_bursts = rng.poisson(_BURSTS_PER_HOUR * total_s / 3600.0)
    bursts = [(rng.uniform(0, total_s), rng.uniform(*_BURST_DUR_S))
              for _ in range(n_bursts)]
    n_walks = rng.poisson(_WALK_PER_HOUR * total_s / 3600.0)
    walks = [(rng.uniform(0, total_s), rng.uniform(*_WALK_DUR_S),
              rng.uniform(1.4, 2.2), rng.uniform(0.08, 0.30), rng.uniform(0, 2 * np.pi))
             for _ in range(n_walks)]

    def burst_mask(n, rate):
        m = np.zeros(n, dtype=bool)
        for start, dur in bursts:
            i0, i1 = int(start * rate), min(n, int((start + dur) * rate))
            m[i0:i1] = True
        return m

    n4 = int(total_s * _EDA_RATE)
    t4 = np.arange(n4) / _EDA_RATE

    acute4 = _smooth_onset(_indicator(intervals, StressLabel.ACUTE, _BASE_TIME, n4, _EDA_RATE),
                           _ACUTE_TAU_S, _EDA_RATE)
    chronic4 = _smooth_onset(_indicator(intervals, StressLabel.CHRONIC, _BASE_TIME, n4, _EDA_RATE),
                             _CHRONIC_TAU_S, _EDA_RATE)

    # --- EDA ---
    wander = (_EDA_WANDER * np.sin(2 * np.pi * t4 / rng.uniform(1500, 2500)
                                   + rng.uniform(0, 2 * np.pi))
              + 0.5 * _EDA_WANDER * np.sin(2 * np.pi * t4 / rng.uniform(400, 900)
                                           + rng.uniform(0, 2 * np.pi)))
    scr_rate = _SCR_RATE_BASE + _SCR_RATE_ACUTE * es * acute4
    events = rng.random(n4) < scr_rate / _EDA_RATE
    amps = rng.uniform(*_SCR_AMP, size=n4) * (1.0 + 0.3 * es * acute4)
    phasic = np.convolve(np.where(events, amps, 0.0), _scr_kernel(_EDA_RATE))[:n4]
    eda = (_EDA_LEVEL + wander + _CHRONIC_EDA_SHIFT * es * chronic4 + phasic
           + rng.normal(0.0, _EDA_NOISE, n4))
    bm4 = burst_mask(n4, _EDA_RATE)
    eda[bm4] += np.abs(rng.normal(0.0, _BURST_EDA, int(bm4.sum())))
    eda_vals, eda_miss = _inject_missing(rng, eda)

    # --- IBI (event series; HR is derived downstream) ---
    ibis = []
    t = 0.0
    while t < total_s:
        idx = min(n4 - 1, int(t * _EDA_RATE))
        mean_ibi = (_IBI_BASE_MS - _IBI_ACUTE_DROP * es * acute4[idx]
                    + _RSA_AMP_MS * np.sin(2 * np.pi * _RSA_FREQ_HZ * t)
                    + _IBI_SLOW_AMP_MS * np.sin(2 * np.pi * _IBI_SLOW_FREQ_HZ * t))
        ibi = max(350.0, mean_ibi + rng.normal(0.0, _IBI_NOISE_MS))
        ibis.append(ibi)
        t += ibi / 1000.0
    ibi_vals = np.array(ibis)

    # --- TEMP ---
    nt = int(total_s * _TEMP_RATE)
    tt = np.arange(nt) / _TEMP_RATE
    chronic_t = _indicator(intervals, StressLabel.CHRONIC, _BASE_TIME, nt, _TEMP_RATE)
    ramp = np.empty(nt)
    st = 0.0
    dt = 1.0 / _TEMP_RATE
    grad = _CHRONIC_TEMP_GRAD * es
    for i in range(nt):
        if chronic_t[i] > 0:
            st += grad * dt
        else:
            st -= st * dt / _TEMP_DECAY_TAU_S
        ramp[i] = st
    temp = (_TEMP_LEVEL
            + _TEMP_WANDER * np.sin(2 * np.pi * tt / rng.uniform(2500, 4500)
                                    + rng.uniform(0, 2 * np.pi))
            + ramp + rng.normal(0.0, _TEMP_NOISE, nt))
    temp_vals, temp_miss = _inject_missing(rng, temp)

    # --- ACC (three axes at native rate) ---
    na = int(total_s * _ACC_RATE)
    ta = np.arange(na) / _ACC_RATE
    ax = rng.normal(0.0, _ACC_NOISE, na)
    ay = rng.normal(0.0, _ACC_NOISE, na)
    az = 1.0 + rng.normal(0.0, _ACC_NOISE, na)
    for start, dur, freq, amp, phase in walks:
        i0, i1 = int(start * _ACC_RATE), min(na, int((start + dur) * _ACC_RATE))
        seg = ta[i0:i1]
        ax[i0:i1] += amp * np.sin(2 * np.pi * freq * seg + phase)
        az[i0:i1] += 0.5 * amp * np.sin(4 * np.pi * freq * seg + phase)
    bma = burst_mask(na, _ACC_RATE)
    nb = int(bma.sum())
    ax[bma] += rng.normal(0.0, _BURST_ACC_G, nb)
    ay[bma] += rng.normal(0.0, _BURST_ACC_G, nb)
    az[bma] += rng.normal(0.0, _BURST_ACC_G, nb)

    def stream(kind, rate, values, missing=None):
        if missing is None:
            missing = np.zeros(values.size, dtype=bool)
        return RawStream(subject_id=subject_id, kind=kind, start_time=_BASE_TIME,
                         rate_hz=rate, samples=values, missing_mask=missing)

    streams = [
        stream(ChannelKind.EDA, _EDA_RATE, eda_vals, eda_miss),
        stream(ChannelKind.IBI, 1.0, ibi_vals),
        stream(ChannelKind.TEMP, _TEMP_RATE, temp_vals, temp_miss),
        stream(ChannelKind.ACC_X, _ACC_RATE, ax),
        stream(ChannelKind.ACC_Y, _ACC_RATE, ay),
        stream(ChannelKind.ACC_Z, _ACC_RATE, az),
    ]
    return streams, intervals


def generate_synthetic(cfg: SynthConfig):
    """Generate seeded wearable recordings plus labeled shift intervals.

    Output is a pure function of ``cfg``: the same config always yields
    byte-identical streams. Per-class interval durations match
    ``cfg.class_mix`` exactly within each shift.
    """
    if cfg.shifts_per_subject == 0 or cfg.n_subjects == 0:
        return [], []
    streams, intervals = [], []
    for s in range(cfg.n_subjects):
        st, iv = _generate_subject(cfg, s)
        streams += st
        intervals += iv
    return streams, intervals
