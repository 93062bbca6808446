"""Five-stage signal pipeline: artifact handling, imputation, 4 Hz
resampling, per-subject z-scoring, and 5-minute/50%-overlap segmentation.

Stage order is fixed: artifact -> impute/median -> resample -> z-score ->
segment. Imputation runs before resampling because spline fitting over
long gaps is ill-conditioned; resampling needs gap-free knots.
"""

from __future__ import annotations

import json
import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.ndimage import median_filter

from .data import ChannelKind, LabeledInterval, RawStream, StressLabel
from .errors import (DataFormatError, InsufficientDataError, RejectionError,
                     UsageError)

log = logging.getLogger(__name__)

EPOCH_FORMAT_VERSION = "wearstress-epochs-v1"

TARGET_HZ = 4.0

# Channels carried into epochs on the uniform 4 Hz grid. ACC stays at its
# native rate (4 Hz resampling would cap Nyquist below the motion band).
UNIFORM_KINDS = (ChannelKind.EDA, ChannelKind.HR, ChannelKind.TEMP)


@dataclass
class UniformStream:
    """A channel resampled onto the uniform 4 Hz grid.

    ``quality_mask`` is True where the value is trusted (a spline knot was
    within 2 s).
    """

    subject_id: str
    kind: ChannelKind
    start_time: float
    samples: np.ndarray
    quality_mask: np.ndarray
    rate_hz: float = TARGET_HZ

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.quality_mask = np.asarray(self.quality_mask, dtype=bool)
        if self.rate_hz != TARGET_HZ:
            raise DataFormatError(f"uniform streams are fixed at {TARGET_HZ} Hz")
        if self.quality_mask.shape != self.samples.shape:
            raise DataFormatError("quality mask length != sample length")


@dataclass
class Epoch:
    """One 5-minute analysis window of aligned channels.

    ``channels`` maps EDA/HR/TEMP to 1200-sample z-scored arrays.
    ``native_acc`` is the raw-rate ACC magnitude covering [t0, t0+300 s),
    ``ibi_ms`` the inter-beat intervals whose ending beat falls in the
    window. ``scale`` keeps the per-subject z-score (mean, std) per channel
    so features that need physical units (temperature gradient) can undo
    the normalization.
    """

    subject_id: str
    shift_id: int
    t0: float
    channels: dict
    native_acc: np.ndarray
    acc_rate_hz: float
    ibi_ms: np.ndarray
    label: StressLabel
    scale: dict = field(default_factory=dict)


@dataclass
class PreprocessParams:
    artifact_threshold_g: float = 0.3
    median_window_s: float = 5.0
    target_hz: float = TARGET_HZ
    epoch_s: float = 300.0
    overlap: float = 0.5
    max_missing_frac: float = 0.02
    kalman_q: float = 1e-2
    kalman_r: float = 1e-1
    artifact_mode: str = "median"

    def __post_init__(self):
        if not (0.0 <= self.overlap < 1.0):
            raise UsageError(f"overlap must be in [0,1), got {self.overlap}")
        if self.artifact_threshold_g <= 0 or self.median_window_s <= 0 or self.epoch_s <= 0:
            raise UsageError("thresholds and window lengths must be positive")
        if self.artifact_mode not in ("median", "mask"):
            raise UsageError(f"artifact_mode must be 'median' or 'mask', got {self.artifact_mode!r}")

    @property
    def epoch_len(self) -> int:
        return int(round(self.epoch_s * self.target_hz))

    @property
    def epoch_step(self) -> int:
        return int(round(self.epoch_len * (1.0 - self.overlap)))

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "artifact_threshold_g", "median_window_s", "target_hz", "epoch_s",
            "overlap", "max_missing_frac", "kalman_q", "kalman_r", "artifact_mode")}


@dataclass
class ArtifactMask:
    """Boolean motion-artifact flags on the accelerometer time grid."""

    flagged: np.ndarray
    start_time: float
    rate_hz: float


# ---------------------------------------------------------------------------
# stage 1: motion artifacts


def artifact_mask(acc_x: RawStream, acc_y: RawStream, acc_z: RawStream,
                  threshold_g: float = 0.3, median_window_s: float = 5.0) -> ArtifactMask:
    """Flag samples whose summed per-axis deviation from a rolling-median
    gravity baseline exceeds ``threshold_g``.

    The raw magnitude sum would sit near 1 g at rest, so the threshold is
    applied to deviations from the local baseline instead.
    """
    axes = (acc_x, acc_y, acc_z)
    n = acc_x.samples.size
    for a in axes[1:]:
        if a.samples.size != n or a.start_time != acc_x.start_time or a.rate_hz != acc_x.rate_hz:
            raise DataFormatError("accelerometer axes do not share a time grid")
    window = max(3, int(round(median_window_s * acc_x.rate_hz)) | 1)
    dev = np.zeros(n)
    for a in axes:
        baseline = median_filter(a.samples, size=window, mode="nearest")
        dev += np.abs(a.samples - baseline)
    return ArtifactMask(flagged=dev > threshold_g, start_time=acc_x.start_time,
                        rate_hz=acc_x.rate_hz)


def apply_artifact_mask(stream: RawStream, mask: ArtifactMask, mode: str = "median") -> RawStream:
    """Clean flagged spans of ``stream``.

    The mask is mapped onto the stream's grid by nearest-neighbor in time.
    mode="median" replaces flagged samples with a centered 21-sample median;
    mode="mask" marks them missing for later imputation.
    """
    if mode not in ("median", "mask"):
        raise UsageError(f"unknown artifact mode {mode!r}")
    t = stream.timestamps()
    idx = np.clip(np.round((t - mask.start_time) * mask.rate_hz).astype(np.int64),
                  0, mask.flagged.size - 1)
    flagged = mask.flagged[idx]
    if not flagged.any():
        return replace(stream, samples=stream.samples.copy(),
                       missing_mask=stream.missing_mask.copy())

    values = stream.samples.copy()
    missing = stream.missing_mask.copy()
    if mode == "mask":
        values[flagged] = np.nan
        missing |= flagged
    else:
        half = 10  # 21-sample centered window
        src = stream.samples
        for i in np.flatnonzero(flagged):
            lo, hi = max(0, i - half), min(src.size, i + half + 1)
            window = src[lo:hi]
            window = window[~np.isnan(window)]
            if window.size:
                values[i] = np.median(window)
    return replace(stream, samples=values, missing_mask=missing)


# ---------------------------------------------------------------------------
# stage 5 (applied before resampling): Kalman imputation


def kalman_impute(stream: RawStream, q: float = 1e-2, r: float = 1e-1,
                  max_missing_frac: float = 0.02) -> RawStream:
    """Fill missing samples with a constant-velocity RTS smoother.

    Observed samples are kept verbatim; only missing positions receive the
    smoothed estimate. Streams with more than ``max_missing_frac`` missing
    are rejected so the caller can drop the affected epochs.
    """
    missing = stream.missing_mask
    frac = float(missing.mean())
    if frac > max_missing_frac:
        raise RejectionError(
            f"stream {stream.subject_id}/{stream.kind.value}: {frac:.2%} missing "
            f"exceeds the {max_missing_frac:.2%} imputation limit")
    if not missing.any():
        return replace(stream, samples=stream.samples.copy(),
                       missing_mask=missing.copy())

    y = stream.samples
    n = y.size
    F = np.array([[1.0, 1.0], [0.0, 1.0]])
    # discrete white-noise acceleration, unit step
    Q = q * np.array([[1.0 / 3.0, 0.5], [0.5, 1.0]])
    H = np.array([1.0, 0.0])

    first = int(np.flatnonzero(~missing)[0])
    m = np.array([y[first], 0.0])
    P = np.diag([1e6, 1e6])

    m_pred = np.zeros((n, 2))
    P_pred = np.zeros((n, 2, 2))
    m_filt = np.zeros((n, 2))
    P_filt = np.zeros((n, 2, 2))
    for i in range(n):
        if i > 0:
            m = F @ m
            P = F @ P @ F.T + Q
        m_pred[i], P_pred[i] = m, P
        if not missing[i]:
            s = H @ P @ H + r
            k = (P @ H) / s
            m = m + k * (y[i] - H @ m)
            P = P - np.outer(k, H @ P)
        m_filt[i], P_filt[i] = m, P

    ms = m_filt[-1].copy()
    out = y.copy()
    if missing[-1]:
        out[-1] = ms[0]
    for i in range(n - 2, -1, -1):
        c = P_filt[i] @ F.T @ np.linalg.inv(P_pred[i + 1])
        ms = m_filt[i] + c @ (ms - m_pred[i + 1])
        if missing[i]:
            out[i] = ms[0]
    return replace(stream, samples=out, missing_mask=np.zeros(n, dtype=bool))


# ---------------------------------------------------------------------------
# stage 2: resampling


def _spline_on_grid(knot_t, knot_v, grid):
    """Not-a-knot cubic spline evaluated on ``grid`` without extrapolation."""
    spline = CubicSpline(knot_t, knot_v, bc_type="not-a-knot")
    values = spline(np.clip(grid, knot_t[0], knot_t[-1]))
    pos = np.searchsorted(knot_t, grid)
    left = knot_t[np.clip(pos - 1, 0, knot_t.size - 1)]
    right = knot_t[np.clip(pos, 0, knot_t.size - 1)]
    dist = np.minimum(np.abs(grid - left), np.abs(right - grid))
    return values, dist <= 2.0


def resample_to_4hz(stream: RawStream) -> UniformStream:
    """Resample a uniform-rate stream onto the 4 Hz grid.

    Missing samples are excluded from the spline knots; grid points whose
    nearest knot is more than 2 s away are marked untrusted.
    """
    if stream.kind is ChannelKind.IBI:
        raise UsageError("IBI is an event series; derive HR via hr_from_ibi")
    t = stream.timestamps()
    keep = ~stream.missing_mask
    knot_t, knot_v = t[keep], stream.samples[keep]
    if knot_t.size < 4:
        raise InsufficientDataError(
            f"stream {stream.subject_id}/{stream.kind.value}: "
            f"{knot_t.size} usable samples, need >= 4 for spline resampling")
    duration = t[-1] - t[0]
    n_out = int(np.floor(duration * TARGET_HZ + 1e-9)) + 1
    grid = t[0] + np.arange(n_out) / TARGET_HZ
    values, quality = _spline_on_grid(knot_t, knot_v, grid)
    return UniformStream(subject_id=stream.subject_id, kind=stream.kind,
                         start_time=float(grid[0]), samples=values, quality_mask=quality)


def hr_from_ibi(ibi: RawStream) -> UniformStream:
    """Instantaneous heart rate (60000/IBI) splined onto the 4 Hz grid."""
    if ibi.kind is not ChannelKind.IBI:
        raise UsageError(f"expected IBI stream, got {ibi.kind.value}")
    if ibi.missing_mask.any():
        raise DataFormatError(
            f"IBI stream for {ibi.subject_id} has missing values; beat times "
            "cannot be reconstructed")
    beats = ibi.timestamps()
    if beats.size < 4:
        raise InsufficientDataError(
            f"IBI stream for {ibi.subject_id}: {beats.size} beats, need >= 4")
    hr = 60000.0 / ibi.samples
    duration = beats[-1] - ibi.start_time
    n_out = int(np.floor(duration * TARGET_HZ + 1e-9)) + 1
    grid = ibi.start_time + np.arange(n_out) / TARGET_HZ
    values, quality = _spline_on_grid(beats, hr, grid)
    return UniformStream(subject_id=ibi.subject_id, kind=ChannelKind.HR,
                         start_time=float(grid[0]), samples=values, quality_mask=quality)


# ---------------------------------------------------------------------------
# stage 3: normalization


def zscore_per_subject(streams):
    """Z-score each (subject, kind) group over all of that group's samples.

    Returns the transformed streams plus ``{(subject, kind): (mean, std)}``
    so physical units can be recovered downstream. Near-constant groups
    (std < 1e-12) map to all zeros.
    """
    groups = {}
    for s in streams:
        groups.setdefault((s.subject_id, s.kind), []).append(s)
    stats = {}
    out = []
    for key, members in groups.items():
        allv = np.concatenate([m.samples for m in members])
        mu = float(np.mean(allv))
        sigma = float(np.std(allv))
        stats[key] = (mu, sigma)
        for m in members:
            if sigma < 1e-12:
                z = np.zeros_like(m.samples)
            else:
                z = (m.samples - mu) / sigma
            out.append(replace(m, samples=z, quality_mask=m.quality_mask.copy()))
    order = {id(s): i for i, s in enumerate(streams)}
    out.sort(key=lambda s: min(order[id(m)] for m in groups[(s.subject_id, s.kind)]))
    return out, stats


# ---------------------------------------------------------------------------
# stage 4: segmentation


def segment(channels, ibi, native_acc, intervals, params: PreprocessParams = None,
            scale=None):
    """Cut aligned channels into labeled epochs.

    ``channels`` maps ChannelKind to UniformStream (all 4 Hz, same phase),
    ``ibi`` is the raw IBI event stream, ``native_acc`` a tuple of
    (magnitude, start_time, rate_hz). Epochs with no overlapping interval,
    epochs straddling a shift boundary, and epochs with too many untrusted
    samples are dropped. The label is the class with the greatest summed
    time overlap; ties go to the class whose interval starts earlier.
    """
    params = params or PreprocessParams()
    if not channels:
        return []
    hz = params.target_hz
    L = params.epoch_len
    S = params.epoch_step

    starts = [s.start_time for s in channels.values()]
    ends = [s.start_time + (s.samples.size - 1) / hz for s in channels.values()]
    t_lo, t_hi = max(starts), min(ends)
    if t_hi - t_lo <= 0:
        return []
    offsets = {}
    for kind, s in channels.items():
        k = (t_lo - s.start_time) * hz
        if abs(k - round(k)) > 1e-6:
            raise DataFormatError(
                f"channel {kind.value} grid is out of phase with the common window")
        offsets[kind] = int(round(k))
    n = int(np.floor((t_hi - t_lo) * hz + 1e-9)) + 1
    if n < L:
        return []

    subject = next(iter(channels.values())).subject_id
    my_intervals = [iv for iv in intervals if iv.subject_id == subject]
    beats = ibi.timestamps() if ibi is not None else None

    epochs = []
    for k in range((n - L) // S + 1):
        i0 = k * S
        t0 = t_lo + i0 / hz
        t1 = t0 + params.epoch_s

        overlaps = [(iv, iv.overlap_s(t0, t1)) for iv in my_intervals]
        overlaps = [(iv, ov) for iv, ov in overlaps if ov > 1e-9]
        if not overlaps:
            continue
        shift_ids = {iv.shift_id for iv, _ in overlaps}
        if len(shift_ids) > 1:
            continue  # straddles a shift boundary; keep the temporal split clean

        per_class = {}
        for iv, ov in overlaps:
            tot, first = per_class.get(iv.label, (0.0, np.inf))
            per_class[iv.label] = (tot + ov, min(first, iv.t_start))
        label = max(per_class.items(), key=lambda kv: (kv[1][0], -kv[1][1]))[0]

        chans = {}
        ok = True
        for kind, s in channels.items():
            a = offsets[kind] + i0
            window = s.samples[a:a + L]
            qual = s.quality_mask[a:a + L]
            if window.size != L or (1.0 - qual.mean()) > params.max_missing_frac:
                ok = False
                break
            chans[kind] = window.copy()
        if not ok:
            continue

        if native_acc is not None:
            mag, acc_start, acc_rate = native_acc
            j0 = int(np.ceil((t0 - acc_start) * acc_rate - 1e-9))
            m = int(round(params.epoch_s * acc_rate))
            if j0 < 0 or j0 + m > mag.size:
                continue
            acc_seg = mag[j0:j0 + m].copy()
        else:
            acc_seg, acc_rate = np.empty(0), 0.0

        if beats is not None:
            sel = (beats >= t0) & (beats < t1)
            ibi_seg = ibi.samples[sel].copy()
        else:
            ibi_seg = np.empty(0)

        epochs.append(Epoch(subject_id=subject, shift_id=next(iter(shift_ids)),
                            t0=t0, channels=chans, native_acc=acc_seg,
                            acc_rate_hz=acc_rate, ibi_ms=ibi_seg, label=label,
                            scale=dict(scale or {})))
    return epochs


# ---------------------------------------------------------------------------
# full pipeline driver


_REQUIRED_KINDS = {ChannelKind.EDA, ChannelKind.IBI, ChannelKind.TEMP,
                   ChannelKind.ACC_X, ChannelKind.ACC_Y, ChannelKind.ACC_Z}


def _preprocess_subject(subject, streams, intervals, params):
    by_kind = {s.kind: s for s in streams}
    missing_kinds = _REQUIRED_KINDS - set(by_kind)
    if missing_kinds:
        log.warning("subject %s: missing channels %s, skipped", subject,
                    sorted(k.value for k in missing_kinds))
        return []

    mask = artifact_mask(by_kind[ChannelKind.ACC_X], by_kind[ChannelKind.ACC_Y],
                         by_kind[ChannelKind.ACC_Z],
                         threshold_g=params.artifact_threshold_g,
                         median_window_s=params.median_window_s)

    cleaned = {}
    for kind in (ChannelKind.EDA, ChannelKind.TEMP):
        s = apply_artifact_mask(by_kind[kind], mask, mode=params.artifact_mode)
        if s.missing_mask.any():
            try:
                s = kalman_impute(s, q=params.kalman_q, r=params.kalman_r,
                                  max_missing_frac=params.max_missing_frac)
            except RejectionError as exc:
                log.warning("%s; subject %s dropped", exc, subject)
                return []
        cleaned[kind] = s

    uniform = [resample_to_4hz(cleaned[ChannelKind.EDA]),
               hr_from_ibi(by_kind[ChannelKind.IBI]),
               resample_to_4hz(cleaned[ChannelKind.TEMP])]
    zstreams, stats = zscore_per_subject(uniform)
    channels = {s.kind: s for s in zstreams}
    scale = {kind: stats[(subject, kind)] for kind in channels}

    acc = by_kind[ChannelKind.ACC_X]
    mag = np.sqrt(by_kind[ChannelKind.ACC_X].samples ** 2
                  + by_kind[ChannelKind.ACC_Y].samples ** 2
                  + by_kind[ChannelKind.ACC_Z].samples ** 2)
    native_acc = (mag, acc.start_time, acc.rate_hz)

    return segment(channels, by_kind[ChannelKind.IBI], native_acc, intervals,
                   params, scale=scale)


def preprocess_streams(streams, intervals, params: PreprocessParams = None,
                       threads: int = 1):
    """Run the full pipeline and return epochs sorted by (subject, t0)."""
    params = params or PreprocessParams()
    by_subject = {}
    for s in streams:
        by_subject.setdefault(s.subject_id, []).append(s)
    subjects = sorted(by_subject)

    def work(subject):
        return _preprocess_subject(subject, by_subject[subject], intervals, params)

    if threads > 1 and len(subjects) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, subjects))
    else:
        results = [work(s) for s in subjects]
    epochs = [e for group in results for e in group]
    epochs.sort(key=lambda e: (e.subject_id, e.t0))
    return epochs


# ---------------------------------------------------------------------------
# epoch container (length-prefixed binary records + JSON sidecar)


def save_epochs(epochs, path, params: PreprocessParams = None) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(b"WSEPOCHS")
        fh.write(struct.pack("<I", len(epochs)))
        for e in epochs:
            head = {
                "subject_id": e.subject_id,
                "shift_id": e.shift_id,
                "t0": e.t0,
                "label": e.label.short,
                "acc_rate_hz": e.acc_rate_hz,
                "scale": {k.value: list(v) for k, v in sorted(
                    e.scale.items(), key=lambda kv: kv[0].value)},
                "channels": [k.value for k in sorted(e.channels, key=lambda k: k.value)],
                "n_channel": 0 if not e.channels else
                             next(iter(e.channels.values())).size,
                "n_acc": int(e.native_acc.size),
                "n_ibi": int(e.ibi_ms.size),
            }
            blob = json.dumps(head, sort_keys=True).encode()
            arrays = [e.channels[k] for k in sorted(e.channels, key=lambda k: k.value)]
            arrays += [e.native_acc, e.ibi_ms]
            payload = blob + b"\x00" + b"".join(
                np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
            fh.write(struct.pack("<I", len(payload)))
            fh.write(payload)
    sidecar = {
        "format": EPOCH_FORMAT_VERSION,
        "count": len(epochs),
        "params": (params or PreprocessParams()).to_dict(),
    }
    Path(str(path) + ".json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def load_epochs(path):
    """Read an epoch container; returns (epochs, sidecar dict)."""
    path = Path(path)
    sidecar_path = Path(str(path) + ".json")
    if not path.exists():
        raise UsageError(f"missing epoch container: {path}")
    if not sidecar_path.exists():
        raise DataFormatError(f"missing epoch sidecar: {sidecar_path}")
    sidecar = json.loads(sidecar_path.read_text())
    if sidecar.get("format") != EPOCH_FORMAT_VERSION:
        raise DataFormatError(
            f"{sidecar_path}: format {sidecar.get('format')!r}, "
            f"expected {EPOCH_FORMAT_VERSION!r}")

    epochs = []
    with open(path, "rb") as fh:
        if fh.read(8) != b"WSEPOCHS":
            raise DataFormatError(f"{path}: bad magic")
        (count,) = struct.unpack("<I", fh.read(4))
        for _ in range(count):
            (ln,) = struct.unpack("<I", fh.read(4))
            payload = fh.read(ln)
            sep = payload.index(b"\x00")
            head = json.loads(payload[:sep].decode())
            raw = payload[sep + 1:]
            nch = head["n_channel"]
            kinds = [ChannelKind(k) for k in head["channels"]]
            off = 0
            channels = {}
            for kind in kinds:
                channels[kind] = np.frombuffer(raw, dtype="<f8", count=nch,
                                               offset=off).copy()
                off += nch * 8
            acc = np.frombuffer(raw, dtype="<f8", count=head["n_acc"], offset=off).copy()
            off += head["n_acc"] * 8
            ibi = np.frombuffer(raw, dtype="<f8", count=head["n_ibi"], offset=off).copy()
            epochs.append(Epoch(
                subject_id=head["subject_id"], shift_id=head["shift_id"],
                t0=head["t0"], channels=channels, native_acc=acc,
                acc_rate_hz=head["acc_rate_hz"], ibi_ms=ibi,
                label=StressLabel.from_name(head["label"]),
                scale={ChannelKind(k): tuple(v) for k, v in head["scale"].items()}))
    if len(epochs) != sidecar.get("count"):
        raise DataFormatError(f"{path}: record count mismatch with sidecar")
    return epochs, sidecar
