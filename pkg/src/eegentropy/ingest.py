"""Dataset loading, validation, filtering, screening and segmentation,
plus a seeded surrogate generator standing in for private clinical data.

A dataset is a JSON manifest naming one CSV per record; a record holds 14
fixed channels sampled at 128 Hz in microvolts.  The processing order is
fixed: band-pass filter the whole record, cut non-overlapping segments,
then screen each segment against the amplitude limit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.signal import butter, lfilter

CHANNELS = (
    "AF3", "F7", "F3", "FC5", "T7", "P7", "O1",
    "O2", "P8", "T8", "FC6", "F4", "F8", "AF4",
)
SAMPLE_RATE_HZ = 128.0
SEGMENTS_PER_RECORD = 5
SEGMENT_LENGTH = 1000
MIN_RECORD_SAMPLES = SEGMENTS_PER_RECORD * SEGMENT_LENGTH
ARTIFACT_LIMIT_UV = 85.0
LABELS = ("NC", "PD")
STAGES = ("I", "II", "III")

# Channels receiving the stronger surrogate class effect.
EFFECT_CHANNELS = ("F8", "P8", "T8", "FC6")


class ValidationError(ValueError):
    """A record or dataset violates its declared structure."""


class LoadError(ValidationError):
    """A manifest or record file cannot be read as a dataset."""


class FilterDesignError(ValueError):
    """The requested band-pass design is infeasible or unstable."""


@dataclass(frozen=True)
class FilterSpec:
    """Band-pass design parameters; mode picks causal or zero-phase use."""

    order: int = 5
    low_hz: float = 0.5
    high_hz: float = 32.0
    mode: str = "zero-phase"  # or "single-pass"

    def __post_init__(self):
        if self.mode not in ("zero-phase", "single-pass"):
            raise FilterDesignError(f"unknown filter mode {self.mode!r}")
        if self.order < 1:
            raise FilterDesignError(f"order must be >= 1, got {self.order}")


@dataclass(frozen=True)
class EegRecord:
    """One subject's multichannel series with its class label."""

    subject_id: str
    label: str
    data: np.ndarray  # (14, n) float64, µV
    stage: str | None = None
    sample_rate_hz: float = SAMPLE_RATE_HZ

    def validate(self) -> "EegRecord":
        name = self.subject_id
        if self.label not in LABELS:
            raise ValidationError(
                f"record {name!r}: label {self.label!r} not in {LABELS}"
            )
        if self.stage is not None and self.stage not in STAGES:
            raise ValidationError(
                f"record {name!r}: stage {self.stage!r} not in {STAGES}"
            )
        if self.sample_rate_hz != SAMPLE_RATE_HZ:
            raise ValidationError(
                f"record {name!r}: sample rate {self.sample_rate_hz} != {SAMPLE_RATE_HZ}"
            )
        if self.data.ndim != 2 or self.data.shape[0] != len(CHANNELS):
            raise ValidationError(
                f"record {name!r}: expected {len(CHANNELS)} channel rows, "
                f"got shape {self.data.shape}"
            )
        if self.data.shape[1] < MIN_RECORD_SAMPLES:
            raise ValidationError(
                f"record {name!r}: {self.data.shape[1]} samples, "
                f"need at least {MIN_RECORD_SAMPLES}"
            )
        finite = np.isfinite(self.data).all(axis=1)
        if not finite.all():
            bad = CHANNELS[int(np.flatnonzero(~finite)[0])]
            raise ValidationError(
                f"record {name!r}: non-finite sample on channel {bad}"
            )
        return self

    def channel(self, name: str) -> np.ndarray:
        return self.data[CHANNELS.index(name)]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class Segment:
    """One contiguous window of a record; the unit of observation."""

    subject_id: str
    label: str
    segment_index: int
    data: np.ndarray  # (14, L) float64, µV

    def channel(self, name: str) -> np.ndarray:
        return self.data[CHANNELS.index(name)]

    @property
    def length_samples(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class ArtifactVerdict:
    """Outcome of amplitude screening; location of the first offense.

    "First" means earliest sample index, ties broken by montage order.
    """

    clean: bool
    channel: str | None = None
    sample_index: int | None = None
    value: float | None = None


@dataclass(frozen=True)
class SurrogateSpec:
    """Knobs of the synthetic dataset generator.

    class_effect scales the extra low-band (0.5-8 Hz) irregularity given
    to PD-class records, concentrated on the right-hemisphere channels
    (F8, P8, T8, FC6); noise_floor sets the broadband component all
    channels share.  Everything is drawn deterministically from seed.
    """

    n_subjects_per_class: int = 20
    seed: int = 42
    n_samples: int = 5120
    class_effect: float = 1.0
    noise_floor: float = 2.0

    def __post_init__(self):
        if self.n_subjects_per_class < 2:
            raise ValidationError("n_subjects_per_class must be >= 2")
        if self.n_samples < MIN_RECORD_SAMPLES:
            raise ValidationError(
                f"n_samples must be >= {MIN_RECORD_SAMPLES}, got {self.n_samples}"
            )
        if self.class_effect < 0 or self.noise_floor < 0:
            raise ValidationError("class_effect and noise_floor must be >= 0")


@lru_cache(maxsize=32)
def design_bandpass(order: int, low_hz: float, high_hz: float, fs: float):
    """Butterworth band-pass (b, a) polynomials with a stability check."""
    if not 0.0 < low_hz < high_hz < fs / 2.0:
        raise FilterDesignError(
            f"band ({low_hz}, {high_hz}) Hz infeasible at fs={fs} Hz"
        )
    b, a = butter(order, [low_hz, high_hz], btype="bandpass", fs=fs)
    poles = np.roots(a)
    if np.abs(poles).max() >= 1.0:
        raise FilterDesignError(
            f"unstable design: pole magnitude {np.abs(poles).max():.6f} >= 1"
        )
    return b, a


def bandpass_filter(x, fs: float = SAMPLE_RATE_HZ, spec: FilterSpec = FilterSpec()) -> np.ndarray:
    """Apply the band-pass to one series; output length equals input.

    Edges are handled by whole-point reflection of one settling length
    (3 times the filter memory, capped by the series length) before
    filtering and cropping.  zero-phase mode runs the filter forward
    and backward; single-pass runs it once, causally.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValidationError(f"expected a 1-D series, got shape {x.shape}")
    if x.shape[0] < 3 * spec.order:
        raise ValidationError(
            f"series of length {x.shape[0]} is shorter than 3x filter order"
        )
    b, a = design_bandpass(spec.order, spec.low_hz, spec.high_hz, fs)
    pad = min(3 * (max(len(a), len(b)) - 1), x.shape[0] - 1)
    xe = np.concatenate([x[pad:0:-1], x, x[-2 : -pad - 2 : -1]])
    y = lfilter(b, a, xe)
    if spec.mode == "zero-phase":
        y = lfilter(b, a, y[::-1])[::-1]
    return y[pad : pad + x.shape[0]]


def filter_record(rec: EegRecord, spec: FilterSpec = FilterSpec()) -> EegRecord:
    """Band-pass every channel of a record."""
    filtered = np.vstack(
        [bandpass_filter(row, rec.sample_rate_hz, spec) for row in rec.data]
    )
    return replace(rec, data=filtered)


def reject_artifacts(seg: Segment, threshold_uv: float = ARTIFACT_LIMIT_UV) -> ArtifactVerdict:
    """Screen one segment; rejected iff any |sample| strictly exceeds
    the threshold.  Samples at exactly the threshold pass."""
    if threshold_uv <= 0:
        raise ValidationError(f"threshold_uv must be positive, got {threshold_uv}")
    over = np.abs(seg.data) > threshold_uv
    if not over.any():
        return ArtifactVerdict(clean=True)
    sample_idx, ch_idx = np.argwhere(over.T)[0]
    return ArtifactVerdict(
        clean=False,
        channel=CHANNELS[int(ch_idx)],
        sample_index=int(sample_idx),
        value=float(seg.data[ch_idx, sample_idx]),
    )


def segment_record(
    rec: EegRecord,
    length: int = SEGMENT_LENGTH,
    n_segments: int = SEGMENTS_PER_RECORD,
) -> list[Segment]:
    """Cut the first n_segments contiguous windows of the given length."""
    if not 150 <= length <= 1000:
        raise ValidationError(f"segment length {length} outside [150, 1000]")
    if n_segments < 1:
        raise ValidationError(f"n_segments must be >= 1, got {n_segments}")
    need = length * n_segments
    if rec.n_samples < need:
        raise ValidationError(
            f"record {rec.subject_id!r}: need {need} samples "
            f"for {n_segments} segments of {length}, have {rec.n_samples}"
        )
    return [
        Segment(
            subject_id=rec.subject_id,
            label=rec.label,
            segment_index=k,
            data=rec.data[:, k * length : (k + 1) * length].copy(),
        )
        for k in range(n_segments)
    ]


def preprocess(
    records: list[EegRecord],
    spec: FilterSpec = FilterSpec(),
    length: int = SEGMENT_LENGTH,
    n_segments: int = SEGMENTS_PER_RECORD,
    threshold_uv: float = ARTIFACT_LIMIT_UV,
) -> tuple[list[Segment], list[tuple[Segment, ArtifactVerdict]]]:
    """Filter whole records, segment, then screen.

    Returns (clean segments, rejected (segment, verdict) pairs).
    """
    kept: list[Segment] = []
    dropped: list[tuple[Segment, ArtifactVerdict]] = []
    for rec in records:
        for seg in segment_record(filter_record(rec, spec), length, n_segments):
            verdict = reject_artifacts(seg, threshold_uv)
            if verdict.clean:
                kept.append(seg)
            else:
                dropped.append((seg, verdict))
    return kept, dropped


def _band_noise(rng: np.random.Generator, n: int, fs: float, lo: float, hi: float) -> np.ndarray:
    """Unit-std Gaussian noise restricted to [lo, hi] Hz."""
    spectrum = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    spectrum[(freqs < lo) | (freqs > hi)] = 0.0
    y = np.fft.irfft(spectrum, n)
    return y / y.std()


# Baseline rhythm amplitudes (µV std) shared by both classes.
_RHYTHMS = (
    (0.5, 4.0, 7.0),   # delta
    (4.0, 8.0, 2.5),   # theta
    (8.0, 13.0, 9.0),  # alpha
    (13.0, 30.0, 4.0), # beta
)
_EFFECT_BAND = (0.5, 8.0)
_EFFECT_AMPLITUDE = 6.0
_EFFECT_OFF_TARGET = 0.35
_SOFT_LIMIT_UV = 80.0


def generate_surrogate(spec: SurrogateSpec) -> list[EegRecord]:
    """Balanced synthetic dataset with a recoverable class effect.

    Each channel is a sum of band-limited noise components (the four
    EEG rhythms plus a broadband floor).  PD-class records receive an
    extra flat 0.5-8 Hz component, strongest on F8/P8/T8/FC6, which
    raises low-band irregularity without changing the amplitude budget
    much.  A soft limiter keeps every sample strictly inside the
    artifact threshold.  All draws come from one seeded generator in a
    fixed order, so output is bit-reproducible.
    """
    rng = np.random.default_rng(spec.seed)
    fs = SAMPLE_RATE_HZ
    n = spec.n_samples
    records = []
    for label, count in (("NC", spec.n_subjects_per_class), ("PD", spec.n_subjects_per_class)):
        for i in range(count):
            sid = f"{label.lower()}{i + 1:02d}"
            jitter = rng.uniform(0.85, 1.15, size=len(_RHYTHMS))
            rows = []
            for ch in CHANNELS:
                x = np.zeros(n)
                for (lo, hi, amp), j in zip(_RHYTHMS, jitter):
                    x += amp * j * _band_noise(rng, n, fs, lo, hi)
                x += spec.noise_floor * _band_noise(rng, n, fs, 0.5, 45.0)
                if label == "PD":
                    weight = 1.0 if ch in EFFECT_CHANNELS else _EFFECT_OFF_TARGET
                    x += (
                        spec.class_effect
                        * _EFFECT_AMPLITUDE
                        * weight
                        * _band_noise(rng, n, fs, *_EFFECT_BAND)
                    )
                rows.append(_SOFT_LIMIT_UV * np.tanh(x / _SOFT_LIMIT_UV))
            stage = STAGES[i % len(STAGES)] if label == "PD" else None
            records.append(
                EegRecord(
                    subject_id=sid,
                    label=label,
                    data=np.vstack(rows),
                    stage=stage,
                ).validate()
            )
    return records


def write_dataset(records: list[EegRecord], out_dir) -> Path:
    """Write records as per-record CSVs plus a manifest; returns its path.

    Floats are serialized with repr, so a write-read round trip is
    lossless.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for rec in records:
        rec.validate()
        csv_name = f"{rec.subject_id}.csv"
        frame = pd.DataFrame(rec.data.T, columns=list(CHANNELS))
        frame.to_csv(out / csv_name, index=False)
        entries.append(
            {
                "subject_id": rec.subject_id,
                "label": rec.label,
                "stage": rec.stage,
                "csv": csv_name,
            }
        )
    manifest = {"sample_rate_hz": SAMPLE_RATE_HZ, "records": entries}
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def load_dataset(manifest_path) -> list[EegRecord]:
    """Read and validate a dataset; errors name the offending record."""
    path = Path(manifest_path)
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise LoadError(f"manifest {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise LoadError(f"manifest {path} is not valid JSON: {exc}") from None
    if not isinstance(manifest, dict) or "records" not in manifest:
        raise LoadError(f"manifest {path} lacks a 'records' list")
    fs = manifest.get("sample_rate_hz", SAMPLE_RATE_HZ)
    records = []
    for entry in manifest["records"]:
        sid = entry.get("subject_id", "<unnamed>")
        csv = entry.get("csv")
        if not csv:
            raise LoadError(f"record {sid!r}: no csv path in manifest")
        csv_path = path.parent / csv
        try:
            # the exact strtod parser keeps write/read lossless
            frame = pd.read_csv(csv_path, float_precision="round_trip")
        except FileNotFoundError:
            raise LoadError(f"record {sid!r}: file {csv_path} does not exist") from None
        got = tuple(frame.columns)
        if got != CHANNELS:
            missing = [c for c in CHANNELS if c not in got]
            extra = [c for c in got if c not in CHANNELS]
            if missing:
                raise LoadError(f"record {sid!r}: missing channel {missing[0]}")
            if extra:
                raise LoadError(f"record {sid!r}: unexpected channel {extra[0]}")
            raise LoadError(
                f"record {sid!r}: channel order {got} does not match the montage"
            )
        data = frame.to_numpy(dtype=np.float64).T
        record = EegRecord(
            subject_id=str(entry["subject_id"]),
            label=entry.get("label", ""),
            data=np.ascontiguousarray(data),
            stage=entry.get("stage"),
            sample_rate_hz=float(fs),
        )
        try:
            record.validate()
        except ValidationError as exc:
            raise LoadError(str(exc)) from None
        records.append(record)
    return records
