"""Feature-matrix assembly over (channel x variant) grids and the
hyperparameter sweeps over entropy grids.

A feature is keyed by (channel, variant, entropy config); the full grid
for one config is 14 channels x 9 variants = 126 columns.  Matrix rows
are segments sorted by (subject_id, segment_index).  Undefined entropy
values (e.g. a zero match count) are substituted with the column's
maximum finite value; the substitution locations are recorded on the
matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from . import svc
from .entropy import EntropyConfig, EntropyError
from .ingest import CHANNELS, Segment
from .wavelet import VARIANTS, make_variants


class FeatureBuildError(ValueError):
    """The requested matrix cannot be built from the given segments."""


@dataclass(frozen=True)
class FeatureKey:
    channel: str
    variant: str
    entropy: EntropyConfig

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise FeatureBuildError(f"unknown channel {self.channel!r}")
        if self.variant not in VARIANTS:
            raise FeatureBuildError(f"unknown variant {self.variant!r}")

    def label(self) -> str:
        return f"{self.channel}|{self.variant}|{self.entropy.label()}"

    @classmethod
    def parse(cls, text: str) -> "FeatureKey":
        parts = text.split("|")
        if len(parts) != 3:
            raise FeatureBuildError(f"cannot parse feature key {text!r}")
        return cls(parts[0], parts[1], EntropyConfig.parse(parts[2]))


def full_grid(config: EntropyConfig) -> tuple[FeatureKey, ...]:
    """All channel x variant keys for one entropy config, channel-major."""
    return tuple(
        FeatureKey(ch, v, config) for ch in CHANNELS for v in VARIANTS
    )


@dataclass(frozen=True)
class FeatureMatrix:
    keys: tuple[FeatureKey, ...]
    values: np.ndarray  # (n_rows, n_keys) float64, finite
    labels: tuple[str, ...]
    groups: tuple[str, ...]  # subject_id per row
    segment_indices: tuple[int, ...]
    substitutions: tuple[tuple[int, int], ...] = ()  # (row, col) pairs

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def column(self, key: FeatureKey) -> np.ndarray:
        return self.values[:, self.keys.index(key)]

    def select(self, keys) -> "FeatureMatrix":
        """Column-subset matrix preserving row identity."""
        keys = tuple(keys)
        idx = [self.keys.index(k) for k in keys]
        subs = tuple(
            (r, idx.index(c)) for r, c in self.substitutions if c in idx
        )
        return FeatureMatrix(
            keys=keys,
            values=self.values[:, idx].copy(),
            labels=self.labels,
            groups=self.groups,
            segment_indices=self.segment_indices,
            substitutions=subs,
        )

    def to_csv(self, path) -> None:
        frame = pd.DataFrame(self.values, columns=[k.label() for k in self.keys])
        frame.insert(0, "label", list(self.labels))
        frame.insert(0, "subject_id", list(self.groups))
        frame.to_csv(path, index=False)


def read_feature_csv(path) -> FeatureMatrix:
    """Inverse of FeatureMatrix.to_csv.

    Segment indices are re-derived as each row's rank within its
    subject (rows of one subject are contiguous in a written matrix).
    """
    try:
        # the exact strtod parser keeps write/read lossless
        frame = pd.read_csv(path, float_precision="round_trip")
    except FileNotFoundError:
        raise FeatureBuildError(f"feature file {path} does not exist") from None
    if list(frame.columns[:2]) != ["subject_id", "label"]:
        raise FeatureBuildError(
            f"{path}: expected leading columns subject_id,label, got {list(frame.columns[:2])}"
        )
    keys = tuple(FeatureKey.parse(c) for c in frame.columns[2:])
    groups = tuple(str(s) for s in frame["subject_id"])
    labels = tuple(str(s) for s in frame["label"])
    seg_idx = []
    counter: dict[str, int] = {}
    for sid in groups:
        seg_idx.append(counter.get(sid, 0))
        counter[sid] = seg_idx[-1] + 1
    values = frame.iloc[:, 2:].to_numpy(dtype=np.float64)
    if not np.isfinite(values).all():
        raise FeatureBuildError(f"{path}: matrix contains non-finite values")
    return FeatureMatrix(
        keys=keys,
        values=values,
        labels=labels,
        groups=groups,
        segment_indices=tuple(seg_idx),
    )


class VariantCache:
    """Memoizes wavelet variants per (subject, segment, channel).

    One instance can back many matrix builds over the same segments, so
    a sweep pays the transform cost once per channel rather than once
    per entropy config.
    """

    def __init__(self):
        self._store: dict[tuple[str, int, str], dict[str, np.ndarray]] = {}

    def variants(self, seg: Segment, channel: str) -> dict[str, np.ndarray]:
        key = (seg.subject_id, seg.segment_index, channel)
        got = self._store.get(key)
        if got is None:
            got = make_variants(seg.data[CHANNELS.index(channel)])
            self._store[key] = got
        return got


def _sorted_rows(segments: list[Segment]) -> list[Segment]:
    if not segments:
        raise FeatureBuildError("no segments to build from")
    rows = sorted(segments, key=lambda s: (s.subject_id, s.segment_index))
    seen = set()
    length = rows[0].length_samples
    by_subject: dict[str, str] = {}
    for seg in rows:
        ident = (seg.subject_id, seg.segment_index)
        if ident in seen:
            raise FeatureBuildError(f"duplicate segment identity {ident}")
        seen.add(ident)
        if seg.length_samples != length:
            raise FeatureBuildError(
                f"segment {ident} has length {seg.length_samples}, expected {length}"
            )
        prev = by_subject.setdefault(seg.subject_id, seg.label)
        if prev != seg.label:
            raise FeatureBuildError(
                f"subject {seg.subject_id!r} carries two labels ({prev}, {seg.label})"
            )
    return rows


def build_feature_matrix(
    segments: list[Segment],
    keys,
    cache: VariantCache | None = None,
    reuse_variants: bool = True,
) -> FeatureMatrix:
    """Entropy of the variant series per (segment row, feature key).

    Variants are computed once per (segment, channel) and shared across
    keys unless reuse_variants is False (a slow path kept for checking
    cache coherence).  Entropy errors become NaN and are then replaced
    by the column maximum; a column with no finite value at all raises.
    """
    keys = tuple(keys)
    if not keys:
        raise FeatureBuildError("no feature keys given")
    rows = _sorted_rows(segments)
    values = np.empty((len(rows), len(keys)))
    if cache is None:
        cache = VariantCache()
    for i, seg in enumerate(rows):
        for j, key in enumerate(keys):
            if reuse_variants:
                series = cache.variants(seg, key.channel)[key.variant]
            else:
                series = make_variants(seg.data[CHANNELS.index(key.channel)])[key.variant]
            try:
                values[i, j] = key.entropy.compute(series)
            except EntropyError:
                values[i, j] = np.nan
    subs = []
    for j in range(len(keys)):
        col = values[:, j]
        bad = np.isnan(col)
        if bad.any():
            finite = col[~bad]
            if finite.size == 0:
                raise FeatureBuildError(
                    f"feature {keys[j].label()} is undefined on every segment"
                )
            col[bad] = finite.max()
            subs.extend((int(r), j) for r in np.flatnonzero(bad))
    return FeatureMatrix(
        keys=keys,
        values=values,
        labels=tuple(s.label for s in rows),
        groups=tuple(s.subject_id for s in rows),
        segment_indices=tuple(s.segment_index for s in rows),
        substitutions=tuple(subs),
    )


@dataclass(frozen=True)
class SweepPoint:
    config: EntropyConfig
    a_rkf: float
    std: float
    params: svc.SvcParams
    seed: int
    n_folds: int


@dataclass(frozen=True)
class SweepReport:
    method: str
    points: tuple[SweepPoint, ...]
    failures: tuple[tuple[str, str], ...]  # (config label, error)

    @property
    def best(self) -> SweepPoint:
        if not self.points:
            raise FeatureBuildError("sweep produced no successful points")
        best = self.points[0]
        for p in self.points[1:]:
            if p.a_rkf > best.a_rkf:
                best = p
        return best

    def to_json_list(self) -> list[dict]:
        return [
            {
                "params": _config_params(p.config),
                "a_rkf": p.a_rkf,
                "stddev": p.std,
            }
            for p in self.points
        ]


def _config_params(config: EntropyConfig) -> dict:
    out: dict = {"method": config.method}
    for name in ("m", "r", "r2", "k_sectors"):
        value = getattr(config, name)
        if value is not None:
            out[name] = value
    return out


def sweep_hyperparameters(
    segments: list[Segment],
    method: str,
    grid,
    plan: svc.EvalPlan,
) -> SweepReport:
    """Two-stage accuracy of the full 126-feature matrix per grid point.

    A failing point is recorded and skipped, never aborting the sweep.
    """
    grid = tuple(grid)
    for config in grid:
        if config.method != method:
            raise FeatureBuildError(
                f"grid point {config.label()} does not belong to method {method}"
            )
    cache = VariantCache()
    points = []
    failures = []
    for config in grid:
        try:
            fm = build_feature_matrix(segments, full_grid(config), cache=cache)
            stage1, report = svc.evaluate_two_stage(fm, plan)
        except (FeatureBuildError, svc.SvcError, svc.ConvergenceError, EntropyError) as exc:
            failures.append((config.label(), str(exc)))
            continue
        points.append(
            SweepPoint(
                config=config,
                a_rkf=report.a_rkf,
                std=report.std,
                params=stage1.best,
                seed=report.seed,
                n_folds=report.n_folds,
            )
        )
    return SweepReport(method=method, points=tuple(points), failures=tuple(failures))
