"""Result-generating studies: per-variant/channel/feature accuracy
tables, greedy forward selection, the segment-length study, the timing
benchmark, the per-class feature histogram and the monitoring verdict.

Accuracy studies share one output shape (StudyTable) whose rows carry
the protocol seed and enough parameters to reproduce each cell.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
import pandas as pd

from . import svc
from .backend import available_backends, load_kernels
from .entropy import EntropyConfig, default_config
from .features import (
    FeatureKey,
    FeatureMatrix,
    VariantCache,
    build_feature_matrix,
    full_grid,
)
from .ingest import (
    CHANNELS,
    SEGMENTS_PER_RECORD,
    FilterSpec,
    SurrogateSpec,
    generate_surrogate,
    preprocess,
)
from .wavelet import VARIANTS, make_variants


class StudyError(ValueError):
    """A study was asked for something its inputs cannot support."""


@dataclass(frozen=True)
class StudyCell:
    axis: str
    a_rkf: float
    e_rkf: float
    std: float
    n_folds: int
    seed: int
    params: svc.SvcParams


@dataclass(frozen=True)
class StudyTable:
    axis_name: str
    cells: tuple[StudyCell, ...]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "axis": [c.axis for c in self.cells],
                "a_rkf": [c.a_rkf for c in self.cells],
                "e_rkf": [c.e_rkf for c in self.cells],
                "std": [c.std for c in self.cells],
                "n_folds": [c.n_folds for c in self.cells],
                "seed": [c.seed for c in self.cells],
            }
        )

    def cell(self, axis: str) -> StudyCell:
        for c in self.cells:
            if c.axis == axis:
                return c
        raise KeyError(axis)


def _evaluate_cell(
    axis: str,
    fm: FeatureMatrix,
    plan: svc.EvalPlan,
    retune: bool,
    params: svc.SvcParams | None,
) -> StudyCell:
    if retune:
        _, report = svc.evaluate_two_stage(fm, plan)
        chosen = report.params
    else:
        if params is None:
            raise StudyError("retune=False requires explicit SvcParams")
        report = svc.stage2_accuracy(fm, params, plan.eval_protocol())
        chosen = params
    return StudyCell(
        axis=axis,
        a_rkf=report.a_rkf,
        e_rkf=report.e_rkf,
        std=report.std,
        n_folds=report.n_folds,
        seed=report.seed,
        params=chosen,
    )


def per_variant_study(
    segments,
    entropy_config: EntropyConfig,
    plan: svc.EvalPlan,
    retune: bool = True,
    params: svc.SvcParams | None = None,
    cache: VariantCache | None = None,
) -> StudyTable:
    """Nine cells; cell v evaluates the 14-channel matrix of variant v."""
    cache = cache or VariantCache()
    cells = []
    for variant in VARIANTS:
        keys = [FeatureKey(ch, variant, entropy_config) for ch in CHANNELS]
        fm = build_feature_matrix(segments, keys, cache=cache)
        cells.append(_evaluate_cell(variant, fm, plan, retune, params))
    return StudyTable(axis_name="variant", cells=tuple(cells))


def per_channel_study(
    segments,
    entropy_config: EntropyConfig,
    plan: svc.EvalPlan,
    retune: bool = True,
    params: svc.SvcParams | None = None,
    cache: VariantCache | None = None,
) -> StudyTable:
    """Fourteen cells; cell c evaluates the 9-variant matrix of channel c."""
    cache = cache or VariantCache()
    cells = []
    for channel in CHANNELS:
        keys = [FeatureKey(channel, v, entropy_config) for v in VARIANTS]
        fm = build_feature_matrix(segments, keys, cache=cache)
        cells.append(_evaluate_cell(channel, fm, plan, retune, params))
    return StudyTable(axis_name="channel", cells=tuple(cells))


def per_feature_study(
    segments,
    entropy_config: EntropyConfig,
    plan: svc.EvalPlan,
    top_n: int = 126,
    retune: bool = True,
    params: svc.SvcParams | None = None,
    cache: VariantCache | None = None,
) -> StudyTable:
    """Every (channel, variant) cell scored on its own, ranked by a_rkf
    (ties keep grid order), truncated to the top_n best rows."""
    keys = full_grid(entropy_config)
    if not 1 <= top_n <= len(keys):
        raise StudyError(f"top_n={top_n} outside [1, {len(keys)}]")
    cache = cache or VariantCache()
    fm_all = build_feature_matrix(segments, keys, cache=cache)
    cells = []
    for key in keys:
        sub = fm_all.select([key])
        axis = f"{key.channel}|{key.variant}"
        cells.append(_evaluate_cell(axis, sub, plan, retune, params))
    order = sorted(range(len(cells)), key=lambda i: (-cells[i].a_rkf, i))
    ranked = tuple(cells[i] for i in order[:top_n])
    return StudyTable(axis_name="cell", cells=ranked)


@dataclass(frozen=True)
class SelectionTrace:
    chosen: tuple[FeatureKey, ...]
    a_rkf: tuple[float, ...]  # accuracy after each addition
    std: tuple[float, ...]
    best_so_far: tuple[float, ...]
    n_folds: int
    stopping_reason: str  # "budget" or "plateau"
    params: svc.SvcParams
    seed: int


def greedy_forward_select(
    fm: FeatureMatrix,
    plan: svc.EvalPlan,
    budget: int,
    plateau_eps: float = 0.001,
    params: svc.SvcParams | None = None,
) -> SelectionTrace:
    """Grow a feature set one argmax step at a time.

    Each step scores every remaining key appended to the current set
    via the stage-2 protocol and keeps the best (ties: first in key
    order).  Stops at the budget or after 3 consecutive steps whose
    improvement over the running best falls below plateau_eps.
    SvcParams are tuned once on the full matrix unless given.
    """
    if not 1 <= budget <= len(fm.keys):
        raise StudyError(f"budget={budget} outside [1, {len(fm.keys)}]")
    if params is None:
        grid = plan.grid if plan.grid is not None else svc.default_svc_grid(len(fm.keys))
        params = svc.stage1_select_hyperparams(fm, grid, plan.tune_protocol()).best
    protocol = plan.eval_protocol()
    chosen: list[FeatureKey] = []
    trace_acc: list[float] = []
    trace_std: list[float] = []
    best_so_far: list[float] = []
    remaining = list(fm.keys)
    streak = 0
    reason = "budget"
    n_folds = protocol.k * protocol.n_repeats
    while len(chosen) < budget:
        reports = []
        for cand in remaining:
            sub = fm.select(chosen + [cand])
            reports.append(svc.stage2_accuracy(sub, params, protocol))
        pick = int(np.argmax([r.a_rkf for r in reports]))
        acc = reports[pick].a_rkf
        prev_best = best_so_far[-1] if best_so_far else -math.inf
        chosen.append(remaining.pop(pick))
        trace_acc.append(acc)
        trace_std.append(reports[pick].std)
        best_so_far.append(max(prev_best, acc))
        if acc - prev_best < plateau_eps:
            streak += 1
            if streak >= 3:
                reason = "plateau"
                break
        else:
            streak = 0
    return SelectionTrace(
        chosen=tuple(chosen),
        a_rkf=tuple(trace_acc),
        std=tuple(trace_std),
        best_so_far=tuple(best_so_far),
        n_folds=n_folds,
        stopping_reason=reason,
        params=params,
        seed=protocol.seed,
    )


def segment_length_study(
    records,
    lengths,
    entropy_config: EntropyConfig,
    selected_keys,
    plan: svc.EvalPlan,
    filter_spec: FilterSpec = FilterSpec(),
    n_segments: int = SEGMENTS_PER_RECORD,
    retune: bool = True,
    params: svc.SvcParams | None = None,
) -> StudyTable:
    """Accuracy of the full grid and a selected subset at each length.

    Records are re-filtered, re-segmented and re-screened per length;
    axis values read "<L>|full126" / "<L>|selected<k>".
    """
    lengths = list(lengths)
    if not lengths or not all(150 <= l <= 1000 for l in lengths):
        raise StudyError(f"lengths {lengths} outside [150, 1000]")
    selected_keys = tuple(selected_keys)
    cells = []
    for length in lengths:
        segments, _ = preprocess(records, filter_spec, length, n_segments)
        cache = VariantCache()
        fm_full = build_feature_matrix(segments, full_grid(entropy_config), cache=cache)
        cells.append(
            _evaluate_cell(
                f"{length}|full{len(fm_full.keys)}", fm_full, plan, retune, params
            )
        )
        fm_sel = fm_full.select(selected_keys)
        cells.append(
            _evaluate_cell(
                f"{length}|selected{len(selected_keys)}", fm_sel, plan, retune, params
            )
        )
    return StudyTable(axis_name="length", cells=tuple(cells))


@dataclass(frozen=True)
class TimingRow:
    l_eeg: int
    n_features: int
    t_comp_median_s: float
    t_comp_var_s2: float
    t_dwt_median_s: float
    n_reps: int


@dataclass(frozen=True)
class TimingReport:
    rows: tuple[TimingRow, ...]
    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "l_eeg": [r.l_eeg for r in self.rows],
                "n_features": [r.n_features for r in self.rows],
                "t_comp_median_s": [r.t_comp_median_s for r in self.rows],
                "t_comp_var_s2": [r.t_comp_var_s2 for r in self.rows],
                "t_dwt_median_s": [r.t_dwt_median_s for r in self.rows],
                "n_reps": [r.n_reps for r in self.rows],
            }
        )


def timing_benchmark(
    lengths,
    feature_counts,
    repetitions: int = 5,
    entropy_config: EntropyConfig | None = None,
    seed: int = 42,
) -> TimingReport:
    """Wall-clock cost of processing one segment, per (length, n_features).

    The timed span covers entropy-feature computation plus one model
    prediction; the wavelet transform of the segment is timed separately
    (t_dwt) as context.  Each cell reports the median and variance over
    `repetitions` runs after one discarded warm-up, single-threaded.
    """
    if repetitions < 5:
        raise StudyError(f"repetitions must be >= 5, got {repetitions}")
    lengths = list(lengths)
    feature_counts = list(feature_counts)
    config = entropy_config or default_config("FuzzyEn")
    record = generate_surrogate(
        SurrogateSpec(n_subjects_per_class=2, seed=seed, n_samples=5120)
    )[0]
    rng = np.random.default_rng(seed)
    rows = []
    for length in lengths:
        data = record.data[:, :length]
        for count in feature_counts:
            keys = full_grid(config)[:count]
            # The trained model only shapes prediction cost; synthetic
            # training features keep benchmark setup cheap.
            train_x = rng.standard_normal((40, count))
            train_y = ["PD" if i % 2 else "NC" for i in range(40)]
            model = svc.fit_svc(train_x, train_y, svc.SvcParams(c=1.0, gamma=0.1))
            needed = sorted({k.channel for k in keys})
            t_comp, t_dwt = [], []
            for rep in range(repetitions + 1):
                t0 = time.perf_counter()
                variants = {
                    ch: make_variants(data[CHANNELS.index(ch)]) for ch in needed
                }
                t1 = time.perf_counter()
                feats = np.array(
                    [k.entropy.compute(variants[k.channel][k.variant]) for k in keys]
                )
                model.predict_labels(feats[None, :])
                t2 = time.perf_counter()
                if rep == 0:
                    continue  # warm-up discarded
                t_dwt.append(t1 - t0)
                t_comp.append(t2 - t1)
            rows.append(
                TimingRow(
                    l_eeg=int(length),
                    n_features=int(count),
                    t_comp_median_s=float(np.median(t_comp)),
                    t_comp_var_s2=float(np.var(t_comp)),
                    t_dwt_median_s=float(np.median(t_dwt)),
                    n_reps=repetitions,
                )
            )
    return TimingReport(rows=tuple(rows))


@dataclass(frozen=True)
class HistogramTable:
    key: FeatureKey
    bin_edges: np.ndarray  # n_bins + 1 edges shared by both classes
    count_nc: np.ndarray
    count_pd: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "bin_lo": self.bin_edges[:-1],
                "bin_hi": self.bin_edges[1:],
                "count_nc": self.count_nc,
                "count_pd": self.count_pd,
            }
        )


def entropy_histogram(segments, key: FeatureKey, n_bins: int) -> HistogramTable:
    """Aligned per-class histograms of one feature over the pooled range."""
    if n_bins < 5:
        raise StudyError(f"n_bins must be >= 5, got {n_bins}")
    fm = build_feature_matrix(segments, [key])
    values = fm.values[:, 0]
    labels = np.asarray(fm.labels)
    if not (labels == "NC").any() or not (labels == "PD").any():
        raise StudyError("histogram requires observations from both classes")
    edges = np.linspace(values.min(), values.max(), n_bins + 1)
    count_nc, _ = np.histogram(values[labels == "NC"], bins=edges)
    count_pd, _ = np.histogram(values[labels == "PD"], bins=edges)
    return HistogramTable(
        key=key, bin_edges=edges, count_nc=count_nc, count_pd=count_pd
    )


def default_deadband(control_values) -> float:
    """Dead-band for monitor_trend: 1% of the control interquartile range."""
    control_values = np.asarray(control_values, dtype=np.float64)
    if control_values.size < 4:
        raise StudyError("need at least 4 control values to set a dead-band")
    q1, q3 = np.percentile(control_values, [25, 75])
    return 0.01 * float(q3 - q1)


def monitor_trend(history, window: int, eps: float) -> str:
    """Verdict from the least-squares slope of the trailing window.

    The dead-band is closed: |slope| <= eps reads as stable; a larger
    positive slope (entropy rising) as deteriorating, negative as
    improving.
    """
    history = np.asarray(history, dtype=np.float64)
    if window < 3:
        raise StudyError(f"window must be >= 3, got {window}")
    if history.size < window:
        raise StudyError(
            f"history of {history.size} values is shorter than window {window}"
        )
    if eps < 0:
        raise StudyError(f"eps must be >= 0, got {eps}")
    tail = history[-window:]
    slope = float(np.polyfit(np.arange(window), tail, 1)[0])
    if abs(slope) <= eps:
        return "stable"
    return "deteriorating" if slope > 0 else "improving"


def backend_benchmark(repetitions: int = 5, seed: int = 42) -> pd.DataFrame:
    """Median kernel runtimes per backend on fixed seeded inputs."""
    if repetitions < 3:
        raise StudyError(f"repetitions must be >= 3, got {repetitions}")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(1000)
    v = np.ascontiguousarray(
        np.lib.stride_tricks.sliding_window_view(x, 3).copy()
    )
    norms = np.sqrt((v * v).sum(axis=1))
    n = 180
    pts = rng.standard_normal((n, 5))
    y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    pts[y > 0] += 1.0
    sq = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    kmat = np.exp(-0.1 * sq)
    jobs = {
        "sampen_counts": lambda k: k.sampen_counts(x, 2, 0.2 * x.std()),
        "fuzzen_phis": lambda k: k.fuzzen_phis(x, 1, 0.15 * x.std(), 5.0),
        "cosien_count": lambda k: k.cosien_count(v, norms, 0.1),
        "smo_solve": lambda k: k.smo_solve(kmat, y, 1.0, 1e-3, 100000),
    }
    rows = []
    for backend in available_backends():
        kern = load_kernels(backend)
        for name, job in jobs.items():
            times = []
            for rep in range(repetitions + 1):
                t0 = time.perf_counter()
                job(kern)
                t1 = time.perf_counter()
                if rep > 0:
                    times.append(t1 - t0)
            rows.append(
                {
                    "kernel": name,
                    "backend": backend,
                    "median_s": float(np.median(times)),
                    "n_reps": repetitions,
                }
            )
    return pd.DataFrame(rows)
