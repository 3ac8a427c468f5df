"""RBF soft-margin support vector classifier trained from first
principles, and the two-stage repeated stratified K-fold protocol.

The solver works on the dual problem via pairwise (SMO-style) updates of
the most violating pair until the KKT gap falls below tolerance.  Labels
are the strings "NC"/"PD" at the protocol level and -1/+1 internally
(PD maps to +1, so a positive decision value reads as PD).

Stage 1 tunes (C, gamma) by repeated stratified K-fold over a grid with
one shared fold plan; stage 2 re-evaluates the chosen point on fresh
partitions (a disjoint seed) and reports the mean accuracy a_rkf over
all K*N folds, with failed folds excluded from the mean but counted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .backend import kernels

LABEL_SIGNS = {"NC": -1, "PD": 1}
SIGN_LABELS = {-1: "NC", 1: "PD"}

# Stage-2 partitions must differ from stage-1; a fixed large offset keeps
# the derived seed disjoint and reproducible.
STAGE2_SEED_OFFSET = 100003


class SvcError(ValueError):
    """Training input violates the classifier contract."""


class SingleClassError(SvcError):
    """Training rows contain fewer than two classes."""


class ConvergenceError(RuntimeError):
    """The dual solver stopped before reaching tolerance."""

    def __init__(self, message: str, gap: float, iterations: int):
        super().__init__(message)
        self.gap = gap
        self.iterations = iterations


@dataclass(frozen=True)
class SvcParams:
    c: float = 1.0
    gamma: float = 0.1
    tolerance: float = 1e-3
    max_passes: int = 200_000

    def __post_init__(self):
        if self.c <= 0 or self.gamma <= 0:
            raise SvcError(f"C and gamma must be positive, got {self.c}, {self.gamma}")
        if self.tolerance <= 0:
            raise SvcError(f"tolerance must be positive, got {self.tolerance}")


@dataclass(frozen=True)
class SvcModel:
    """Fitted classifier: support rows, dual coefficients, bias, and the
    standardization statistics of the training fold."""

    support_vectors: np.ndarray  # (ns, d), standardized coordinates
    dual_coef: np.ndarray  # (ns,), alpha_i * y_i
    bias: float
    params: SvcParams
    feature_mean: np.ndarray  # (d,)
    feature_scale: np.ndarray  # (d,)
    kkt_gap: float
    n_iter: int

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.feature_mean.shape[0]:
            raise SvcError(
                f"expected {self.feature_mean.shape[0]} features, got {X.shape[1]}"
            )
        Xz = (X - self.feature_mean) / self.feature_scale
        k = _rbf_kernel(Xz, self.support_vectors, self.params.gamma)
        return k @ self.dual_coef + self.bias

    def predict_signs(self, X) -> np.ndarray:
        return np.where(self.decision_function(X) >= 0.0, 1, -1)

    def predict_labels(self, X) -> list[str]:
        return [SIGN_LABELS[int(s)] for s in self.predict_signs(X)]


def _rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = (
        (A * A).sum(axis=1)[:, None]
        + (B * B).sum(axis=1)[None, :]
        - 2.0 * (A @ B.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


def _signs(y) -> np.ndarray:
    out = np.empty(len(y), dtype=np.float64)
    for i, label in enumerate(y):
        if isinstance(label, str):
            if label not in LABEL_SIGNS:
                raise SvcError(f"unknown label {label!r}")
            out[i] = LABEL_SIGNS[label]
        elif label in (-1, 1):
            out[i] = label
        else:
            raise SvcError(f"labels must be 'NC'/'PD' or -1/+1, got {label!r}")
    return out


def fit_svc(X, y, params: SvcParams) -> SvcModel:
    """Train on rows X with labels y (strings or -1/+1 signs).

    Features are z-scored with statistics of these rows only;
    zero-variance columns get scale 1 so they contribute nothing.
    Raises SingleClassError for one-class input and ConvergenceError
    (carrying the iteration count) if the solver hits its cap.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise SvcError(f"X must be 2-D, got shape {X.shape}")
    if not np.isfinite(X).all():
        raise SvcError("X contains non-finite values")
    ys = _signs(y)
    if X.shape[0] != ys.shape[0]:
        raise SvcError(f"{X.shape[0]} rows but {ys.shape[0]} labels")
    counts = [(ys == s).sum() for s in (-1, 1)]
    if min(counts) == 0:
        raise SingleClassError("training rows contain a single class")

    mean = X.mean(axis=0)
    std = X.std(axis=0)
    scale = np.where(std > 0.0, std, 1.0)
    Xz = (X - mean) / scale

    kmat = _rbf_kernel(Xz, Xz, params.gamma)
    np.fill_diagonal(kmat, 1.0)
    alpha, bias, gap, n_iter, converged = kernels.smo_solve(
        kmat, ys, params.c, params.tolerance, params.max_passes
    )
    if not converged:
        raise ConvergenceError(
            f"solver stopped after {n_iter} iterations with KKT gap {gap:.3e}",
            gap=float(gap),
            iterations=int(n_iter),
        )
    alpha = np.clip(alpha, 0.0, params.c)
    sv = alpha > 0.0
    return SvcModel(
        support_vectors=Xz[sv].copy(),
        dual_coef=(alpha * ys)[sv].copy(),
        bias=float(bias),
        params=params,
        feature_mean=mean,
        feature_scale=scale,
        kkt_gap=float(gap),
        n_iter=int(n_iter),
    )


def predict(model: SvcModel, X) -> list[str]:
    """Class labels for rows of X under a fitted model."""
    return model.predict_labels(X)


@dataclass(frozen=True)
class CvProtocol:
    k: int = 10
    n_repeats: int = 10
    seed: int = 42
    stratified: bool = True
    grouping: str = "segment"  # or "subject"

    def __post_init__(self):
        if self.k < 2:
            raise SvcError(f"k must be >= 2, got {self.k}")
        if self.n_repeats < 1:
            raise SvcError(f"n_repeats must be >= 1, got {self.n_repeats}")
        if self.grouping not in ("segment", "subject"):
            raise SvcError(f"grouping must be 'segment' or 'subject', got {self.grouping!r}")


@dataclass(frozen=True)
class CvReport:
    """Stage-2 outcome over all K*N folds.

    folds holds one entry per fold in (repeat, fold) order, NaN where
    the fold failed; a_rkf and std summarize the non-failed entries.
    """

    a_rkf: float
    e_rkf: float
    std: float
    folds: tuple[float, ...]
    failed_folds: int
    params: SvcParams
    seed: int

    @property
    def n_folds(self) -> int:
        return len(self.folds)

    @property
    def valid(self) -> bool:
        return self.failed_folds <= 0.01 * len(self.folds)

    def to_json_dict(self) -> dict:
        return {
            "a_rkf": self.a_rkf,
            "e_rkf": self.e_rkf,
            "std": self.std,
            "n_folds": self.n_folds,
            "failed_folds": self.failed_folds,
            "params": {"c": self.params.c, "gamma": self.params.gamma},
            "seed": self.seed,
        }


def make_folds(labels, groups, protocol: CvProtocol) -> list[list[np.ndarray]]:
    """Validation-index folds per repeat.

    Stratified: each class is shuffled and split as evenly as possible,
    so per-fold class counts deviate from balance by at most one.  In
    subject grouping the dealt unit is the subject, so no subject spans
    folds of one repeat.
    """
    labels = np.asarray(labels)
    groups = np.asarray(groups)
    n = labels.shape[0]
    plans = []
    for rep in range(protocol.n_repeats):
        rng = np.random.default_rng((protocol.seed, rep))
        folds = [[] for _ in range(protocol.k)]
        if protocol.grouping == "subject":
            for cls in sorted(set(labels.tolist())):
                subjects = sorted(set(groups[labels == cls].tolist()))
                order = rng.permutation(len(subjects))
                for pos, si in enumerate(order):
                    rows = np.flatnonzero(groups == subjects[si])
                    folds[pos % protocol.k].append(rows)
        else:
            for cls in sorted(set(labels.tolist())):
                rows = np.flatnonzero(labels == cls)
                rows = rows[rng.permutation(rows.shape[0])]
                for f, chunk in enumerate(np.array_split(rows, protocol.k)):
                    folds[f].append(chunk)
        plan = []
        for parts in folds:
            idx = np.sort(np.concatenate(parts)) if parts else np.empty(0, dtype=np.int64)
            plan.append(idx)
        used = np.concatenate(plan)
        assert used.shape[0] == n and np.unique(used).shape[0] == n
        plans.append(plan)
    return plans


def _run_plan(X, signs, plans, params: SvcParams) -> tuple[list[float], int]:
    accs: list[float] = []
    failed = 0
    n = X.shape[0]
    all_rows = np.arange(n)
    for plan in plans:
        for val_idx in plan:
            if val_idx.shape[0] == 0:
                accs.append(math.nan)
                failed += 1
                continue
            train_idx = np.setdiff1d(all_rows, val_idx, assume_unique=False)
            try:
                model = fit_svc(X[train_idx], signs[train_idx], params)
            except (SingleClassError, ConvergenceError):
                accs.append(math.nan)
                failed += 1
                continue
            pred = model.predict_signs(X[val_idx])
            accs.append(float((pred == signs[val_idx]).mean()))
    return accs, failed


def run_cv(fm, params: SvcParams, protocol: CvProtocol) -> CvReport:
    """Repeated stratified K-fold accuracy of one parameter point.

    fm is any object with .values (n x d), .labels and .groups.
    """
    X = np.ascontiguousarray(fm.values, dtype=np.float64)
    signs = _signs(fm.labels)
    plans = make_folds(list(fm.labels), list(fm.groups), protocol)
    accs, failed = _run_plan(X, signs, plans, params)
    arr = np.asarray(accs)
    good = arr[~np.isnan(arr)]
    a = float(good.mean()) if good.size else math.nan
    s = float(good.std()) if good.size else math.nan
    return CvReport(
        a_rkf=a,
        e_rkf=1.0 - a,
        std=s,
        folds=tuple(accs),
        failed_folds=failed,
        params=params,
        seed=protocol.seed,
    )


def default_svc_grid(n_features: int) -> tuple[SvcParams, ...]:
    """C x gamma grid spanning the standard regimes, including the
    scale-aware 1/d default (features are z-scored before the kernel)."""
    gammas = [1.0 / n_features, 0.001, 0.01, 0.1, 1.0]
    seen = []
    for g in gammas:
        if g not in seen:
            seen.append(g)
    return tuple(
        SvcParams(c=c, gamma=g) for c in (0.1, 1.0, 10.0, 100.0) for g in seen
    )


@dataclass(frozen=True)
class Stage1Result:
    best: SvcParams
    accuracy: float
    table: tuple[tuple[SvcParams, float], ...]  # NaN accuracy = failed point
    failures: tuple[str, ...]


def stage1_select_hyperparams(fm, grid, protocol: CvProtocol) -> Stage1Result:
    """Mean validation accuracy per grid point over one shared fold
    plan; returns the argmax (ties: first in grid order).

    A grid point that fails on any fold is excluded and recorded.
    """
    grid = tuple(grid)
    if not grid:
        raise SvcError("hyperparameter grid is empty")
    X = np.ascontiguousarray(fm.values, dtype=np.float64)
    signs = _signs(fm.labels)
    plans = make_folds(list(fm.labels), list(fm.groups), protocol)
    table = []
    failures = []
    best_idx, best_acc = None, -math.inf
    for idx, params in enumerate(grid):
        accs, failed = _run_plan(X, signs, plans, params)
        if failed:
            table.append((params, math.nan))
            failures.append(
                f"grid point {idx} (C={params.c}, gamma={params.gamma}): "
                f"{failed} failed folds"
            )
            continue
        acc = float(np.mean(accs))
        table.append((params, acc))
        if acc > best_acc:
            best_idx, best_acc = idx, acc
    if best_idx is None:
        raise ConvergenceError("every grid point failed during tuning", math.nan, 0)
    return Stage1Result(
        best=grid[best_idx],
        accuracy=best_acc,
        table=tuple(table),
        failures=tuple(failures),
    )


def stage2_accuracy(fm, params: SvcParams, protocol: CvProtocol) -> CvReport:
    """Final evaluation on fresh partitions (protocol seed should be
    disjoint from the tuning seed; see derive_stage2_protocol)."""
    return run_cv(fm, params, protocol)


def derive_stage2_protocol(stage1: CvProtocol, n_repeats: int = 30) -> CvProtocol:
    return CvProtocol(
        k=stage1.k,
        n_repeats=n_repeats,
        seed=stage1.seed + STAGE2_SEED_OFFSET,
        stratified=stage1.stratified,
        grouping=stage1.grouping,
    )


@dataclass(frozen=True)
class EvalPlan:
    """Shorthand for the full two-stage protocol at a chosen scale."""

    k: int = 10
    n_tune: int = 10
    n_eval: int = 30
    seed: int = 42
    grouping: str = "segment"
    grid: tuple[SvcParams, ...] | None = None

    def tune_protocol(self) -> CvProtocol:
        return CvProtocol(k=self.k, n_repeats=self.n_tune, seed=self.seed, grouping=self.grouping)

    def eval_protocol(self) -> CvProtocol:
        return derive_stage2_protocol(self.tune_protocol(), self.n_eval)


def evaluate_two_stage(fm, plan: EvalPlan) -> tuple[Stage1Result, CvReport]:
    """Tune (C, gamma) then evaluate the chosen point on new partitions."""
    grid = plan.grid if plan.grid is not None else default_svc_grid(fm.values.shape[1])
    stage1 = stage1_select_hyperparams(fm, grid, plan.tune_protocol())
    report = stage2_accuracy(fm, stage1.best, plan.eval_protocol())
    return stage1, report
