"""Classifier and protocol: solver optimality, fold bookkeeping, leakage."""

import math
from dataclasses import dataclass

import numpy as np
import pytest

from eegentropy.svc import (
    STAGE2_SEED_OFFSET,
    ConvergenceError,
    CvProtocol,
    EvalPlan,
    SingleClassError,
    Stage1Result,
    SvcError,
    SvcParams,
    default_svc_grid,
    derive_stage2_protocol,
    evaluate_two_stage,
    fit_svc,
    make_folds,
    run_cv,
    stage1_select_hyperparams,
    stage2_accuracy,
)

import oracles


@dataclass
class Matrix:
    values: np.ndarray
    labels: tuple
    groups: tuple


def blobs(n_per_class=20, d=3, gap=4.0, seed=0, segments_per_subject=1):
    """Two Gaussian clouds with subject bookkeeping."""
    rng = np.random.default_rng(seed)
    x = np.vstack([
        rng.normal(-gap / 2, 1.0, (n_per_class, d)),
        rng.normal(gap / 2, 1.0, (n_per_class, d)),
    ])
    labels = ("NC",) * n_per_class + ("PD",) * n_per_class
    groups = tuple(
        f"{lab.lower()}{i // segments_per_subject:03d}"
        for i, lab in enumerate(labels)
    )
    return Matrix(x, labels, groups)


def train_signs(labels):
    return np.where(np.asarray(labels) == "PD", 1.0, -1.0)


# ---------------------------------------------------------------------------
# solver optimality and KKT conditions


@pytest.mark.parametrize("c", [0.5, 1.0, 10.0, 100.0])
def test_dual_solution_matches_qp_reference(c):
    fm = blobs(15, d=4, gap=2.0, seed=1)
    params = SvcParams(c=c, gamma=0.25)
    model = fit_svc(fm.values, fm.labels, params)

    z = (fm.values - model.feature_mean) / model.feature_scale
    d2 = ((z[:, None, :] - z[None, :, :]) ** 2).sum(axis=2)
    kmat = np.exp(-params.gamma * d2)
    np.fill_diagonal(kmat, 1.0)
    y = train_signs(fm.labels)
    alpha_ref = oracles.svc_dual_qp(kmat, y, c)
    obj_ref = oracles.dual_objective(kmat, y, alpha_ref)

    alpha = np.zeros(len(y))
    # dual_coef rows are alpha*y over support rows, in original order
    sv_rows = [int(np.flatnonzero((z == sv).all(axis=1))[0]) for sv in model.support_vectors]
    alpha[sv_rows] = model.dual_coef * y[sv_rows]
    obj = oracles.dual_objective(kmat, y, alpha)
    # a tol-converged SMO objective sits within tol of the optimum
    assert obj <= obj_ref + 2.0 * params.tolerance


def test_kkt_invariants_hold_after_fit():
    fm = blobs(20, seed=2)
    params = SvcParams(c=10.0, gamma=0.1)
    model = fit_svc(fm.values, fm.labels, params)
    alpha_signed = model.dual_coef  # alpha*y, sign encodes the class
    assert np.all(np.abs(alpha_signed) <= params.c + 1e-9)
    assert np.all(np.abs(alpha_signed) > 0.0)  # only support rows stored
    assert abs(alpha_signed.sum()) <= 1e-6  # sum alpha*y = 0
    assert model.kkt_gap <= params.tolerance
    assert model.n_iter > 0


def test_separable_data_is_memorized():
    fm = blobs(20, gap=6.0, seed=3)
    model = fit_svc(fm.values, fm.labels, SvcParams(c=10.0, gamma=0.5))
    assert model.predict_labels(fm.values) == list(fm.labels)


def test_decision_function_sign_convention():
    fm = blobs(20, gap=6.0, seed=4)
    model = fit_svc(fm.values, fm.labels, SvcParams(c=10.0, gamma=0.5))
    scores = model.decision_function(fm.values)
    assert np.all(scores[:20] < 0.0)  # NC side
    assert np.all(scores[20:] > 0.0)  # PD side


def test_sign_labels_and_strings_are_interchangeable():
    fm = blobs(10, seed=5)
    a = fit_svc(fm.values, fm.labels, SvcParams())
    b = fit_svc(fm.values, train_signs(fm.labels), SvcParams())
    np.testing.assert_array_equal(a.dual_coef, b.dual_coef)
    assert a.bias == b.bias


def test_fit_rejects_bad_input():
    fm = blobs(10, seed=6)
    with pytest.raises(SingleClassError):
        fit_svc(fm.values[:10], fm.labels[:10], SvcParams())
    with pytest.raises(SvcError, match="non-finite"):
        bad = fm.values.copy()
        bad[0, 0] = np.inf
        fit_svc(bad, fm.labels, SvcParams())
    with pytest.raises(SvcError, match="unknown label"):
        fit_svc(fm.values, ["NC"] * 19 + ["XX"], SvcParams())
    with pytest.raises(SvcError, match="2-D"):
        fit_svc(fm.values[:, 0], fm.labels, SvcParams())
    with pytest.raises(SvcError, match="rows"):
        fit_svc(fm.values, fm.labels[:-1], SvcParams())


def test_convergence_error_carries_diagnostics():
    fm = blobs(20, gap=0.5, seed=7)
    with pytest.raises(ConvergenceError) as info:
        fit_svc(fm.values, fm.labels, SvcParams(max_passes=1))
    assert info.value.iterations == 1
    assert info.value.gap > 0.0


def test_params_validation():
    with pytest.raises(SvcError):
        SvcParams(c=0.0)
    with pytest.raises(SvcError):
        SvcParams(gamma=-1.0)
    with pytest.raises(SvcError):
        SvcParams(tolerance=0.0)


# ---------------------------------------------------------------------------
# standardization


def test_standardization_statistics_come_from_training_rows():
    fm = blobs(12, seed=8)
    model = fit_svc(fm.values, fm.labels, SvcParams())
    np.testing.assert_allclose(model.feature_mean, fm.values.mean(axis=0))
    np.testing.assert_allclose(model.feature_scale, fm.values.std(axis=0))


def test_zero_variance_feature_gets_unit_scale():
    fm = blobs(12, seed=9)
    x = np.hstack([fm.values, np.full((fm.values.shape[0], 1), 7.0)])
    model = fit_svc(x, fm.labels, SvcParams())
    assert model.feature_scale[-1] == 1.0
    base = fit_svc(fm.values, fm.labels, SvcParams())
    test = blobs(12, seed=10).values
    test_aug = np.hstack([test, np.full((test.shape[0], 1), 7.0)])
    np.testing.assert_allclose(
        model.decision_function(test_aug), base.decision_function(test)
    )


def test_predictions_are_invariant_to_feature_units():
    """Per-column affine changes are absorbed by in-fit z-scoring.

    A loose tolerance leaves the dual solution path-dependent, so the
    optimum is pinned tightly to make decision values comparable.
    """
    fm = blobs(15, d=4, seed=11)
    test = blobs(15, d=4, seed=12).values
    shift = np.array([5.0, -3.0, 100.0, 0.0])
    scale = np.array([0.01, 2.0, 30.0, 1.0])
    params = SvcParams(c=5.0, gamma=0.2, tolerance=1e-10)
    base = fit_svc(fm.values, fm.labels, params)
    moved = fit_svc(fm.values * scale + shift, fm.labels, params)
    np.testing.assert_allclose(
        moved.decision_function(test * scale + shift),
        base.decision_function(test),
        atol=1e-6,
    )


# ---------------------------------------------------------------------------
# fold construction


def test_folds_partition_every_repeat():
    fm = blobs(25, seed=13)
    protocol = CvProtocol(k=10, n_repeats=4, seed=3)
    plans = make_folds(fm.labels, fm.groups, protocol)
    assert len(plans) == 4
    for plan in plans:
        assert len(plan) == 10
        combined = np.concatenate(plan)
        assert np.array_equal(np.sort(combined), np.arange(50))


def test_folds_are_stratified_within_one():
    fm = blobs(25, seed=14)
    labels = np.asarray(fm.labels)
    protocol = CvProtocol(k=10, n_repeats=3, seed=4)
    for plan in make_folds(fm.labels, fm.groups, protocol):
        for fold in plan:
            counts = [(labels[fold] == cls).sum() for cls in ("NC", "PD")]
            assert abs(counts[0] - counts[1]) <= 1


def test_subject_grouping_keeps_subjects_whole():
    fm = blobs(20, seed=15, segments_per_subject=5)
    groups = np.asarray(fm.groups)
    protocol = CvProtocol(k=4, n_repeats=3, seed=5, grouping="subject")
    for plan in make_folds(fm.labels, fm.groups, protocol):
        seen = {}
        for fi, fold in enumerate(plan):
            for sid in set(groups[fold].tolist()):
                assert seen.setdefault(sid, fi) == fi


def test_fold_plans_depend_on_seed_and_repeat():
    fm = blobs(25, seed=16)
    p1 = make_folds(fm.labels, fm.groups, CvProtocol(k=10, n_repeats=2, seed=1))
    p1b = make_folds(fm.labels, fm.groups, CvProtocol(k=10, n_repeats=2, seed=1))
    p2 = make_folds(fm.labels, fm.groups, CvProtocol(k=10, n_repeats=2, seed=2))
    for a, b in zip(p1, p1b):
        for fa, fb in zip(a, b):
            np.testing.assert_array_equal(fa, fb)
    assert any(
        not np.array_equal(fa, fb) for fa, fb in zip(p1[0], p1[1])
    ), "repeats must reshuffle"
    assert any(
        not np.array_equal(fa, fb) for fa, fb in zip(p1[0], p2[0])
    ), "seeds must reshuffle"


def test_protocol_validation():
    with pytest.raises(SvcError):
        CvProtocol(k=1)
    with pytest.raises(SvcError):
        CvProtocol(n_repeats=0)
    with pytest.raises(SvcError):
        CvProtocol(grouping="site")


# ---------------------------------------------------------------------------
# repeated K-fold evaluation


def test_separable_blobs_reach_perfect_accuracy():
    fm = blobs(20, gap=8.0, seed=17)
    report = run_cv(fm, SvcParams(c=10.0, gamma=0.1), CvProtocol(k=10, n_repeats=3, seed=6))
    assert report.a_rkf == 1.0
    assert report.e_rkf == 0.0
    assert report.failed_folds == 0
    assert report.n_folds == 30
    assert report.valid


def test_label_permutation_sits_at_chance():
    fm = blobs(20, gap=8.0, seed=18)
    rng = np.random.default_rng(0)
    shuffled = Matrix(fm.values, tuple(rng.permutation(fm.labels)), fm.groups)
    report = run_cv(
        shuffled, SvcParams(c=1.0, gamma=0.1), CvProtocol(k=10, n_repeats=5, seed=7)
    )
    assert 0.40 <= report.a_rkf <= 0.60


def test_report_counts_failed_folds_as_nan():
    fm = blobs(4, gap=8.0, seed=19)  # 8 rows cannot fill 10 folds
    report = run_cv(fm, SvcParams(), CvProtocol(k=10, n_repeats=2, seed=8))
    assert report.n_folds == 20
    assert report.failed_folds == sum(math.isnan(a) for a in report.folds)
    assert report.failed_folds > 0
    assert not report.valid
    assert not math.isnan(report.a_rkf)


def test_report_serializes_to_plain_json_types():
    fm = blobs(10, seed=20)
    report = run_cv(fm, SvcParams(), CvProtocol(k=5, n_repeats=2, seed=9))
    d = report.to_json_dict()
    assert set(d) == {"a_rkf", "e_rkf", "std", "n_folds", "failed_folds", "params", "seed"}
    assert d["params"] == {"c": 1.0, "gamma": 0.1}
    assert d["n_folds"] == 10


# ---------------------------------------------------------------------------
# two-stage protocol


def test_stage1_picks_the_best_point_and_records_failures():
    fm = blobs(15, gap=6.0, seed=21)
    grid = (
        SvcParams(c=10.0, gamma=0.1),
        SvcParams(c=10.0, gamma=0.1, max_passes=1),  # cannot converge
    )
    result = stage1_select_hyperparams(fm, grid, CvProtocol(k=5, n_repeats=2, seed=10))
    assert result.best == grid[0]
    assert len(result.table) == 2
    assert math.isnan(result.table[1][1])
    assert len(result.failures) == 1
    assert "grid point 1" in result.failures[0]


def test_stage1_raises_when_everything_fails():
    fm = blobs(15, gap=1.0, seed=22)
    grid = (SvcParams(max_passes=1),)
    with pytest.raises(ConvergenceError, match="every grid point"):
        stage1_select_hyperparams(fm, grid, CvProtocol(k=5, n_repeats=1, seed=11))


def test_stage1_tie_break_is_first_in_grid_order():
    fm = blobs(20, gap=8.0, seed=23)  # easy: many points reach 1.0
    grid = (SvcParams(c=1.0, gamma=0.1), SvcParams(c=10.0, gamma=0.1))
    result = stage1_select_hyperparams(fm, grid, CvProtocol(k=5, n_repeats=2, seed=12))
    assert result.best == grid[0]


def test_stage2_uses_disjoint_partitions():
    tune = CvProtocol(k=10, n_repeats=10, seed=5)
    ev = derive_stage2_protocol(tune)
    assert ev.seed == 5 + STAGE2_SEED_OFFSET
    assert ev.n_repeats == 30
    assert ev.k == tune.k


def test_eval_plan_protocol_wiring():
    plan = EvalPlan(k=8, n_tune=4, n_eval=6, seed=9, grouping="subject")
    assert plan.tune_protocol() == CvProtocol(k=8, n_repeats=4, seed=9, grouping="subject")
    assert plan.eval_protocol().seed == 9 + STAGE2_SEED_OFFSET
    assert plan.eval_protocol().n_repeats == 6


def test_evaluate_two_stage_end_to_end():
    fm = blobs(15, gap=6.0, seed=24)
    plan = EvalPlan(
        k=5, n_tune=2, n_eval=3, seed=13,
        grid=(SvcParams(c=1.0, gamma=0.1), SvcParams(c=10.0, gamma=0.5)),
    )
    stage1, report = evaluate_two_stage(fm, plan)
    assert isinstance(stage1, Stage1Result)
    assert report.n_folds == 15
    assert report.seed == 13 + STAGE2_SEED_OFFSET
    assert report.params == stage1.best


def test_default_grid_dedupes_scale_aware_gamma():
    grid = default_svc_grid(1000)  # 1/d collides with 0.001
    assert len(grid) == 16
    grid = default_svc_grid(126)
    assert len(grid) == 20
    assert SvcParams(c=0.1, gamma=1.0 / 126) == grid[0]
