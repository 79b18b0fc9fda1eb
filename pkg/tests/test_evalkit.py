"""Cross-validation splits, accuracy bookkeeping, MNAR tail masking."""

import numpy as np
import pytest

from camsel import (
    ForestConfig,
    PipelineConfig,
    SurvivalConfig,
    SynthConfig,
    baseline_constant,
    cv_splits,
    evaluate,
    generate,
    imputation_benchmark,
    mask_tail_mnar,
    switch_stats,
    train_forest,
)

from conftest import make_dataset


def _labeled_dataset(seed=0, n=120, n_sequences=6):
    _, truth = generate(
        SynthConfig(n_samples=n, n_sequences=n_sequences, F=4, seed=seed)
    )
    return truth


def test_cv_splits_partition_rows_exactly():
    d = _labeled_dataset(seed=1)
    folds = cv_splits(d, n_folds=3, seed=0)
    assert len(folds) == 3
    all_test = np.sort(np.concatenate([test for _, test in folds]))
    assert np.array_equal(all_test, np.arange(len(d)))
    for train, test in folds:
        assert np.array_equal(
            np.sort(np.concatenate([train, test])), np.arange(len(d))
        )
        assert not set(train.tolist()) & set(test.tolist())


def test_cv_splits_keep_sequences_whole():
    d = _labeled_dataset(seed=2)
    folds = cv_splits(d, n_folds=3, seed=0)
    ids = np.array(d.sequence_ids)
    for train, test in folds:
        assert not set(ids[train].tolist()) & set(ids[test].tolist())


def test_cv_splits_deterministic_per_seed():
    d = _labeled_dataset(seed=3)
    a = cv_splits(d, n_folds=3, seed=5)
    b = cv_splits(d, n_folds=3, seed=5)
    for (ta, sa), (tb, sb) in zip(a, b):
        assert np.array_equal(ta, tb) and np.array_equal(sa, sb)


def test_cv_splits_need_enough_sequences():
    d = _labeled_dataset(seed=4, n=40, n_sequences=2)
    with pytest.raises(ValueError, match="sequences"):
        cv_splits(d, n_folds=3)


def test_evaluate_trained_model_accuracy_is_exact_ratio():
    d = _labeled_dataset(seed=5)
    model = train_forest(d.X, d.labels, ForestConfig(n_trees=5, seed=1),
                         n_classes=d.K)
    rep = evaluate(model, d)
    pred = model.predict(d.X)
    assert rep.overall_accuracy == (pred == d.labels).mean()
    assert rep.n_samples == len(d)
    assert rep.confusion.shape == (3, 3)
    assert rep.confusion.sum() == len(d)
    assert rep.overall_accuracy == np.trace(rep.confusion) / len(d)


def test_per_camera_accuracy_is_row_recall():
    d = _labeled_dataset(seed=6)
    model = train_forest(d.X, d.labels, ForestConfig(n_trees=5, seed=2),
                         n_classes=d.K)
    rep = evaluate(model, d)
    for cam in range(3):
        row = rep.confusion[cam]
        if row.sum():
            assert rep.per_camera_accuracy[cam] == row[cam] / row.sum()


def test_absent_camera_reports_none():
    X = np.random.default_rng(0).normal(size=(30, 6))
    labels = np.array([0, 1] * 15)
    d = make_dataset(X, K=3, labels=labels)
    model = train_forest(d.X, d.labels, ForestConfig(n_trees=3, seed=0),
                         n_classes=3)
    rep = evaluate(model, d)
    assert rep.per_camera_accuracy[2] is None


def test_fold_accuracies_recompose_overall():
    d = _labeled_dataset(seed=7)
    folds = cv_splits(d, n_folds=3, seed=1)
    model = train_forest(d.X, d.labels, ForestConfig(n_trees=5, seed=3),
                         n_classes=d.K)
    rep = evaluate(model, d, folds=folds)
    assert len(rep.fold_accuracies) == 3
    weighted = sum(
        acc * len(test) for acc, (_, test) in zip(rep.fold_accuracies, folds)
    )
    assert weighted / len(d) == pytest.approx(rep.overall_accuracy)


def test_evaluate_config_trains_per_fold():
    d = _labeled_dataset(seed=8)
    folds = cv_splits(d, n_folds=3, seed=2)
    cfg = PipelineConfig(
        forest=ForestConfig(n_trees=5), survival=SurvivalConfig(n_trees=5), seed=4
    )
    rep = evaluate(cfg, d, folds=folds)
    assert 0.0 <= rep.overall_accuracy <= 1.0
    assert len(rep.fold_accuracies) == 3
    assert rep.n_samples == len(d)


def test_evaluate_config_requires_folds():
    d = _labeled_dataset(seed=9)
    cfg = PipelineConfig(seed=0)
    with pytest.raises(ValueError, match="folds"):
        evaluate(cfg, d)


def test_baseline_predicts_modal_camera():
    X = np.zeros((10, 6))
    labels = np.array([2, 2, 2, 2, 1, 1, 1, 0, 0, 0])
    d = make_dataset(X, K=3, labels=labels)
    base = baseline_constant(d)
    assert (base.predict(d.X) == 2).all()
    rep = evaluate(base, d)
    assert rep.overall_accuracy == pytest.approx(0.4)


def test_baseline_modal_tie_goes_to_lowest():
    d = make_dataset(np.zeros((4, 6)), K=3, labels=np.array([1, 1, 0, 0]))
    assert baseline_constant(d).predict(d.X)[0] == 0


def test_switch_stats_hand_example():
    stats = switch_stats(np.array([0, 0, 1, 1, 1, 2]))
    assert stats["segment_count"] == 3
    assert stats["min_segment"] == 1
    assert stats["mean_segment"] == pytest.approx(2.0)


def test_report_to_dict_uses_camera_names():
    d = _labeled_dataset(seed=10)
    model = train_forest(d.X, d.labels, ForestConfig(n_trees=3, seed=5),
                         n_classes=d.K)
    doc = evaluate(model, d).to_dict()
    assert set(doc["per_camera_accuracy"]) == {"left", "middle", "right"}
    assert isinstance(doc["confusion"], list)


def test_mask_tail_hides_only_trailing_unselected_blocks():
    truth = _labeled_dataset(seed=11, n=100)
    masked = mask_tail_mnar(truth, fraction=0.3, p_miss=0.9, seed=3)
    assert len(masked) == 100
    head = masked.mask[:70]
    assert head.all()
    bp = masked.block_present()
    rows = np.arange(100)
    assert bp[rows, masked.labels].all()
    tail_bp = bp[70:]
    assert not tail_bp.all()
    # observed values in the tail are unchanged
    obs = masked.mask
    assert np.array_equal(masked.X[obs], truth.X[obs])


def test_mask_tail_deterministic():
    truth = _labeled_dataset(seed=12, n=80)
    a = mask_tail_mnar(truth, 0.25, 0.5, seed=9)
    b = mask_tail_mnar(truth, 0.25, 0.5, seed=9)
    assert np.array_equal(a.mask, b.mask)


def test_imputation_benchmark_reports_all_methods():
    vis, truth = generate(
        SynthConfig(n_samples=300, n_sequences=2, F=3, latent_dim=3, seed=13)
    )
    out = imputation_benchmark(
        vis, truth, survival=SurvivalConfig(n_trees=5, seed=1)
    )
    assert set(out) == {"rsf", "nn", "mean"}
    for rep in out.values():
        assert rep.errors.size > 0
        assert 0.0 <= rep.mean_error
        assert rep.curve[-1] == pytest.approx(1.0)
