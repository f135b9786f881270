import numpy as np
import pytest

from orars.core import Dataset, split_folds
from orars.exceptions import InvalidConfigError
from orars.harness import ExperimentSpec, compare, prepare_folds, run_grnn, run_sorars

from oracles import brute_rank_prediction

FAST = dict(grnn_grid="fixed", hidden_units=8, grnn_epochs=15, orars_epochs=1, k=3)


@pytest.fixture(scope="module")
def small():
    r = np.random.default_rng(11)
    X = r.uniform(0, 1, size=(45, 2))
    return Dataset("small", X, X[:, 0] * 2 + r.normal(0, 0.05, 45))


def test_spec_validation():
    with pytest.raises(InvalidConfigError):
        ExperimentSpec(k=1)
    with pytest.raises(InvalidConfigError):
        ExperimentSpec(method="svm")
    assert ExperimentSpec().methods() == ("grnn", "sorars", "orars")


def test_prepare_folds_normalizes_on_train(small):
    ctxs = prepare_folds(small, ExperimentSpec(**FAST))
    assert len(ctxs) == 3
    for c in ctxs:
        np.testing.assert_allclose(c.X[c.train].mean(axis=0), 0, atol=1e-12)


def test_compare_reports_and_determinism(small):
    spec = ExperimentSpec(seed=3, **FAST)
    a, b = compare(small, spec), compare(small, spec)
    assert set(a.reports) == {"grnn", "sorars", "orars"}
    assert all(len(r.fold_mae) == 3 for r in a.reports.values())
    assert a.to_json() == b.to_json()
    assert a.summary_csv() == b.summary_csv()
    assert a.folds_csv() == b.folds_csv()
    assert not a.any_failed
    assert len(a.fold_winners) == 3


def test_sorars_and_orars_outputs_are_train_labels(small):
    spec = ExperimentSpec(seed=1, **FAST)
    report = compare(small, spec)
    plan = split_folds(small.size, spec.k, spec.seed, spec.dev_fraction)
    for method in ("sorars", "orars"):
        for i, fold in enumerate(plan):
            preds = report.predictions[method][i]
            assert set(preds.tolist()) <= set(small.y[fold.train].tolist())


def test_sorars_with_oracle_regressor(small):
    spec = ExperimentSpec(seed=2, **FAST)
    plan = split_folds(small.size, spec.k, spec.seed, spec.dev_fraction)
    truth = dict(zip(map(tuple, prepare_folds(small, spec, plan)[0].X), small.y))

    class Oracle:
        def __init__(self, table):
            self.table = table

        def predict(self, X):
            return np.array([self.table[tuple(x)] for x in X])

    def factory(i, X_tr, y_tr):
        ctx = prepare_folds(small, spec, plan)[i]
        return Oracle(dict(zip(map(tuple, ctx.X), small.y)))

    report = run_sorars(small, spec, plan, regressor_factory=factory)
    for i, fold in enumerate(plan):
        y_tr = small.y[fold.train]
        expected = brute_rank_prediction(small.y[fold.test], y_tr, y_tr)
        assert report.fold_mae[i] == pytest.approx(np.mean(np.abs(expected - small.y[fold.test])), abs=1e-15)
    assert truth


def test_grnn_and_compare_share_folds(small):
    spec = ExperimentSpec(seed=4, method="grnn", **FAST)
    alone = run_grnn(small, spec)
    together = compare(small, ExperimentSpec(seed=4, **FAST)).reports["grnn"]
    assert alone.fold_mae == together.fold_mae


def test_degenerate_fold_recorded_not_fatal():
    X = np.arange(12.0)[:, None]
    y = np.array([1.0] * 11 + [2.0])
    spec = ExperimentSpec(method="orars", seed=0, **{**FAST, "k": 2})
    plan = split_folds(12, 2, 0)
    report = compare(Dataset("flat", X, y), spec, plan)
    r = report.reports["orars"]
    # The fold whose train+dev labels are all equal cannot define a pair weight.
    for i, fold in enumerate(plan):
        if np.ptp(y[np.concatenate([fold.train, fold.dev])]) == 0:
            assert i in r.failed_folds
            assert np.isnan(r.fold_mae[i])
