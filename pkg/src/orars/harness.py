"""Cross-validated GRNN / sORARS / ORARS experiments on one dataset."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from functools import partial

import numpy as np

from .core import Dataset, FoldPlan, MetricsReport, derive_seed, mae, mse, normalize_features, split_folds
from .estimators import GRNNRegressor, ORARSRegressor, SORARSRegressor
from .exceptions import DegenerateRangeError, GridSearchFailedError, InvalidConfigError, TrainingDivergedError
from .nn import FULL_GRID, LARGE_DATASET, RESTRICTED_GRID, grid_candidates, grid_search
from .pairing import label_range

log = logging.getLogger(__name__)

METHODS = ("grnn", "sorars", "orars")
GRNN_GRIDS = ("full", "fixed")
ORARS_GRIDS = ("auto", "full", "restricted", "fixed")

# Method codes mixed into derived seeds.
_SEED_GRNN = 1
_SEED_ORARS = 2


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything that determines an experiment besides the dataset.

    ``grnn_grid`` / ``orars_grid`` choose between a grid search and the
    fixed ``hidden_units`` / ``dropout_rate`` / ``learning_rate``.  The
    ``auto`` ORARS grid is the full grid up to 8000 samples and the
    restricted one above.  ``orars_batch_size=0`` means 32 below 8000
    samples and 8192 above.
    """

    method: str = "all"
    k: int = 5
    seed: int = 0
    dev_fraction: float = 0.1
    grnn_grid: str = "full"
    orars_grid: str = "fixed"
    hidden_units: int = 64
    dropout_rate: float = 0.0
    learning_rate: float = 0.001
    grnn_epochs: int = 256
    grnn_batch_size: int = 32
    orars_epochs: int = 8
    orars_batch_size: int = 0
    jobs: int = 1
    legacy_max_index: bool = False

    def __post_init__(self):
        if self.method not in METHODS + ("all",):
            raise InvalidConfigError(f"method must be one of {METHODS + ('all',)}, got {self.method!r}")
        if self.k < 2:
            raise InvalidConfigError(f"k must be at least 2, got {self.k}")
        if self.seed < 0:
            raise InvalidConfigError("seed must be nonnegative")
        if not 0.0 < self.dev_fraction < 1.0:
            raise InvalidConfigError("dev_fraction must be in (0, 1)")
        if self.grnn_grid not in GRNN_GRIDS:
            raise InvalidConfigError(f"grnn_grid must be one of {GRNN_GRIDS}")
        if self.orars_grid not in ORARS_GRIDS:
            raise InvalidConfigError(f"orars_grid must be one of {ORARS_GRIDS}")
        for name in ("hidden_units", "grnn_epochs", "grnn_batch_size", "orars_epochs", "jobs"):
            if getattr(self, name) < 1:
                raise InvalidConfigError(f"{name} must be positive")
        if self.orars_batch_size < 0:
            raise InvalidConfigError("orars_batch_size must be >= 0")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidConfigError("dropout_rate must be in [0, 1)")
        if not self.learning_rate > 0:
            raise InvalidConfigError("learning_rate must be positive")

    @classmethod
    def field_types(cls) -> dict:
        return {f.name: f.type for f in fields(cls)}

    def methods(self) -> tuple:
        return METHODS if self.method == "all" else (self.method,)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FoldContext:
    """Normalized data and index sets shared by every method within one fold."""

    index: int
    X: np.ndarray
    y: np.ndarray
    train: np.ndarray
    dev: np.ndarray
    test: np.ndarray

    @property
    def anchor_labels(self) -> np.ndarray:
        return self.y[self.train]


def prepare_folds(dataset: Dataset, spec: ExperimentSpec, plan: FoldPlan | None = None) -> list[FoldContext]:
    plan = plan or split_folds(dataset.size, spec.k, spec.seed, spec.dev_fraction)
    contexts = []
    for i, fold in enumerate(plan):
        normed, _ = normalize_features(dataset, fold.train)
        contexts.append(FoldContext(i, normed.X, dataset.y, fold.train, fold.dev, fold.test))
    return contexts


def _grnn_params(spec: ExperimentSpec) -> list[dict]:
    if spec.grnn_grid == "full":
        return grid_candidates(FULL_GRID)
    return [{"hidden_units": spec.hidden_units, "dropout_rate": spec.dropout_rate, "learning_rate": spec.learning_rate}]


def _orars_params(spec: ExperimentSpec, n_samples: int) -> list[dict]:
    mode = spec.orars_grid
    if mode == "auto":
        mode = "restricted" if n_samples > LARGE_DATASET else "full"
    if mode == "full":
        return grid_candidates(FULL_GRID)
    if mode == "restricted":
        return grid_candidates(RESTRICTED_GRID)
    return [{"hidden_units": spec.hidden_units, "dropout_rate": spec.dropout_rate, "learning_rate": spec.learning_rate}]


def _fit_grnn_candidate(X_tr, y_tr, X_dev, y_dev, epochs, batch_size, seed, params):
    est = GRNNRegressor(**params, batch_size=batch_size, epochs=epochs, random_state=seed)
    est.fit(X_tr, y_tr, X_dev, y_dev)
    return est, est.history_


def _fit_orars_candidate(X_tr, y_tr, X_dev, y_dev, epochs, batch_size, R, legacy, seed, params):
    est = ORARSRegressor(**params, batch_size=batch_size, epochs=epochs, label_range=R,
                         legacy_max_index=legacy, random_state=seed)
    est.fit(X_tr, y_tr, X_dev, y_dev)
    return est, est.classifier_.history_


def fit_grnn_fold(ctx: FoldContext, spec: ExperimentSpec):
    """Grid-search (or fixed-config) GRNN for one fold; returns ``(estimator, summary)``."""
    seed = derive_seed(spec.seed, ctx.index, _SEED_GRNN)
    fit = partial(_fit_grnn_candidate, ctx.X[ctx.train], ctx.y[ctx.train], ctx.X[ctx.dev], ctx.y[ctx.dev],
                  spec.grnn_epochs, spec.grnn_batch_size, seed)
    result = grid_search(_grnn_params(spec), fit, jobs=spec.jobs)
    summary = {
        "fold": ctx.index,
        "params": result.best_params,
        "best_epoch": result.best_history.best_epoch,
        "dev_loss": result.best_history.best_dev_loss,
        "n_candidates": len(result.scores),
        "seed": seed,
    }
    return result.best_model, summary


def fit_orars_fold(ctx: FoldContext, spec: ExperimentSpec, n_samples: int):
    seed = derive_seed(spec.seed, ctx.index, _SEED_ORARS)
    R = label_range(ctx.y[np.concatenate([ctx.train, ctx.dev])])
    bs = spec.orars_batch_size or (32 if n_samples < LARGE_DATASET else 8192)
    fit = partial(_fit_orars_candidate, ctx.X[ctx.train], ctx.y[ctx.train], ctx.X[ctx.dev], ctx.y[ctx.dev],
                  spec.orars_epochs, bs, R, spec.legacy_max_index, seed)
    result = grid_search(_orars_params(spec, n_samples), fit, jobs=spec.jobs)
    est = result.best_model
    summary = {
        "fold": ctx.index,
        "params": result.best_params,
        "best_epoch": result.best_history.best_epoch,
        "dev_loss": result.best_history.best_dev_loss,
        "n_candidates": len(result.scores),
        "label_range": R,
        "n_pairs": est.classifier_.n_pairs_,
        "batch_size": bs,
        "antisymmetry_gap": result.best_history.diagnostics.get("antisymmetry_gap"),
        "seed": seed,
    }
    return est, summary


@dataclass
class _Collector:
    report: MetricsReport
    preds: list = field(default_factory=list)
    targets: list = field(default_factory=list)
    test_predictions: dict = field(default_factory=dict)

    def add(self, ctx: FoldContext, pred: np.ndarray, summary: dict):
        target = ctx.y[ctx.test]
        self.report.fold_mae.append(mae(pred, target))
        self.report.fold_mse.append(mse(pred, target))
        self.report.fold_configs.append(summary)
        self.preds.append(pred)
        self.targets.append(target)
        self.test_predictions[ctx.index] = pred

    def fail(self, ctx: FoldContext, message: str):
        self.report.fold_mae.append(float("nan"))
        self.report.fold_mse.append(float("nan"))
        self.report.fold_configs.append({"fold": ctx.index, "error": message})
        self.report.failed_folds.append(ctx.index)
        self.report.diagnostics.append(f"fold {ctx.index}: {message}")
        log.warning("%s fold %d skipped: %s", self.report.model, ctx.index, message)

    def finish(self) -> MetricsReport:
        if self.preds:
            p, t = np.concatenate(self.preds), np.concatenate(self.targets)
            self.report.pooled_mae = mae(p, t)
            self.report.pooled_mse = mse(p, t)
        return self.report


def _hyper(spec: ExperimentSpec, method: str) -> dict:
    d = spec.to_dict()
    keep = {"k", "seed", "dev_fraction", "hidden_units", "dropout_rate", "learning_rate"}
    if method in ("grnn", "sorars"):
        keep |= {"grnn_grid", "grnn_epochs", "grnn_batch_size"}
    if method == "orars":
        keep |= {"orars_grid", "orars_epochs", "orars_batch_size"}
    if method != "grnn":
        keep.add("legacy_max_index")
    return {k: v for k, v in d.items() if k in keep}


class _Runner:
    """Runs the requested methods fold by fold, sharing GRNN fits with sORARS."""

    def __init__(self, dataset: Dataset, spec: ExperimentSpec, plan: FoldPlan | None = None,
                 regressor_factory=None):
        self.dataset = dataset
        self.spec = spec
        self.plan = plan or split_folds(dataset.size, spec.k, spec.seed, spec.dev_fraction)
        self.contexts = prepare_folds(dataset, spec, self.plan)
        self.regressor_factory = regressor_factory
        self._grnn = {}

    def grnn(self, ctx):
        if ctx.index not in self._grnn:
            self._grnn[ctx.index] = fit_grnn_fold(ctx, self.spec)
        return self._grnn[ctx.index]

    def run(self, method: str) -> _Collector:
        col = _Collector(MetricsReport(model=method, hyperparameters=_hyper(self.spec, method)))
        for ctx in self.contexts:
            started = time.perf_counter()
            try:
                pred, summary = getattr(self, f"_fold_{method}")(ctx)
            except (TrainingDivergedError, GridSearchFailedError, DegenerateRangeError) as exc:
                col.fail(ctx, f"{type(exc).__name__}: {exc}")
                continue
            col.add(ctx, pred, summary)
            log.info("%s fold %d: mae=%.6g wall=%.2fs", method, ctx.index, col.report.fold_mae[-1],
                     time.perf_counter() - started)
        return col

    def _fold_grnn(self, ctx):
        est, summary = self.grnn(ctx)
        return est.predict(ctx.X[ctx.test]), summary

    def _fold_sorars(self, ctx):
        X_tr, y_tr = ctx.X[ctx.train], ctx.y[ctx.train]
        if self.regressor_factory is not None:
            regressor = self.regressor_factory(ctx.index, X_tr, y_tr)
            summary = {"fold": ctx.index, "params": "injected regressor"}
        else:
            regressor, summary = self.grnn(ctx)
        est = SORARSRegressor(regressor, prefit=True, legacy_max_index=self.spec.legacy_max_index)
        est.fit(X_tr, y_tr)
        return est.predict(ctx.X[ctx.test]), dict(summary)

    def _fold_orars(self, ctx):
        est, summary = fit_orars_fold(ctx, self.spec, self.dataset.size)
        log.info("orars fold %d: %d training pairs", ctx.index, summary["n_pairs"])
        return est.predict(ctx.X[ctx.test]), summary


def run_grnn(dataset: Dataset, spec: ExperimentSpec, plan: FoldPlan | None = None) -> MetricsReport:
    return _Runner(dataset, spec, plan).run("grnn").finish()


def run_sorars(dataset: Dataset, spec: ExperimentSpec, plan: FoldPlan | None = None,
               regressor_factory=None) -> MetricsReport:
    """sORARS per fold with the training rows as anchors.

    ``regressor_factory(fold_index, X_train, y_train)`` may supply a fitted
    regressor instead of the fold's GRNN (e.g. an oracle in tests).
    """
    return _Runner(dataset, spec, plan, regressor_factory).run("sorars").finish()


def run_orars(dataset: Dataset, spec: ExperimentSpec, plan: FoldPlan | None = None) -> MetricsReport:
    return _Runner(dataset, spec, plan).run("orars").finish()


@dataclass
class ComparisonReport:
    dataset: dict
    reports: dict
    fold_winners: list
    spec: dict
    fold_plan: dict
    predictions: dict = field(default_factory=dict, repr=False)

    @property
    def any_failed(self) -> bool:
        return any(r.failed_folds for r in self.reports.values())

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "spec": self.spec,
            "fold_plan": self.fold_plan,
            "methods": {m: r.to_dict() for m, r in self.reports.items()},
            "fold_winners": self.fold_winners,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default)

    def summary_csv(self) -> str:
        """One summary row: dataset columns then mean MAE per method."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        methods = list(self.reports)
        w.writerow(["name", "size", "min", "max", "attributes"] + [f"{m}_mae" for m in methods]
                   + [f"{m}_pooled_mae" for m in methods] + ["seed", "k"])
        d = self.dataset
        w.writerow([d["name"], d["size"], repr(d["min"]), repr(d["max"]), d["attributes"]]
                   + [repr(self.reports[m].mean_mae) for m in methods]
                   + [repr(self.reports[m].pooled_mae) for m in methods]
                   + [self.spec["seed"], self.spec["k"]])
        return buf.getvalue()

    def folds_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["fold", "method", "mae", "mse", "winner"])
        for m, r in self.reports.items():
            for i, (a, b) in enumerate(zip(r.fold_mae, r.fold_mse)):
                w.writerow([i, m, repr(a), repr(b), self.fold_winners[i]])
        return buf.getvalue()

    def to_text(self) -> str:
        d = self.dataset
        methods = list(self.reports)
        head = f"{'Name':<24}{'Size':>7}{'Min':>12}{'Max':>12}{'Attr':>6}" + "".join(f"{m.upper():>12}" for m in methods)
        row = (f"{d['name']:<24}{d['size']:>7}{d['min']:>12.4g}{d['max']:>12.4g}{d['attributes']:>6}"
               + "".join(f"{self.reports[m].mean_mae:>12.4g}" for m in methods))
        lines = [head, row, "", "per-fold MAE:"]
        for i, winner in enumerate(self.fold_winners):
            cells = "  ".join(f"{m}={self.reports[m].fold_mae[i]:.4g}" for m in methods)
            lines.append(f"  fold {i}: {cells}  winner={winner}")
        for m, r in self.reports.items():
            for diag in r.diagnostics:
                lines.append(f"  [{m}] {diag}")
        return "\n".join(lines) + "\n"


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def dataset_metadata(dataset: Dataset) -> dict:
    return {
        "name": dataset.name,
        "size": dataset.size,
        "min": float(dataset.y.min()),
        "max": float(dataset.y.max()),
        "attributes": dataset.feature_dim,
    }


def compare(dataset: Dataset, spec: ExperimentSpec, plan: FoldPlan | None = None) -> ComparisonReport:
    """Run the spec's methods on identical folds and normalization; report side by side."""
    runner = _Runner(dataset, spec, plan)
    collectors = {m: runner.run(m) for m in spec.methods()}
    reports = {m: c.finish() for m, c in collectors.items()}
    winners = []
    for i in range(len(runner.contexts)):
        scored = [(r.fold_mae[i], m) for m, r in reports.items() if np.isfinite(r.fold_mae[i])]
        winners.append(min(scored)[1] if scored else "none")
    plan_summary = {
        "k": runner.plan.k,
        "seed": runner.plan.seed,
        "folds": [{"train": len(f.train), "dev": len(f.dev), "test": len(f.test)} for f in runner.plan],
    }
    predictions = {m: c.test_predictions for m, c in collectors.items()}
    return ComparisonReport(dataset_metadata(dataset), reports, winners, spec.to_dict(), plan_summary, predictions)
