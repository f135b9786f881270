"""Data model, seeding helpers, metrics and fold planning."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import ContractViolationError, InvalidConfigError, InvalidDataError


def derive_seed(*keys: int) -> int:
    """Deterministically derive a 32-bit child seed from integer keys.

    Used wherever a component needs an independent stream (fold, method,
    grid candidate) so results do not depend on execution order.
    """
    ss = np.random.SeedSequence([int(k) for k in keys])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    label: float

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if not np.all(np.isfinite(feats)):
            raise InvalidDataError("sample features contain non-finite values")
        if not np.isfinite(self.label):
            raise InvalidDataError("sample label is not finite")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "label", float(self.label))


@dataclass(frozen=True, eq=False)
class Dataset:
    """An in-memory regression dataset.

    ``X`` has shape (n_samples, feature_dim) and ``y`` shape (n_samples,).
    Both are copied to read-only float64 arrays on construction.
    """

    name: str
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple = ()

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        y = np.array(self.y, dtype=np.float64).reshape(-1)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2:
            raise ContractViolationError(f"X must be 2-D, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise ContractViolationError(
                f"X has {X.shape[0]} rows but y has {y.shape[0]} labels"
            )
        if X.shape[1] < 1:
            raise ContractViolationError("feature_dim must be positive")
        if X.shape[0] < 2:
            raise ContractViolationError("a dataset needs at least two samples")
        if not np.all(np.isfinite(X)):
            raise InvalidDataError("features contain non-finite values")
        if not np.all(np.isfinite(y)):
            raise InvalidDataError("labels contain non-finite values")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @classmethod
    def from_samples(cls, name: str, samples: Sequence[Sample]) -> "Dataset":
        if len(samples) == 0:
            raise ContractViolationError("no samples given")
        dims = {s.features.shape[0] for s in samples}
        if len(dims) != 1:
            raise ContractViolationError(f"samples disagree on feature_dim: {sorted(dims)}")
        X = np.stack([s.features for s in samples])
        y = np.array([s.label for s in samples])
        return cls(name, X, y)

    @property
    def size(self) -> int:
        return self.X.shape[0]

    def __len__(self) -> int:
        return self.size

    @property
    def feature_dim(self) -> int:
        return self.X.shape[1]

    @property
    def samples(self) -> list[Sample]:
        return [Sample(x, lab) for x, lab in zip(self.X, self.y)]

    def subset(self, indices, name: str | None = None) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(name or self.name, self.X[idx], self.y[idx], self.feature_names)

    def with_features(self, X: np.ndarray) -> "Dataset":
        return Dataset(self.name, X, self.y, self.feature_names)


@dataclass(frozen=True, eq=False)
class Fold:
    train: np.ndarray
    dev: np.ndarray
    test: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, Fold):
            return NotImplemented
        return all(
            np.array_equal(a, b)
            for a, b in ((self.train, other.train), (self.dev, other.dev), (self.test, other.test))
        )


@dataclass(frozen=True)
class FoldPlan:
    k: int
    seed: int
    n_samples: int
    folds: tuple[Fold, ...]

    def __iter__(self) -> Iterator[Fold]:
        return iter(self.folds)

    def __len__(self) -> int:
        return len(self.folds)

    def __getitem__(self, i: int) -> Fold:
        return self.folds[i]


@dataclass
class MetricsReport:
    """Per-fold and aggregate test metrics of one method."""

    model: str
    fold_mae: list[float] = field(default_factory=list)
    fold_mse: list[float] = field(default_factory=list)
    hyperparameters: dict = field(default_factory=dict)
    fold_configs: list[dict] = field(default_factory=list)
    pooled_mae: float = float("nan")
    pooled_mse: float = float("nan")
    diagnostics: list[str] = field(default_factory=list)
    failed_folds: list[int] = field(default_factory=list)

    @property
    def mean_mae(self) -> float:
        vals = [v for v in self.fold_mae if np.isfinite(v)]
        return float(np.mean(vals)) if vals else float("nan")

    @property
    def mean_mse(self) -> float:
        vals = [v for v in self.fold_mse if np.isfinite(v)]
        return float(np.mean(vals)) if vals else float("nan")

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "mean_mae": self.mean_mae,
            "mean_mse": self.mean_mse,
            "pooled_mae": self.pooled_mae,
            "pooled_mse": self.pooled_mse,
            "fold_mae": list(self.fold_mae),
            "fold_mse": list(self.fold_mse),
            "hyperparameters": dict(self.hyperparameters),
            "fold_configs": list(self.fold_configs),
            "failed_folds": list(self.failed_folds),
            "diagnostics": list(self.diagnostics),
        }


def _paired(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ContractViolationError(f"length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise ContractViolationError("metrics need at least one value")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise InvalidDataError("metric inputs contain non-finite values")
    return a, b


def mae(predictions, targets) -> float:
    p, t = _paired(predictions, targets)
    return float(np.mean(np.abs(p - t)))


def mse(a, b) -> float:
    a, b = _paired(a, b)
    return float(np.mean((a - b) ** 2))


def split_folds(n_samples: int, k: int = 5, seed: int = 0, dev_fraction: float = 0.1) -> FoldPlan:
    """Plan k-fold cross-validation with a held-out dev set per fold.

    Test folds partition a seeded permutation of the indices (sizes differ
    by at most one).  Of the remaining indices, ``round(dev_fraction * m)``
    (at least one) are drawn as the dev set, the rest form the training set.
    Accepts a :class:`Dataset` in place of ``n_samples``.
    """
    if isinstance(n_samples, Dataset):
        n_samples = n_samples.size
    n_samples = int(n_samples)
    if k < 2:
        raise InvalidConfigError(f"k must be at least 2, got {k}")
    if k > n_samples:
        raise InvalidConfigError(f"k={k} exceeds dataset size {n_samples}")
    if not 0.0 <= dev_fraction < 1.0:
        raise InvalidConfigError(f"dev_fraction must be in [0, 1), got {dev_fraction}")
    rng = np.random.default_rng(derive_seed(seed, 0))
    perm = rng.permutation(n_samples)
    tests = np.array_split(perm, k)
    folds = []
    for i, test in enumerate(tests):
        rest = np.concatenate([t for j, t in enumerate(tests) if j != i])
        n_dev = int(np.floor(dev_fraction * rest.size + 0.5))
        if dev_fraction > 0 and rest.size >= 2:
            n_dev = min(max(n_dev, 1), rest.size - 1)
        fold_rng = np.random.default_rng(derive_seed(seed, 1, i))
        shuffled = fold_rng.permutation(rest)
        folds.append(
            Fold(
                train=np.sort(shuffled[n_dev:]),
                dev=np.sort(shuffled[:n_dev]),
                test=np.sort(test),
            )
        )
    return FoldPlan(k=k, seed=seed, n_samples=n_samples, folds=tuple(folds))


class ZScoreScaler(BaseEstimator, TransformerMixin):
    """Column-wise z-scoring with population standard deviation.

    Columns with zero variance on the fitting rows map to 0.
    """

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.mean_ = X.mean(axis=0)
        self.scale_ = X.std(axis=0)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ContractViolationError(
                f"expected {self.n_features_in_} features, got {X.shape[1]}"
            )
        out = np.zeros_like(X)
        live = self.scale_ > 0
        out[:, live] = (X[:, live] - self.mean_[live]) / self.scale_[live]
        return out


def normalize_features(dataset: Dataset, train_indices) -> tuple[Dataset, ZScoreScaler]:
    """Z-score every row of ``dataset`` using statistics of ``train_indices`` only."""
    idx = np.asarray(train_indices, dtype=np.int64)
    if idx.size == 0:
        raise ContractViolationError("normalization needs at least one training row")
    scaler = ZScoreScaler().fit(dataset.X[idx])
    return dataset.with_features(scaler.transform(dataset.X)), scaler
