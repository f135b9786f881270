"""A small numpy multilayer perceptron with hand-written backpropagation.

The same network serves as the score regressor (linear head, MSE loss) and
as the pairwise preference classifier (logistic head, weighted
cross-entropy).  Three hidden blocks of ``affine -> dropout -> ReLU`` feed
an affine projection to one unit.
"""

from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .exceptions import (
    ContractViolationError,
    GridSearchFailedError,
    InvalidConfigError,
    InvalidDataError,
    TrainingDivergedError,
)

N_BLOCKS = 3
CE_EPS = 1e-7
CHECKPOINT_VERSION = 1

HEADS = ("regression", "probability")

FULL_GRID = {
    "hidden_units": (16, 32, 64, 128),
    "dropout_rate": (0.0, 0.1, 0.3, 0.5),
    "learning_rate": (0.01, 0.001, 0.0001),
}
# Used for the preference classifier on datasets larger than LARGE_DATASET.
RESTRICTED_GRID = {
    "hidden_units": (32, 64),
    "dropout_rate": (0.0,),
    "learning_rate": (0.001, 0.0001),
}
LARGE_DATASET = 8000


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    hidden_units: int = 64
    dropout_rate: float = 0.0
    learning_rate: float = 1e-3
    head: str = "regression"

    def __post_init__(self):
        if self.input_dim < 1 or self.hidden_units < 1:
            raise InvalidConfigError("input_dim and hidden_units must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if not self.learning_rate > 0:
            raise InvalidConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.head not in HEADS:
            raise InvalidConfigError(f"head must be one of {HEADS}, got {self.head!r}")


@dataclass
class TrainConfig:
    batch_size: int = 32
    epochs: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise InvalidConfigError("batch_size and epochs must be positive")


def regressor_train_config(seed: int = 0) -> TrainConfig:
    return TrainConfig(batch_size=32, epochs=256, seed=seed)


def classifier_train_config(n_samples: int, seed: int = 0) -> TrainConfig:
    return TrainConfig(batch_size=32 if n_samples < LARGE_DATASET else 8192, epochs=8, seed=seed)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class Mlp:
    """Parameters of the 3-block network plus forward/backward passes.

    ``weights[l]`` has shape (fan_in, fan_out); layer 3 is the output layer.
    """

    def __init__(self, config: MlpConfig, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray]):
        if len(weights) != N_BLOCKS + 1 or len(biases) != N_BLOCKS + 1:
            raise ContractViolationError(f"expected {N_BLOCKS + 1} layers")
        self.config = config
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        self.biases = [np.array(b, dtype=np.float64) for b in biases]

    @classmethod
    def initialize(cls, config: MlpConfig, rng: np.random.Generator) -> "Mlp":
        # Glorot-uniform weights, zero biases.
        dims = [config.input_dim] + [config.hidden_units] * N_BLOCKS + [1]
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(config, weights, biases)

    @classmethod
    def zeros(cls, config: MlpConfig) -> "Mlp":
        dims = [config.input_dim] + [config.hidden_units] * N_BLOCKS + [1]
        return cls(
            config,
            [np.zeros((a, b)) for a, b in zip(dims[:-1], dims[1:])],
            [np.zeros(b) for b in dims[1:]],
        )

    @property
    def params(self) -> list[np.ndarray]:
        """Flat view ``[W0, b0, W1, b1, ...]``; the arrays are the live parameters."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "Mlp":
        return Mlp(self.config, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params)

    def sample_masks(self, n: int, rng: np.random.Generator) -> list[np.ndarray]:
        keep = 1.0 - self.config.dropout_rate
        h = self.config.hidden_units
        return [(rng.random((n, h)) < keep) / keep for _ in range(N_BLOCKS)]

    def forward(self, X, train: bool = False, rng: np.random.Generator | None = None, masks=None):
        """Run the network on a batch and return ``(output, cache)``.

        In train mode with a positive dropout rate, masks are drawn from
        ``rng`` unless given explicitly.  Inference mode never drops units.
        """
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if X.shape[1] != self.config.input_dim:
            raise ContractViolationError(
                f"input has {X.shape[1]} features, network expects {self.config.input_dim}"
            )
        if train and self.config.dropout_rate > 0 and masks is None:
            if rng is None:
                raise ContractViolationError("train-mode dropout needs an rng or explicit masks")
            masks = self.sample_masks(X.shape[0], rng)
        if not train:
            masks = None
        acts, pre = [X], []
        a = X
        for layer in range(N_BLOCKS):
            z = a @ self.weights[layer] + self.biases[layer]
            if masks is not None:
                z = z * masks[layer]
            pre.append(z)
            a = np.maximum(z, 0.0)
            acts.append(a)
        logit = (a @ self.weights[N_BLOCKS] + self.biases[N_BLOCKS])[:, 0]
        out = sigmoid(logit) if self.config.head == "probability" else logit
        cache = {"acts": acts, "pre": pre, "masks": masks, "logit": logit, "out": out}
        if single:
            return float(out[0]), cache
        return out, cache

    def predict(self, X) -> np.ndarray:
        out, _ = self.forward(X, train=False)
        return out

    def backward(self, cache, dlogit: np.ndarray) -> list[np.ndarray]:
        """Backpropagate d(loss)/d(logit) into gradients ordered like :attr:`params`."""
        acts, pre, masks = cache["acts"], cache["pre"], cache["masks"]
        grads_w = [None] * (N_BLOCKS + 1)
        grads_b = [None] * (N_BLOCKS + 1)
        delta = dlogit.reshape(-1, 1)
        grads_w[N_BLOCKS] = acts[N_BLOCKS].T @ delta
        grads_b[N_BLOCKS] = delta.sum(axis=0)
        da = delta @ self.weights[N_BLOCKS].T
        for layer in range(N_BLOCKS - 1, -1, -1):
            dz = da * (pre[layer] > 0)
            if masks is not None:
                dz = dz * masks[layer]
            grads_w[layer] = acts[layer].T @ dz
            grads_b[layer] = dz.sum(axis=0)
            if layer:
                da = dz @ self.weights[layer].T
        out = []
        for gw, gb in zip(grads_w, grads_b):
            out.extend((gw, gb))
        return out


def ce_loss(targets, probs, weights=None, eps: float = CE_EPS) -> float:
    """Weighted binary cross-entropy, averaged over the number of examples."""
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    p = np.asarray(probs, dtype=np.float64).reshape(-1)
    w = np.ones_like(t) if weights is None else np.asarray(weights, dtype=np.float64).reshape(-1)
    if not (t.shape == p.shape == w.shape):
        raise ContractViolationError("targets, probs and weights must have equal length")
    if t.size == 0:
        raise ContractViolationError("empty batch")
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise InvalidDataError("probabilities must lie in [0, 1]")
    pc = np.clip(p, eps, 1.0 - eps)
    return float(-np.sum(w * (t * np.log(pc) + (1.0 - t) * np.log1p(-pc))) / t.size)


def _ce_dlogit(out, t, w, eps=CE_EPS):
    inside = (out > eps) & (out < 1.0 - eps)
    return w * (out - t) * inside / t.size


def loss_and_grads(model: Mlp, X, targets, weights=None, kind: str = "mse", train: bool = True,
                   rng=None, masks=None):
    """Loss of one batch and its exact gradient for every parameter.

    ``kind`` is ``"mse"`` (regression head) or ``"weighted_ce"``
    (probability head).  Returns ``(loss, grads, cache)``.
    """
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    out, cache = model.forward(X, train=train, rng=rng, masks=masks)
    out = np.atleast_1d(out)
    if kind == "mse":
        diff = out - t
        loss = float(np.mean(diff ** 2))
        dlogit = 2.0 * diff / t.size
    elif kind == "weighted_ce":
        w = np.ones_like(t) if weights is None else np.asarray(weights, dtype=np.float64).reshape(-1)
        loss = ce_loss(t, out, w)
        dlogit = _ce_dlogit(out, t, w)
    else:
        raise InvalidConfigError(f"unknown loss kind {kind!r}")
    return loss, model.backward(cache, dlogit), cache


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_model(cls, model: Mlp) -> "AdamState":
        return cls([np.zeros_like(p) for p in model.params], [np.zeros_like(p) for p in model.params])


def adam_step(model: Mlp, grads: Sequence[np.ndarray], state: AdamState, lr: float) -> Mlp:
    """Apply one bias-corrected Adam update to ``model`` in place."""
    params = model.params
    if len(grads) != len(params):
        raise ContractViolationError("gradient list does not match model parameters")
    for g, p in zip(grads, params):
        if g.shape != p.shape:
            raise ContractViolationError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError("non-finite gradient", model.config)
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return model


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    dev_loss: list = field(default_factory=list)
    best_epoch: int = -1
    best_dev_loss: float = float("inf")
    diagnostics: dict = field(default_factory=dict)


def _fit(model: Mlp, batches, dev_loss_fn, kind, train_config: TrainConfig, rng):
    state = AdamState.for_model(model)
    history = TrainHistory()
    best = model.copy()
    lr = model.config.learning_rate
    for epoch in range(train_config.epochs):
        total, count = 0.0, 0
        for X, t, w in batches(rng):
            loss, grads, _ = loss_and_grads(model, X, t, w, kind=kind, train=True, rng=rng)
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"non-finite training loss at epoch {epoch}", model.config)
            adam_step(model, grads, state, lr)
            total += loss * t.size
            count += t.size
        dev = dev_loss_fn(model)
        if not math.isfinite(dev):
            raise TrainingDivergedError(f"non-finite dev loss at epoch {epoch}", model.config)
        history.train_loss.append(total / max(count, 1))
        history.dev_loss.append(dev)
        if dev < history.best_dev_loss:
            history.best_dev_loss = dev
            history.best_epoch = epoch
            best = model.copy()
    return best, history


def train_regressor(X, y, X_dev, y_dev, config: MlpConfig, train_config: TrainConfig | None = None):
    """Train the score regressor with MSE; keep the epoch with the lowest dev MSE.

    Returns ``(model, history)``.
    """
    train_config = train_config or regressor_train_config()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    X_dev = np.asarray(X_dev, dtype=np.float64)
    y_dev = np.asarray(y_dev, dtype=np.float64)
    if X.shape[0] == 0 or X_dev.shape[0] == 0:
        raise ContractViolationError("train and dev sets must be nonempty")
    if config.head != "regression":
        raise InvalidConfigError("the regressor needs a regression head")
    rng = np.random.default_rng(train_config.seed)
    model = Mlp.initialize(config, rng)
    bs = train_config.batch_size

    def batches(r):
        order = r.permutation(X.shape[0])
        for lo in range(0, order.size, bs):
            idx = order[lo:lo + bs]
            yield X[idx], y[idx], None

    def dev_loss(m):
        return float(np.mean((m.predict(X_dev) - y_dev) ** 2))

    return _fit(model, batches, dev_loss, "mse", train_config, rng)


def pairset_loss(model: Mlp, pairs, X, chunk: int = 65536) -> float:
    """Weighted CE of ``model`` over every pair of ``pairs`` (inference mode)."""
    total, count = 0.0, 0
    for flat in pairs.iter_sequential(chunk):
        feats, t, w = pairs.batch(flat, X)
        total += ce_loss(t, model.predict(feats), w) * t.size
        count += t.size
    return total / count


def antisymmetry_gap(model: Mlp, X, n_probe: int = 256, rng=None) -> float:
    """Mean |g(a, b) + g(b, a) - 1| over random sample pairs; 0 for a fully antisymmetric g."""
    rng = np.random.default_rng(0) if rng is None else rng
    X = np.asarray(X, dtype=np.float64)
    i = rng.integers(0, X.shape[0], n_probe)
    j = rng.integers(0, X.shape[0], n_probe)
    p = model.predict(np.concatenate([X[i], X[j]], axis=1))
    q = model.predict(np.concatenate([X[j], X[i]], axis=1))
    return float(np.mean(np.abs(p + q - 1.0)))


def train_binary_classifier(pairs, X, dev_pairs, config: MlpConfig, train_config: TrainConfig | None = None):
    """Train the preference classifier on concatenated pair features with weighted CE.

    ``pairs`` and ``dev_pairs`` are :class:`~orars.pairing.PairSet` objects
    indexing rows of ``X``.  The snapshot with the lowest dev loss is kept.
    Returns ``(model, history)``.
    """
    X = np.asarray(X, dtype=np.float64)
    if config.input_dim != 2 * X.shape[1]:
        raise ContractViolationError(
            f"classifier input_dim {config.input_dim} != 2 x feature_dim {X.shape[1]}"
        )
    if config.head != "probability":
        raise InvalidConfigError("the preference classifier needs a probability head")
    if len(pairs) == 0 or len(dev_pairs) == 0:
        raise ContractViolationError("train and dev pair sets must be nonempty")
    train_config = train_config or classifier_train_config(X.shape[0])
    rng = np.random.default_rng(train_config.seed)
    model = Mlp.initialize(config, rng)

    def batches(r):
        for flat in pairs.iter_batches(train_config.batch_size, r):
            yield pairs.batch(flat, X)

    best, history = _fit(model, batches, lambda m: pairset_loss(m, dev_pairs, X),
                         "weighted_ce", train_config, rng)
    history.diagnostics["antisymmetry_gap"] = antisymmetry_gap(best, X)
    return best, history


def grid_candidates(grid: dict) -> list[dict]:
    keys = list(grid)
    return [dict(zip(keys, values)) for values in itertools.product(*(grid[k] for k in keys))]


@dataclass
class GridResult:
    best_params: dict
    best_model: Mlp
    best_history: TrainHistory
    scores: list  # (params, best dev loss or None when diverged)


def _run_candidate(fit_candidate, params):
    try:
        model, history = fit_candidate(params)
    except TrainingDivergedError:
        return None
    return model, history


def grid_search(candidates: Sequence[dict], fit_candidate: Callable[[dict], tuple], jobs: int = 1) -> GridResult:
    """Fit every candidate and keep the one with the lowest dev loss.

    ``fit_candidate(params) -> (model, history)`` must be deterministic;
    with ``jobs > 1`` it must also be picklable.  Ties go to the earlier
    candidate, so the result does not depend on ``jobs``.
    """
    candidates = list(candidates)
    if not candidates:
        raise InvalidConfigError("empty candidate space")
    if jobs > 1 and len(candidates) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_candidate, [fit_candidate] * len(candidates), candidates))
    else:
        results = [_run_candidate(fit_candidate, c) for c in candidates]
    scores, best = [], None
    for params, res in zip(candidates, results):
        if res is None:
            scores.append((params, None))
            continue
        model, history = res
        scores.append((params, history.best_dev_loss))
        if best is None or history.best_dev_loss < best[2].best_dev_loss:
            best = (params, model, history)
    if best is None:
        raise GridSearchFailedError(f"all {len(candidates)} grid candidates diverged")
    return GridResult(best[0], best[1], best[2], scores)


def save_checkpoint(path, model: Mlp, arrays: dict | None = None, metadata: dict | None = None) -> None:
    """Write model parameters (float64), config and extra arrays to an ``.npz`` file."""
    payload = {}
    for layer, (w, b) in enumerate(zip(model.weights, model.biases)):
        payload[f"W{layer}"] = w
        payload[f"b{layer}"] = b
    for key, value in (arrays or {}).items():
        payload[f"extra__{key}"] = np.asarray(value)
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "mlp_config": asdict(model.config),
        "metadata": metadata or {},
    }
    payload["meta_json"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(model, arrays, metadata)``."""
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(bytes(data["meta_json"]).decode())
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise InvalidDataError(f"unsupported checkpoint version {meta.get('format_version')}")
        config = MlpConfig(**meta["mlp_config"])
        weights = [data[f"W{layer}"] for layer in range(N_BLOCKS + 1)]
        biases = [data[f"b{layer}"] for layer in range(N_BLOCKS + 1)]
        arrays = {k[len("extra__"):]: data[k] for k in data.files if k.startswith("extra__")}
    return Mlp(config, weights, biases), arrays, meta["metadata"]
