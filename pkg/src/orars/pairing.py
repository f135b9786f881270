"""Preference-pair generation: ordinal labels and distance weights.

Pairs are never materialized as feature matrices up front.  A
:class:`PairSet` maps a flat pair index onto (left, right) sample indices,
so a self-product of n samples costs O(1) memory until a batch is drawn.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .core import Dataset
from .exceptions import ContractViolationError, DegenerateRangeError, InvalidConfigError, InvalidDataError

# Above this many pairs an epoch shuffles block order plus within-block order
# instead of drawing one full permutation.
FULL_SHUFFLE_LIMIT = 1 << 24
SHUFFLE_BLOCK = 1 << 20


def make_label(y_i: float, y_j: float) -> int:
    if not (math.isfinite(y_i) and math.isfinite(y_j)):
        raise InvalidDataError("labels must be finite")
    return 1 if y_i > y_j else 0


def label_range(labels) -> float:
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if y.size == 0 or not np.all(np.isfinite(y)):
        raise InvalidDataError("label_range needs finite labels")
    r = float(y.max() - y.min())
    if r <= 0:
        raise DegenerateRangeError("all labels are identical; pair weights are undefined")
    return r


def pair_weight(y_i: float, y_j: float, R: float) -> float:
    if not R > 0:
        raise InvalidConfigError(f"label range must be positive, got {R}")
    return min(abs(y_i - y_j) / R, 1.0)


def pair_weights(y_left, y_right, R: float) -> np.ndarray:
    if not R > 0:
        raise InvalidConfigError(f"label range must be positive, got {R}")
    return np.minimum(np.abs(np.asarray(y_left) - np.asarray(y_right)) / R, 1.0)


@dataclass(frozen=True)
class PreferencePair:
    i: int
    j: int
    label: int
    weight: float


class PairSet:
    """Ordered pairs between a left and a right index set of one dataset.

    With ``exclude_self=True`` and identical index sets this is the
    self-cartesian product minus the diagonal (n * (n - 1) pairs).
    Otherwise it is the full cross product ``left x right``.
    """

    def __init__(self, y, left, right, label_range: float, exclude_self: bool = False, source: str = ""):
        if not label_range > 0:
            raise InvalidConfigError(f"label range must be positive, got {label_range}")
        self.y = np.asarray(y, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.label_range = float(label_range)
        self.source = source
        self.exclude_self = bool(exclude_self)
        if self.exclude_self and not np.array_equal(self.left, self.right):
            raise ContractViolationError("exclude_self requires identical left and right index sets")
        n_l, n_r = self.left.size, self.right.size
        self._width = n_r - 1 if self.exclude_self else n_r
        self._size = n_l * self._width

    def __len__(self) -> int:
        return self._size

    def indices(self, flat) -> tuple[np.ndarray, np.ndarray]:
        """Map flat pair indices to (i, j) sample indices."""
        flat = np.asarray(flat, dtype=np.int64)
        if flat.size and (flat.min() < 0 or flat.max() >= self._size):
            raise IndexError("pair index out of range")
        a, r = np.divmod(flat, self._width)
        if self.exclude_self:
            r = r + (r >= a)
        return self.left[a], self.right[r]

    def labels(self, flat) -> np.ndarray:
        i, j = self.indices(flat)
        return (self.y[i] > self.y[j]).astype(np.float64)

    def weights(self, flat) -> np.ndarray:
        i, j = self.indices(flat)
        return pair_weights(self.y[i], self.y[j], self.label_range)

    def batch(self, flat, X) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Concatenated features, targets and weights for the given pairs."""
        i, j = self.indices(flat)
        feats = np.concatenate([X[i], X[j]], axis=1)
        yi, yj = self.y[i], self.y[j]
        return feats, (yi > yj).astype(np.float64), pair_weights(yi, yj, self.label_range)

    def __iter__(self) -> Iterator[PreferencePair]:
        for k in range(self._size):
            i, j = self.indices(k)
            i, j = int(i), int(j)
            yield PreferencePair(i, j, make_label(self.y[i], self.y[j]), pair_weight(self.y[i], self.y[j], self.label_range))

    def epoch_order(self, rng: np.random.Generator) -> np.ndarray | Iterator[np.ndarray]:
        """A shuffled visiting order of all flat indices for one epoch."""
        if self._size <= FULL_SHUFFLE_LIMIT:
            return rng.permutation(self._size)
        return self._blocked_order(rng)

    def _blocked_order(self, rng):
        n_blocks = -(-self._size // SHUFFLE_BLOCK)
        for b in rng.permutation(n_blocks):
            lo = int(b) * SHUFFLE_BLOCK
            hi = min(lo + SHUFFLE_BLOCK, self._size)
            yield lo + rng.permutation(hi - lo)

    def iter_batches(self, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
        order = self.epoch_order(rng)
        chunks = [order] if isinstance(order, np.ndarray) else order
        carry = np.empty(0, dtype=np.int64)
        for chunk in chunks:
            if carry.size:
                chunk = np.concatenate([carry, chunk])
            stop = chunk.size - chunk.size % batch_size
            for lo in range(0, stop, batch_size):
                yield chunk[lo:lo + batch_size]
            carry = chunk[stop:]
        if carry.size:
            yield carry

    def iter_sequential(self, batch_size: int) -> Iterator[np.ndarray]:
        for lo in range(0, self._size, batch_size):
            yield np.arange(lo, min(lo + batch_size, self._size))


def generate_pairs(dataset: Dataset, R: float | None = None, indices=None) -> PairSet:
    """Self-cartesian product (diagonal excluded) over ``indices`` of ``dataset``.

    ``R`` defaults to the label range of the selected rows.
    """
    idx = np.arange(dataset.size) if indices is None else np.asarray(indices, dtype=np.int64)
    if idx.size < 2:
        raise ContractViolationError("pair generation needs at least two samples")
    if R is None:
        R = label_range(dataset.y[idx])
    return PairSet(dataset.y, idx, idx, R, exclude_self=True, source=dataset.name)


def cross_pairs(dataset: Dataset, left, right, R: float) -> PairSet:
    """All ordered pairs (left_k, right_m), e.g. dev samples against training anchors."""
    return PairSet(dataset.y, left, right, R, exclude_self=False, source=dataset.name)
