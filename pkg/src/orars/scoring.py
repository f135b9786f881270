"""Turn pairwise preference posteriors into a score via sorted anchor scores."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import ContractViolationError, InvalidConfigError, InvalidDataError


@dataclass(frozen=True, eq=False)
class AnchorScores:
    """Anchor ground-truth scores in ascending order."""

    sorted_scores: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sorted_scores, dtype=np.float64).reshape(-1)
        if s.size == 0:
            raise InvalidConfigError("the anchor set is empty")
        if np.any(np.diff(s) < 0):
            raise ContractViolationError("anchor scores must be sorted ascending")
        s.setflags(write=False)
        object.__setattr__(self, "sorted_scores", s)

    @classmethod
    def from_labels(cls, labels) -> "AnchorScores":
        return cls(np.sort(np.asarray(labels, dtype=np.float64), kind="stable"))

    def __len__(self) -> int:
        return self.sorted_scores.size


def _as_anchor_scores(anchors) -> AnchorScores:
    return anchors if isinstance(anchors, AnchorScores) else AnchorScores.from_labels(anchors)


def preference_index(total: float, n_anchors: int, legacy_max_index: bool = False) -> int:
    """Index into the sorted anchor scores for a posterior sum ``total``.

    The default clamps ``floor(total)`` into ``[0, n_anchors - 1]``.  With
    ``legacy_max_index`` the index is ``max(n_anchors - 1, floor(total))``
    exactly as printed in the source formula; it is kept only for audits
    and pins almost every prediction to the top anchor.
    """
    k = math.floor(total)
    if legacy_max_index:
        return min(max(n_anchors - 1, k), n_anchors - 1)
    return min(max(k, 0), n_anchors - 1)


def score_with_preference(p, anchors, legacy_max_index: bool = False) -> float:
    """Score of one test sample from its posterior vector against every anchor.

    ``anchors`` is an :class:`AnchorScores` or an unsorted sequence of anchor
    labels.  The posterior order is irrelevant because only the sum is used.
    """
    anchors = _as_anchor_scores(anchors)
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    if p.size != len(anchors):
        raise ContractViolationError(f"{p.size} posteriors for {len(anchors)} anchors")
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise InvalidDataError("posteriors must lie in [0, 1]")
    k = preference_index(math.fsum(p), len(anchors), legacy_max_index)
    return float(anchors.sorted_scores[k])


def score_many(P, anchors, legacy_max_index: bool = False) -> np.ndarray:
    """Row-wise :func:`score_with_preference` for a (n_test, n_anchors) posterior matrix."""
    anchors = _as_anchor_scores(anchors)
    P = np.atleast_2d(np.asarray(P, dtype=np.float64))
    return np.array([score_with_preference(row, anchors, legacy_max_index) for row in P])


def posteriors(classifier, x_t, X_anchors) -> np.ndarray:
    """Preference posteriors of ``x_t`` against each anchor, in anchor order.

    ``classifier`` is either a callable mapping an (m, 2d) array of
    concatenated pairs to m probabilities, or an estimator exposing
    ``predict_proba`` with the positive class in column 1.
    """
    x_t = np.asarray(x_t, dtype=np.float64).reshape(-1)
    X_anchors = np.atleast_2d(np.asarray(X_anchors, dtype=np.float64))
    if X_anchors.shape[0] == 0:
        raise InvalidConfigError("the anchor set is empty")
    if X_anchors.shape[1] != x_t.size:
        raise ContractViolationError(
            f"test sample has {x_t.size} features, anchors have {X_anchors.shape[1]}"
        )
    pairs = np.concatenate([np.broadcast_to(x_t, X_anchors.shape), X_anchors], axis=1)
    if hasattr(classifier, "predict_proba"):
        p = np.asarray(classifier.predict_proba(pairs))
        p = p[:, 1] if p.ndim == 2 else p
    else:
        p = np.asarray(classifier(pairs))
    return np.asarray(p, dtype=np.float64).reshape(-1)


def score_per_rank(posteriors_by_rank: Sequence[Sequence[float]], n_per_rank: int | None = None) -> float:
    """Per-rank anchored score for discrete-rank data.

    Sums the posteriors against every anchor of every rank and divides by
    the anchors-per-rank count.  Every rank must hold the same number of
    anchors.
    """
    groups = [np.asarray(g, dtype=np.float64).reshape(-1) for g in posteriors_by_rank]
    if not groups:
        raise InvalidConfigError("no ranks given")
    sizes = {g.size for g in groups}
    if n_per_rank is None:
        n_per_rank = groups[0].size
    if sizes != {n_per_rank} or n_per_rank < 1:
        raise InvalidConfigError(
            f"every rank needs exactly {n_per_rank} anchors, got sizes {sorted(sizes)}"
        )
    flat = np.concatenate(groups)
    if np.any(flat < 0) or np.any(flat > 1):
        raise InvalidDataError("posteriors must lie in [0, 1]")
    return math.fsum(flat) / n_per_rank
