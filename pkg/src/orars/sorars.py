"""Simplified ORARS: preferences decided by comparing a regressor's outputs."""

from __future__ import annotations

import numpy as np

from .scoring import AnchorScores, score_many, score_with_preference


def _evaluate(f, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    out = f.predict(X) if hasattr(f, "predict") else f(X)
    return np.asarray(out, dtype=np.float64).reshape(-1)


def rule_g(f, x_t, x_a) -> int:
    """1 when the regressor scores ``x_t`` strictly above ``x_a``, else 0."""
    s_t, s_a = _evaluate(f, np.stack([np.asarray(x_t, float), np.asarray(x_a, float)]))
    return 1 if s_t > s_a else 0


def rule_posteriors(test_outputs, anchor_outputs) -> np.ndarray:
    """0/1 preference matrix (n_test, n_anchors) from precomputed regressor outputs."""
    t = np.asarray(test_outputs, dtype=np.float64).reshape(-1, 1)
    a = np.asarray(anchor_outputs, dtype=np.float64).reshape(1, -1)
    return (t > a).astype(np.float64)


def sorars_predict(f, x_t, X_anchors, y_anchors, legacy_max_index: bool = False) -> float:
    p = rule_posteriors(_evaluate(f, x_t), _evaluate(f, X_anchors))[0]
    return score_with_preference(p, AnchorScores.from_labels(y_anchors), legacy_max_index)


def sorars_predict_many(f, X_test, X_anchors, y_anchors, legacy_max_index: bool = False,
                        anchor_outputs=None) -> np.ndarray:
    """Rescore many test samples; ``f`` runs once per anchor and once per test sample."""
    if anchor_outputs is None:
        anchor_outputs = _evaluate(f, X_anchors)
    test_outputs = _evaluate(f, X_test)
    anchors = AnchorScores.from_labels(y_anchors)
    # Only the count of anchors below each test output matters, so a sorted
    # search replaces the dense 0/1 matrix for large anchor sets.
    if len(anchors) * test_outputs.size > 4_000_000:
        counts = np.searchsorted(np.sort(anchor_outputs), test_outputs, side="left")
        n = len(anchors)
        if legacy_max_index:
            return np.full(test_outputs.size, anchors.sorted_scores[n - 1])
        return anchors.sorted_scores[np.clip(counts, 0, n - 1)]
    return score_many(rule_posteriors(test_outputs, anchor_outputs), anchors, legacy_max_index)
