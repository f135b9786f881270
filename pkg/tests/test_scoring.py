import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from orars.exceptions import ContractViolationError, InvalidConfigError
from orars.scoring import AnchorScores, posteriors, preference_index, score_per_rank, score_with_preference

ANCHORS = [1.0, 2.0, 3.0, 4.0]


@pytest.mark.parametrize(
    "p, expected",
    [([0, 0, 0, 0], 1.0), ([0.9, 0.9, 0.9, 0.9], 4.0), ([1, 1, 1, 1], 4.0)],
)
def test_score_examples(p, expected):
    assert score_with_preference(p, AnchorScores(ANCHORS)) == expected


def test_score_errors():
    with pytest.raises(InvalidConfigError):
        AnchorScores([])
    with pytest.raises(ContractViolationError):
        score_with_preference([0.5], AnchorScores(ANCHORS))


def test_legacy_max_index_pins_top():
    # The printed max() rule returns the top anchor for every posterior vector.
    for p in ([0, 0, 0, 0], [0.5, 0.2, 0.1, 0.0]):
        assert score_with_preference(p, AnchorScores(ANCHORS), legacy_max_index=True) == 4.0
    assert preference_index(1.7, 4) == 1
    assert preference_index(-0.5, 4) == 0


def brute_rank_score(test_score, anchor_scores):
    below = [a for a in anchor_scores if a < test_score]
    ordered = sorted(anchor_scores)
    return ordered[min(len(below), len(ordered) - 1)]


@given(
    st.lists(st.floats(-100, 100), min_size=1, max_size=30, unique=True),
    st.floats(-120, 120),
)
def test_rank_exactness_oracle(anchor_scores, s):
    if s in anchor_scores:
        return
    p = [1.0 if s > a else 0.0 for a in anchor_scores]
    got = score_with_preference(p, anchor_scores)
    assert got == brute_rank_score(s, anchor_scores)
    below = [a for a in anchor_scores if a < s]
    # Floor of the count indexes the anchor just above the largest one below s,
    # which coincides with "largest below" only after the clamp at the top.
    assert got == sorted(anchor_scores)[min(len(below), len(anchor_scores) - 1)]


@given(st.data())
def test_monotonicity_range_and_permutation(data):
    n = data.draw(st.integers(1, 25))
    anchors = data.draw(st.lists(st.floats(-50, 50), min_size=n, max_size=n))
    p = np.array(data.draw(st.lists(st.floats(0, 1), min_size=n, max_size=n)))
    bump = np.array(data.draw(st.lists(st.floats(0, 1), min_size=n, max_size=n)))
    q = np.minimum(p + bump, 1.0)
    a = AnchorScores.from_labels(anchors)
    s_p, s_q = score_with_preference(p, a), score_with_preference(q, a)
    assert s_q >= s_p
    assert min(anchors) <= s_p <= max(anchors)
    perm = np.array(data.draw(st.permutations(range(n))))
    assert score_with_preference(p[perm], np.array(anchors)[perm]) == s_p


def test_posteriors_with_constant_classifier(rng):
    X_a = rng.normal(size=(5, 3))
    x = rng.normal(size=3)
    p = posteriors(lambda pairs: np.full(pairs.shape[0], 0.5), x, X_a)
    assert p.tolist() == [0.5] * 5
    assert posteriors(lambda pairs: pairs[:, 0] * 0 + 0.2, x, X_a[:1]).shape == (1,)


def test_posteriors_pair_layout(rng):
    X_a = rng.normal(size=(4, 2))
    x = rng.normal(size=2)
    seen = {}

    def clf(pairs):
        seen["pairs"] = pairs.copy()
        return np.zeros(len(pairs))

    posteriors(clf, x, X_a)
    np.testing.assert_array_equal(seen["pairs"][:, :2], np.tile(x, (4, 1)))
    np.testing.assert_array_equal(seen["pairs"][:, 2:], X_a)
    with pytest.raises(ContractViolationError):
        posteriors(clf, np.zeros(3), X_a)


@pytest.mark.parametrize(
    "groups, n, expected",
    [([[0, 0]] * 5, 2, 0.0), ([[1, 1]] * 5, 2, 5.0), ([[0.5], [0.5]], 1, 1.0)],
)
def test_score_per_rank(groups, n, expected):
    assert score_per_rank(groups, n) == expected


def test_score_per_rank_unequal():
    with pytest.raises(InvalidConfigError):
        score_per_rank([[0.1, 0.2], [0.3]])
