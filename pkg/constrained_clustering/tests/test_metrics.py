import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from constrained_clustering.exceptions import ClusterCountError, DomainError, ShapeMismatchError
from constrained_clustering.metrics import (
    best_kmeans,
    best_label_mapping,
    clustering_accuracy,
    evaluate_labels,
    kmeans,
    nmi,
)

labelings = st.lists(st.integers(min_value=0, max_value=4), min_size=2, max_size=12)


def _two_blobs_1d(rng):
    return np.concatenate([rng.normal(0.0, 0.1, 50), rng.normal(10.0, 0.1, 50)])[:, None]


def test_kmeans_with_one_cluster_per_point_has_zero_inertia(rng):
    X = rng.standard_normal((6, 2))
    result = kmeans(X, 6, seed=0)
    assert result.inertia == pytest.approx(0.0)
    assert sorted(result.labels.tolist()) == list(range(6))


def test_kmeans_recovers_separated_blobs(rng):
    result = best_kmeans(_two_blobs_1d(rng), 2, restarts=5, seed=0)
    np.testing.assert_allclose(np.sort(result.centroids[:, 0]), [0.0, 10.0], atol=0.1)
    assert result.k == 2


def test_kmeans_inertia_never_increases(rng):
    X = rng.standard_normal((200, 3))
    history = kmeans(X, 5, seed=3).inertia_history
    assert all(later <= earlier + 1e-9 for earlier, later in zip(history, history[1:]))


def test_kmeans_is_deterministic_and_restarts_help(rng):
    X = rng.standard_normal((120, 2))
    first = kmeans(X, 4, seed=7)
    np.testing.assert_array_equal(first.labels, kmeans(X, 4, seed=7).labels)
    best = best_kmeans(X, 4, restarts=10, seed=7)
    single = kmeans(X, 4, seed=np.random.SeedSequence(7).spawn(1)[0])
    assert best.inertia <= single.inertia


def test_kmeans_rejects_bad_cluster_counts(rng):
    with pytest.raises(ClusterCountError):
        kmeans(rng.standard_normal((3, 2)), 4)
    with pytest.raises(ClusterCountError):
        kmeans(rng.standard_normal((3, 2)), 0)


def test_accuracy_examples():
    assert clustering_accuracy([1, 1, 0, 0], [0, 0, 1, 1]) == 1.0
    assert clustering_accuracy([0, 0, 1, 1], [0, 0, 0, 1]) == 0.75
    assert clustering_accuracy([0, 1, 2], [0, 0, 0]) == pytest.approx(1 / 3)


def test_accuracy_and_nmi_reject_bad_input():
    with pytest.raises(ShapeMismatchError):
        clustering_accuracy([0, 1], [0, 1, 1])
    with pytest.raises(ShapeMismatchError):
        nmi([0, 1], [0])
    with pytest.raises(DomainError):
        clustering_accuracy([], [])


@pytest.mark.parametrize("seed", range(20))
def test_accuracy_matches_brute_force_over_permutations(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 6))
    pred = rng.integers(0, k, size=30)
    truth = rng.integers(0, k, size=30)
    brute = max(
        np.mean(np.array(permutation)[pred] == truth) for permutation in itertools.permutations(range(k))
    )
    assert clustering_accuracy(pred, truth) == pytest.approx(brute)


@given(labelings, st.permutations(range(5)))
@settings(max_examples=40, deadline=None)
def test_scores_ignore_cluster_names(labels, permutation):
    labels = np.array(labels)
    renamed = np.array(permutation)[labels]
    assert clustering_accuracy(renamed, labels) == 1.0
    assert nmi(renamed, labels) == pytest.approx(nmi(labels, labels))


def test_nmi_examples():
    assert nmi([0, 0, 1, 1], [1, 1, 0, 0]) == pytest.approx(1.0)
    assert nmi([0, 1, 0, 1], [0, 0, 1, 1]) == pytest.approx(0.0, abs=1e-12)
    pred, truth = [0, 0, 1, 1, 2], [0, 1, 1, 1, 2]
    assert nmi(pred, truth) == pytest.approx(nmi(truth, pred))


def test_best_label_mapping_and_evaluate_labels():
    assert best_label_mapping([5, 5, 7], [1, 1, 0]) == {5: 1, 7: 0}
    # unmatched extra cluster maps to -1
    mapping = best_label_mapping([0, 1, 2, 2], [3, 3, 4, 4])
    assert mapping[2] == 4 and sorted(mapping.values()) == [-1, 3, 4]

    scores = evaluate_labels([0, 0, 1, 1], [1, 1, 0, 0])
    assert scores.acc == 1.0
    assert scores.nmi == pytest.approx(1.0)
