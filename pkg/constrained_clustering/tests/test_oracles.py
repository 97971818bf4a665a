import numpy as np
import pytest

from constrained_clustering import settings
from constrained_clustering.constraints.oracles import gen_difficulty, gen_pairwise, gen_triplets
from constrained_clustering.datasets import make_blobs
from constrained_clustering.exceptions import ConstraintError


def test_pairwise_oracle_uses_every_pair_when_asked():
    pairwise = gen_pairwise([0, 0, 1], 3, seed=0)
    assert pairwise.must_links == ((0, 1),)
    assert pairwise.cannot_links == ((0, 2), (1, 2))


def test_pairwise_oracle_agrees_with_labels_and_is_deterministic():
    y = np.random.default_rng(4).integers(0, 3, size=60)
    first = gen_pairwise(y, 40, seed=9)
    assert first == gen_pairwise(y, 40, seed=9)
    assert len(first) >= 40
    assert all(y[a] == y[b] for a, b in first.must_links)
    assert all(y[a] != y[b] for a, b in first.cannot_links)


def test_pairwise_oracle_rejects_impossible_counts():
    with pytest.raises(ConstraintError):
        gen_pairwise([0, 1, 0], 4)
    with pytest.raises(ConstraintError):
        gen_pairwise([0, 1, 0], 0)


def test_difficulty_oracle_on_separable_blobs():
    blobs = make_blobs(3, 30, 2, separation=40.0, sigma=1.0, seed=2)
    M = gen_difficulty(blobs.X, blobs.y, 3, seed=0, restarts=5).values
    assert np.all(M == settings.EASY_CONFIDENCE)


def test_difficulty_oracle_flags_the_mislabelled_point():
    rng = np.random.default_rng(0)
    X = np.concatenate([rng.normal(0.0, 0.1, 20), rng.normal(10.0, 0.1, 20), [0.05]])[:, None]
    y = np.array([0] * 20 + [1] * 20 + [1])
    M = gen_difficulty(X, y, 2, seed=0, restarts=5).values
    assert M[-1] == settings.DIFFICULT_CONFIDENCE
    assert np.all(M[:-1] == settings.EASY_CONFIDENCE)
    assert set(M.tolist()) <= {settings.EASY_CONFIDENCE, settings.DIFFICULT_CONFIDENCE}


def test_triplet_oracle_on_three_points():
    expected = {0: (0, 1, 2), 1: (1, 0, 2), 2: (2, 1, 0)}
    triplets = gen_triplets(np.array([0.0, 1.0, 10.0]), 6, pos_frac=1 / 3, neg_frac=1 / 3, seed=0)
    assert len(triplets) == 6
    for triple in triplets.triples:
        assert triple == expected[triple[0]]


def test_triplet_positive_is_closer_than_negative(rng):
    Z = rng.standard_normal((50, 3))
    triplets = gen_triplets(Z, 30, seed=1)
    assert triplets.triples == gen_triplets(Z, 30, seed=1).triples
    for anchor, positive, negative in triplets.triples:
        assert np.linalg.norm(Z[anchor] - Z[positive]) < np.linalg.norm(Z[anchor] - Z[negative])


def test_triplet_oracle_errors():
    with pytest.raises(ConstraintError):
        gen_triplets(np.zeros((2, 2)), 1)
    with pytest.raises(ConstraintError):
        gen_triplets(np.zeros((5, 2)), 0)
    with pytest.raises(ConstraintError):
        gen_triplets(np.zeros((5, 2)), 1, pos_frac=0.7, neg_frac=0.7)
