"""Simulated guidance: constraint sets drawn from labels, base-learner mistakes and embedding distances"""

import logging
import math

import numpy as np

from constrained_clustering import settings
from constrained_clustering.constraints.sets import (
    DifficultyVector,
    PairwiseSet,
    TripletSet,
    closure_and_entailment,
)
from constrained_clustering.exceptions import ClusterCountError, ConstraintError
from constrained_clustering.metrics import best_kmeans, best_label_mapping

logger = logging.getLogger(__name__)


def _sample_pairs(n, count, rng):
    total = n * (n - 1) // 2
    if count > total // 2:
        left, right = np.triu_indices(n, 1)
        chosen = np.sort(rng.choice(total, size=count, replace=False))
        return list(zip(left[chosen].tolist(), right[chosen].tolist()))

    seen = set()
    pairs = []
    while len(pairs) < count:
        a, b = (int(i) for i in rng.integers(n, size=2))
        if a == b:
            continue
        pair = (a, b) if a < b else (b, a)
        if pair in seen:
            continue
        seen.add(pair)
        pairs.append(pair)
    return pairs


def gen_pairwise(y, count, seed=0):
    """
    `count` distinct random pairs, must-linked when their labels agree and
    cannot-linked otherwise, then closed under transitivity.
    """
    y = np.asarray(y)
    n = len(y)
    total = n * (n - 1) // 2
    if count < 1:
        raise ConstraintError(f"constraint count must be at least 1, got {count}")
    if count > total:
        raise ConstraintError(f"{count} pairs requested but {n} instances only have {total}")

    rng = np.random.default_rng(seed)
    pairs = _sample_pairs(n, int(count), rng)
    must_links = [(a, b) for a, b in pairs if y[a] == y[b]]
    cannot_links = [(a, b) for a, b in pairs if y[a] != y[b]]
    closed = closure_and_entailment(PairwiseSet.build(must_links, cannot_links))
    logger.info(
        f"Generated {len(must_links)} ML / {len(cannot_links)} CL pairs, "
        f"{len(closed.must_links)} / {len(closed.cannot_links)} after closure"
    )
    return closed


def gen_difficulty(
    X,
    y,
    k,
    seed=0,
    restarts=settings.KMEANS_RESTARTS,
    difficult=settings.DIFFICULT_CONFIDENCE,
    easy=settings.EASY_CONFIDENCE,
):
    """Mark the instances k-means gets wrong (after Hungarian matching) as difficult"""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if len(X) < k:
        raise ClusterCountError(f"cannot run k-means with k={k} on {len(X)} instances")

    result = best_kmeans(X, k, restarts=restarts, seed=seed)
    mapping = best_label_mapping(result.labels, y)
    matched = np.array([mapping[label] for label in result.labels.tolist()])
    M = np.where(matched == y, easy, difficult)
    logger.info(f"Marked {int(np.sum(matched != y))} of {len(y)} instances as difficult")
    return DifficultyVector(M=M.astype(np.float64))


def _pool_size(fraction, candidates):
    return min(candidates, max(1, math.ceil(fraction * (candidates + 1) - 1e-9)))


def gen_triplets(
    Z_ref,
    count,
    pos_frac=settings.TRIPLET_POS_FRAC,
    neg_frac=settings.TRIPLET_NEG_FRAC,
    seed=0,
    margin=settings.TRIPLET_MARGIN,
):
    """
    Triplets (anchor, positive, negative) with the positive drawn from the
    anchor's nearest ceil(pos_frac * n) neighbours in Z_ref and the negative
    from its farthest ceil(neg_frac * n). Anchors whose draw does not give a
    strictly closer positive are skipped and redrawn.
    """
    Z_ref = np.asarray(Z_ref, dtype=np.float64)
    if Z_ref.ndim == 1:
        Z_ref = Z_ref[:, None]
    n = len(Z_ref)
    if n < 3:
        raise ConstraintError(f"triplets need at least 3 instances, got {n}")
    if count < 1:
        raise ConstraintError(f"triplet count must be at least 1, got {count}")
    if pos_frac <= 0 or neg_frac <= 0 or pos_frac + neg_frac > 1:
        raise ConstraintError(f"need 0 < pos_frac, neg_frac and pos_frac + neg_frac <= 1, got {pos_frac}, {neg_frac}")

    rng = np.random.default_rng(seed)
    n_pos = _pool_size(pos_frac, n - 1)
    n_neg = _pool_size(neg_frac, n - 1)

    triples = []
    attempts = 0
    while len(triples) < count and attempts < 10 * count:
        attempts += 1
        anchor = int(rng.integers(n))
        distances = np.linalg.norm(Z_ref - Z_ref[anchor], axis=1)
        others = np.delete(np.arange(n), anchor)
        ranked = others[np.argsort(distances[others], kind="stable")]
        positive = int(rng.choice(ranked[:n_pos]))
        negative = int(rng.choice(ranked[-n_neg:]))
        if not distances[positive] < distances[negative]:
            logger.warning(f"Skipping anchor {anchor}: positive {positive} is not strictly closer than negative {negative}")
            continue
        triples.append((anchor, positive, negative))

    if len(triples) < count:
        logger.warning(f"Generated {len(triples)} of {count} requested triplets")
    return TripletSet.build(triples, margin=margin)
