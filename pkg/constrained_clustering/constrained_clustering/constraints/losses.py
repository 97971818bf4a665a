"""
Differentiable constraint losses over a soft assignment Q.

Every loss takes Q as a Tensor (n x k, rows summing to one) and returns a
scalar Tensor. Pairwise and triplet losses are sums over constraint
examples; pass reduction="mean" to divide by the number of rows instead.
Logs are taken of values clamped into [LOG_CLAMP_FLOOR, 1].
"""

import logging
import warnings

import numpy as np

from constrained_clustering import settings
from constrained_clustering.constraints.sets import CardinalitySpec, PairwiseSet, TripletSet
from constrained_clustering.engine.tensor import Tensor
from constrained_clustering.exceptions import (
    ConstraintError,
    EmptyConstraintError,
    ShapeMismatchError,
    UndersizedBatchWarning,
)

logger = logging.getLogger(__name__)


def _as_tensor(Q):
    return Q if isinstance(Q, Tensor) else Tensor(Q)


def _reduce(loss, Q, reduction):
    if reduction == "sum":
        return loss
    if reduction == "mean":
        return loss / float(max(Q.shape[0], 1))
    raise ConstraintError(f"unknown reduction {reduction!r}")


def _pairs(pairs, name):
    if isinstance(pairs, PairwiseSet):
        raise ConstraintError(f"{name} takes an index array, use pairwise.ml_array or cl_array")
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) == 0:
        raise EmptyConstraintError(f"{name} needs at least one pair")
    return pairs


def assignment_similarity(q_a, q_b):
    """Dot product of two assignment rows; a float for arrays, a Tensor otherwise"""
    if not isinstance(q_a, Tensor) and not isinstance(q_b, Tensor):
        return float(np.dot(np.asarray(q_a, dtype=np.float64), np.asarray(q_b, dtype=np.float64)))
    return (_as_tensor(q_a) * _as_tensor(q_b)).sum(axis=-1)


def pair_similarity(Q, left, right):
    Q = _as_tensor(Q)
    return assignment_similarity(Q.take_rows(left), Q.take_rows(right))


def must_link_loss(Q, must_links, reduction="sum"):
    pairs = _pairs(must_links, "must_link_loss")
    similarity = pair_similarity(Q, pairs[:, 0], pairs[:, 1])
    clamped = similarity.clamp_min(settings.LOG_CLAMP_FLOOR).clamp_max(1.0)
    return _reduce(-clamped.log().sum(), _as_tensor(Q), reduction)


def cannot_link_loss(Q, cannot_links, reduction="sum"):
    pairs = _pairs(cannot_links, "cannot_link_loss")
    similarity = pair_similarity(Q, pairs[:, 0], pairs[:, 1])
    clamped = (1.0 - similarity).clamp_min(settings.LOG_CLAMP_FLOOR).clamp_max(1.0)
    return _reduce(-clamped.log().sum(), _as_tensor(Q), reduction)


def instance_difficulty_loss(Q, M, literal=False, reduction="sum"):
    """
    Weighted assignment confidence sum_j q_ij^2 per instance.

    Default: difficult instances (M < 0) pay |M| times their confidence and
    easy ones (M > 0) earn M times theirs. literal=True weights every
    instance by -|M|, which rewards confidence on difficult instances too.
    """
    Q = _as_tensor(Q)
    M = np.asarray(M.values if hasattr(M, "values") else M, dtype=np.float64)
    if M.shape != (Q.shape[0],):
        raise ShapeMismatchError("instance_difficulty_loss", M.shape, (Q.shape[0],))
    weights = -np.abs(M) if literal else -M
    confidence = Q.square().sum(axis=1)
    return _reduce((Tensor(weights) * confidence).sum(), Q, reduction)


def triplet_loss(Q, triplets, margin=None, reduction="sum"):
    """Hinge on d(a, n) - d(a, p) + margin with d the assignment similarity"""
    if isinstance(triplets, TripletSet):
        margin = triplets.margin if margin is None else margin
        triplets = triplets.array
    margin = settings.TRIPLET_MARGIN if margin is None else float(margin)
    if not margin > 0:
        raise ConstraintError(f"triplet margin must be positive, got {margin}")
    triples = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
    if len(triples) == 0:
        raise EmptyConstraintError("triplet_loss needs at least one triplet")

    Q = _as_tensor(Q)
    positive = pair_similarity(Q, triples[:, 0], triples[:, 1])
    negative = pair_similarity(Q, triples[:, 0], triples[:, 2])
    return _reduce((negative - positive + margin).clamp_min(0.0).sum(), Q, reduction)


def global_size_loss(Q, k=None):
    """Squared gap between each cluster's mean assignment and 1/k"""
    Q = _as_tensor(Q)
    n, width = Q.shape
    k = width if k is None else int(k)
    if k != width:
        raise ShapeMismatchError("global_size_loss", Q.shape, (n, k))
    if n < k:
        message = f"global size loss over {n} rows with k={k} is not meaningful"
        logger.warning(message)
        warnings.warn(message, UndersizedBatchWarning, stacklevel=2)
    return (Q.mean(axis=0) - 1.0 / k).square().sum()


def _group_mass(Q, mask):
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (Q.shape[0],):
        raise ShapeMismatchError("cardinality mask", mask.shape, (Q.shape[0],))
    return (Tensor(mask.astype(np.float64)[:, None]) * Q).sum(axis=0)


def cardinality_equality_loss(Q, group_masks):
    """Per-cluster squared difference of the two groups' batch-normalized mass"""
    Q = _as_tensor(Q)
    masks = list(group_masks.values()) if isinstance(group_masks, dict) else list(group_masks)
    if len(masks) != 2:
        raise ConstraintError(f"cardinality equality needs two groups, got {len(masks)}")
    first, second = (np.asarray(mask, dtype=bool) for mask in masks)
    if np.any(first & second):
        raise ConstraintError("cardinality groups overlap")
    n = float(Q.shape[0])
    gap = _group_mass(Q, first) / n - _group_mass(Q, second) / n
    return gap.square().sum()


def cardinality_bound_loss(Q, mask, lower, upper):
    """Squared shortfall below `lower` plus squared excess above `upper`, per cluster"""
    if lower > upper:
        raise ConstraintError(f"lower bound {lower} exceeds upper bound {upper}")
    mass = _group_mass(_as_tensor(Q), mask)
    below = (mass - float(lower)).clamp_max(0.0).square()
    above = (mass - float(upper)).clamp_min(0.0).square()
    return (below + above).sum()


def scale_bounds(lower, upper, batch_size, dataset_size):
    """Rescale dataset-level count bounds to a batch of `batch_size` rows"""
    ratio = float(batch_size) / float(dataset_size)
    return lower * ratio, upper * ratio


def cardinality_loss(Q, spec, rows):
    """Loss of one CardinalitySpec on the batch made of dataset rows `rows`"""
    if not isinstance(spec, CardinalitySpec):
        raise ConstraintError(f"expected a CardinalitySpec, got {type(spec).__name__}")
    masks = spec.batch_masks(rows)
    if spec.mode == "equality":
        return cardinality_equality_loss(Q, masks)
    lower, upper = scale_bounds(spec.lower, spec.upper, len(rows), spec.dataset_size)
    return cardinality_bound_loss(Q, masks[0], lower, upper)
