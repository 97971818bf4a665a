import logging

import msgspec
import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.metrics import normalized_mutual_info_score

from constrained_clustering import settings
from constrained_clustering.exceptions import (
    ClusterCountError,
    DomainError,
    ShapeMismatchError,
)

logger = logging.getLogger(__name__)


class KMeansResult(msgspec.Struct, eq=False):
    centroids: object
    labels: object
    inertia: float
    inertia_history: list = []

    @property
    def k(self):
        return int(self.centroids.shape[0])


class ClusterMetrics(msgspec.Struct):
    acc: float
    nmi: float


def _squared_distances(X, centroids):
    """n x k matrix of exact squared distances, one centroid at a time"""
    distances = np.empty((len(X), len(centroids)))
    for j, centroid in enumerate(centroids):
        diff = X - centroid
        distances[:, j] = np.einsum("ij,ij->i", diff, diff)
    return distances


def _plus_plus_seeds(X, k, rng):
    n = len(X)
    chosen = [int(rng.integers(n))]
    closest = _squared_distances(X, X[chosen])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            index = int(rng.choice(n, p=closest / total))
        else:
            # every point coincides with a chosen seed
            remaining = np.setdiff1d(np.arange(n), chosen)
            index = int(rng.choice(remaining))
        chosen.append(index)
        closest = np.minimum(closest, _squared_distances(X, X[[index]])[:, 0])
    return X[chosen].copy()


def _update_centroids(X, labels, distances, centroids):
    k = len(centroids)
    counts = np.bincount(labels, minlength=k)
    updated = centroids.copy()
    for j in np.flatnonzero(counts):
        updated[j] = X[labels == j].mean(axis=0)

    empty = np.flatnonzero(counts == 0)
    if len(empty):
        own_distance = distances[np.arange(len(X)), labels].copy()
        for j in empty:
            farthest = int(np.argmax(own_distance))
            logger.warning(f"Cluster {j} is empty, reseeding it at point {farthest}")
            updated[j] = X[farthest]
            own_distance[farthest] = -1.0
    return updated


def kmeans(X, k, max_iters=settings.KMEANS_MAX_ITERS, seed=0):
    """
    Lloyd's algorithm from k-means++ seeding.

    Stops when the assignment reaches a fixpoint or after max_iters updates.
    The returned labels are the assignment to the returned centroids and the
    inertia is computed from exactly that pair.

    Args:
        X: n x d array
        k: number of clusters
        max_iters: maximum number of centroid updates
        seed: int or numpy SeedSequence

    Returns:
        KMeansResult
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n = len(X)
    if k < 1 or n < k:
        raise ClusterCountError(f"kmeans needs 1 <= k <= n, got k={k} with n={n}")

    rng = np.random.default_rng(seed)
    centroids = _plus_plus_seeds(X, k, rng)
    distances = _squared_distances(X, centroids)
    labels = np.argmin(distances, axis=1)
    history = [float(distances[np.arange(n), labels].sum())]

    for _ in range(max_iters):
        centroids = _update_centroids(X, labels, distances, centroids)
        distances = _squared_distances(X, centroids)
        new_labels = np.argmin(distances, axis=1)
        history.append(float(distances[np.arange(n), new_labels].sum()))
        converged = np.array_equal(new_labels, labels)
        labels = new_labels
        if converged:
            break

    return KMeansResult(
        centroids=centroids,
        labels=labels,
        inertia=history[-1],
        inertia_history=history,
    )


def best_kmeans(X, k, restarts=settings.KMEANS_RESTARTS, seed=0, max_iters=settings.KMEANS_MAX_ITERS):
    """Best-inertia result over `restarts` runs seeded from children of `seed`"""
    best = None
    for child in np.random.SeedSequence(seed).spawn(max(1, int(restarts))):
        result = kmeans(X, k, max_iters=max_iters, seed=child)
        if best is None or result.inertia < best.inertia:
            best = result
    logger.debug(f"Best of {restarts} k-means restarts: inertia {best.inertia:.6f}")
    return best


def _check_labels(name, pred, truth):
    pred = np.asarray(pred).reshape(-1)
    truth = np.asarray(truth).reshape(-1)
    if pred.shape != truth.shape:
        raise ShapeMismatchError(name, pred.shape, truth.shape)
    if len(pred) == 0:
        raise DomainError(f"{name}: no instances to score")
    return pred, truth


def _contingency(pred, truth):
    pred_ids, pred_index = np.unique(pred, return_inverse=True)
    truth_ids, truth_index = np.unique(truth, return_inverse=True)
    size = max(len(pred_ids), len(truth_ids))
    table = np.zeros((size, size), dtype=np.int64)
    np.add.at(table, (pred_index, truth_index), 1)
    return table, pred_ids, truth_ids


def best_label_mapping(pred, truth):
    """Map each predicted cluster id to its Hungarian-matched truth label (or -1)"""
    pred, truth = _check_labels("best_label_mapping", pred, truth)
    table, pred_ids, truth_ids = _contingency(pred, truth)
    rows, cols = linear_sum_assignment(-table)
    mapping = {}
    for row, col in zip(rows, cols):
        if row < len(pred_ids):
            mapping[pred_ids[row].item()] = truth_ids[col].item() if col < len(truth_ids) else -1
    return mapping


def clustering_accuracy(pred, truth):
    pred, truth = _check_labels("clustering_accuracy", pred, truth)
    table, _, _ = _contingency(pred, truth)
    rows, cols = linear_sum_assignment(-table)
    return float(table[rows, cols].sum() / len(pred))


def nmi(pred, truth):
    """Mutual information over the larger of the two entropies"""
    pred, truth = _check_labels("nmi", pred, truth)
    return float(normalized_mutual_info_score(truth, pred, average_method="max"))


def evaluate_labels(pred, truth):
    return ClusterMetrics(acc=clustering_accuracy(pred, truth), nmi=nmi(pred, truth))
