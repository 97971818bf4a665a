import logging

import msgspec
import numpy as np

from constrained_clustering import settings
from constrained_clustering.engine.tensor import Tensor, normalize_rows
from constrained_clustering.exceptions import ClusterCountError, ShapeMismatchError
from constrained_clustering.metrics import best_kmeans

logger = logging.getLogger(__name__)


class Centroids(msgspec.Struct, eq=False):
    """Trainable k x embedding cluster centres with the fixed Student's t dof v = 1"""

    mu: Tensor
    v: float = 1.0

    def __post_init__(self):
        if not isinstance(self.mu, Tensor):
            self.mu = Tensor(self.mu, requires_grad=True)
        if self.mu.ndim != 2 or self.mu.shape[0] < 1:
            raise ClusterCountError(f"centroids must be a k x d matrix with k >= 1, got {self.mu.shape}")
        if not np.all(np.isfinite(self.mu.data)):
            raise ClusterCountError("centroids contain non-finite values")
        if self.v != 1.0:
            raise ClusterCountError(f"degrees of freedom are fixed at 1, got {self.v}")

    @property
    def k(self):
        return int(self.mu.shape[0])

    def numpy(self):
        return self.mu.numpy()


def soft_assign(Z, centroids):
    """
    Student's t similarity of each embedded point to each centroid,
    normalized per row. Differentiable in both Z and the centroids.
    """
    Z = Z if isinstance(Z, Tensor) else Tensor(Z)
    mu = centroids.mu if isinstance(centroids, Centroids) else centroids
    mu = mu if isinstance(mu, Tensor) else Tensor(mu)
    if mu.ndim != 2 or mu.shape[0] == 0:
        raise ClusterCountError("soft_assign needs at least one centroid")
    if Z.ndim != 2 or Z.shape[1] != mu.shape[1]:
        raise ShapeMismatchError("soft_assign", Z.shape, mu.shape)

    n, dim = Z.shape
    k = mu.shape[0]
    diff = Z.reshape(n, 1, dim) - mu.reshape(1, k, dim)
    kernel = 1.0 / (1.0 + diff.square().sum(axis=2))
    return normalize_rows(kernel)


def target_distribution(Q):
    """Sharpened targets q^2 / f_j, renormalized per row; a constant, no tape"""
    Q = Q.data if isinstance(Q, Tensor) else np.asarray(Q, dtype=np.float64)
    weight = Q**2 / Q.sum(axis=0)
    return weight / weight.sum(axis=1, keepdims=True)


def clustering_loss(P, Q, reduction="sum"):
    """KL(P || Q) with 0 log 0 := 0 and Q clamped at LOG_CLAMP_FLOOR"""
    P = P.data if isinstance(P, Tensor) else np.asarray(P, dtype=np.float64)
    Q = Q if isinstance(Q, Tensor) else Tensor(Q)
    if P.shape != Q.shape:
        raise ShapeMismatchError("clustering_loss", P.shape, Q.shape)

    positive = P > 0
    entropy_term = float(np.sum(P[positive] * np.log(P[positive])))
    cross_term = (Tensor(P) * Q.clamp_min(settings.LOG_CLAMP_FLOOR).log()).sum()
    loss = entropy_term - cross_term
    if reduction == "mean":
        return loss / float(max(P.shape[0], 1))
    return loss


def hard_assign(Q):
    """Row-wise argmax, ties to the lowest cluster index"""
    Q = Q.data if isinstance(Q, Tensor) else np.asarray(Q)
    return np.argmax(Q, axis=1)


def init_centroids(Z, k, restarts=settings.KMEANS_RESTARTS, seed=0):
    Z = np.asarray(Z.data if isinstance(Z, Tensor) else Z, dtype=np.float64)
    if k < 1 or len(Z) < k:
        raise ClusterCountError(f"cannot initialize {k} centroids from {len(Z)} points")
    result = best_kmeans(Z, k, restarts=restarts, seed=seed)
    logger.info(f"Initialized {k} centroids from {restarts} k-means restarts, inertia {result.inertia:.4f}")
    return Centroids(mu=Tensor(result.centroids, requires_grad=True))
