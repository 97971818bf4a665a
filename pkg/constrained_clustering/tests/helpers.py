import numpy as np


def random_assignment(rng, n, k):
    """Strictly positive row-stochastic n x k matrix"""
    weights = rng.uniform(0.05, 1.0, size=(n, k))
    return weights / weights.sum(axis=1, keepdims=True)


def one_hot(labels, k):
    return np.eye(k)[np.asarray(labels)]
