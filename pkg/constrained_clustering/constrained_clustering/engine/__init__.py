from constrained_clustering.engine.gradcheck import finite_difference_check
from constrained_clustering.engine.optim import Adam, AdamState, adam_step
from constrained_clustering.engine.tensor import (
    Graph,
    Tensor,
    backward,
    concatenate,
    matmul,
    no_grad,
    normalize_rows,
    zero_grad,
)

__all__ = [
    "Adam",
    "AdamState",
    "Graph",
    "Tensor",
    "adam_step",
    "backward",
    "concatenate",
    "finite_difference_check",
    "matmul",
    "no_grad",
    "normalize_rows",
    "zero_grad",
]
