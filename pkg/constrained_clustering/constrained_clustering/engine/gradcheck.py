import numpy as np

from constrained_clustering.engine.tensor import Tensor


def finite_difference_check(loss_fn, input, h=1e-5, atol=1e-4):
    """
    Compare the tape gradient of loss_fn at `input` against central differences.

    Args:
        loss_fn: callable taking a Tensor and returning a scalar Tensor
        input: Tensor (or array) at which to differentiate
        h: finite-difference step
        atol: absolute scale below which coordinates are compared absolutely

    Returns:
        max over coordinates of |analytic - numeric| / (max(|analytic|, |numeric|) + atol)
    """
    base = np.array(input.data if isinstance(input, Tensor) else input, dtype=np.float64)

    x = Tensor(base, requires_grad=True)
    loss = loss_fn(x)
    loss.backward()
    analytic = np.zeros_like(base) if x.grad is None else x.grad.reshape(base.shape)

    numeric = np.zeros_like(base)
    flat = base.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        upper = loss_fn(Tensor(base)).item()
        flat[i] = original - h
        lower = loss_fn(Tensor(base)).item()
        flat[i] = original
        numeric.reshape(-1)[i] = (upper - lower) / (2.0 * h)

    scale = np.maximum(np.abs(analytic), np.abs(numeric)) + atol
    return float(np.max(np.abs(analytic - numeric) / scale))
