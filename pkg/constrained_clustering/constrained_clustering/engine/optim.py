import logging

import msgspec
import numpy as np

from constrained_clustering import settings
from constrained_clustering.exceptions import MissingGradientError

logger = logging.getLogger(__name__)


class AdamState(msgspec.Struct, eq=False):
    first_moment: list = []
    second_moment: list = []
    step_count: int = 0
    learning_rate: float = settings.LEARNING_RATE
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params, **hyperparams):
        return cls(
            first_moment=[np.zeros_like(param.data) for param in params],
            second_moment=[np.zeros_like(param.data) for param in params],
            **hyperparams,
        )


def adam_step(params, state):
    """
    One Adam update with bias correction, applied to params in place.
    Gradients are read, never cleared; callers zero them between steps.
    """
    params = list(params)
    for index, param in enumerate(params):
        if param.grad is None:
            raise MissingGradientError(
                f"parameter {index} with shape {param.shape} has no gradient"
            )
    if not state.first_moment:
        state.first_moment = [np.zeros_like(param.data) for param in params]
        state.second_moment = [np.zeros_like(param.data) for param in params]

    state.step_count += 1
    bias_correction1 = 1.0 - state.beta1**state.step_count
    bias_correction2 = 1.0 - state.beta2**state.step_count

    for param, m, v in zip(params, state.first_moment, state.second_moment):
        grad = param.grad
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * (grad * grad)
        m_hat = m / bias_correction1
        v_hat = v / bias_correction2
        param.data -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)


class Adam:
    """Binds a parameter list to its AdamState"""

    def __init__(self, params, learning_rate=settings.LEARNING_RATE, **hyperparams):
        self.params = list(params)
        self.state = AdamState.for_params(
            self.params, learning_rate=learning_rate, **hyperparams
        )

    def zero_grad(self):
        for param in self.params:
            param.zero_grad()

    def step(self):
        adam_step(self.params, self.state)
