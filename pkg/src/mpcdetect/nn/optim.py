"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ParameterError, ShapeError


@dataclass(frozen=True)
class AdamState:
    first_moment: tuple
    second_moment: tuple
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros_like(cls, params, learning_rate=1e-3, **kw):
        if learning_rate < 0:
            raise ParameterError(f"learning rate must be >= 0, got {learning_rate}")
        m = tuple(np.zeros_like(np.asarray(p, dtype=np.float64)) for p in params)
        v = tuple(np.zeros_like(x) for x in m)
        return cls(m, v, 0, learning_rate, **kw)


def adam_apply(params, grads, state: AdamState):
    """One Adam step. Pure: returns ``(new_params, new_state)`` and leaves
    the inputs untouched."""
    if not (len(params) == len(grads) == len(state.first_moment)):
        raise ShapeError(
            f"adam: {len(params)} params, {len(grads)} grads, {len(state.first_moment)} moment slots"
        )
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        p = np.asarray(p, dtype=np.float64)
        g = np.asarray(g, dtype=np.float64)
        if not (p.shape == g.shape == m.shape):
            raise ShapeError(f"adam: param {p.shape}, grad {g.shape}, moment {m.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        m_hat = m / c1
        v_hat = v / c2
        new_p.append(p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon))
        new_m.append(m)
        new_v.append(v)
    return new_p, replace(state, first_moment=tuple(new_m), second_moment=tuple(new_v), step_count=t)


class Adam:
    """Stateful wrapper that applies :func:`adam_apply` to Parameters in place."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.state = AdamState.zeros_like(
            [p.data for p in self.params], lr, beta1=betas[0], beta2=betas[1], epsilon=eps)

    def step(self):
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        new, self.state = adam_apply([p.data for p in self.params], grads, self.state)
        for p, value in zip(self.params, new):
            p.data = value

    def zero_grad(self):
        for p in self.params:
            p.grad = None
