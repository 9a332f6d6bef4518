from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np
from autograd.tracer import getval

from metameta.errors import ConfigError
from metameta.numerics.params import ParamSet


@dataclass(frozen=True, eq=False)
class AdamState:
    step_count: int
    first_moment: ParamSet
    second_moment: ParamSet
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0

    def __post_init__(self) -> None:
        if self.step_count < 0:
            raise ConfigError("step_count must be >= 0")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("Adam betas must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ConfigError("Adam epsilon must be > 0")
        if self.learning_rate <= 0:
            raise ConfigError("Adam learning rate must be > 0")
        if self.weight_decay < 0:
            raise ConfigError("weight decay must be >= 0")
        self.first_moment.require_congruent(self.second_moment, "Adam moments")


def adam_init(
    params: ParamSet,
    learning_rate: float = 1e-3,
    *,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
    weight_decay: float = 0.0,
) -> AdamState:
    return AdamState(
        step_count=0,
        first_moment=params.zeros_like(),
        second_moment=params.zeros_like(),
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
        weight_decay=weight_decay,
    )


def adam_step(
    state: AdamState, params: ParamSet, grads: ParamSet
) -> Tuple[AdamState, ParamSet]:
    """
    One bias-corrected Adam update. Pure: inputs are never modified.
    """
    params.require_congruent(grads, "gradient")
    params.require_congruent(state.first_moment, "Adam state")

    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t

    new_m, new_v, new_p = [], [], []
    for p, g, m, v in zip(
        params.arrays, grads.arrays, state.first_moment.arrays, state.second_moment.arrays
    ):
        p = np.asarray(getval(p), dtype=np.float64)
        g = np.asarray(getval(g), dtype=np.float64)
        if state.weight_decay:
            g = g + state.weight_decay * p
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_p.append(p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon))
        new_m.append(m)
        new_v.append(v)

    new_state = replace(
        state,
        step_count=t,
        first_moment=state.first_moment.with_arrays(new_m),
        second_moment=state.second_moment.with_arrays(new_v),
    )
    return new_state, params.with_arrays(new_p)
