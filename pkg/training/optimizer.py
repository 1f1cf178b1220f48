"""Adam with bias correction and decoupled weight decay."""

from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from numerics.tensor import Tensor, check_finite
from training.schema import TrainConfig
from utils.errors import ContractError


@dataclass
class AdamState:
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def zeros(cls, params: Mapping[str, Tensor]) -> "AdamState":
        return cls(
            step=0,
            m={name: np.zeros_like(p.data) for name, p in params.items()},
            v={name: np.zeros_like(p.data) for name, p in params.items()},
        )


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    cfg: TrainConfig,
) -> AdamState:
    """
    One update of every parameter in ``params``:

        m = b1 m + (1 - b1) g;  v = b2 v + (1 - b2) g^2
        p -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps) + lr * wd * p

    Parameter arrays are replaced, never written in place.
    """
    if set(grads) != set(params):
        raise ContractError("gradients and parameters name different tensors")
    beta1, beta2 = cfg.adam_betas
    lr, wd, eps = cfg.learning_rate, cfg.weight_decay, cfg.adam_epsilon
    step = state.step + 1
    correction1 = 1.0 - beta1 ** step
    correction2 = 1.0 - beta2 ** step

    for name, param in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        m = state.m.get(name)
        v = state.v.get(name)
        if g.shape != param.shape or m is None or m.shape != param.shape or v.shape != param.shape:
            raise ContractError(f"{name}: gradient/moment shapes do not match parameter shape {param.shape}")
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        update = lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
        values = param.data - update - lr * wd * param.data
        check_finite(values, f"adam update of {name}")
        param.data = values
        state.m[name] = m
        state.v[name] = v

    state.step = step
    return state
