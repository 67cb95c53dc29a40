"""Adam with bias correction, as a functional step plus a grouped optimizer."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from errors import ConfigError, NonFiniteGradientError, ShapeError

from .module import Parameter

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Sequence[tuple[str, Parameter]],
    grads: Sequence[Optional[np.ndarray]],
    state: AdamState,
) -> AdamState:
    """Apply one Adam update in place to ``params`` (name, parameter pairs).

    All gradients are checked before any parameter moves, so a non-finite
    gradient leaves the whole group untouched. A ``None`` gradient counts as
    zero. With ``lr == 0`` the moments advance but parameters stay bitwise
    unchanged.
    """
    if len(params) != len(grads):
        raise ShapeError("adam_step", (len(params),), (len(grads),), detail="one gradient per parameter")
    resolved = []
    for (name, param), grad in zip(params, grads):
        if grad is None:
            grad = np.zeros_like(param.data)
        elif grad.shape != param.shape:
            raise ShapeError("adam_step", grad.shape, param.shape, detail=f"gradient for '{name}'")
        if not np.all(np.isfinite(grad)):
            raise NonFiniteGradientError(name)
        resolved.append((name, param, grad))

    state.t += 1
    bias1 = 1.0 - state.beta1**state.t
    bias2 = 1.0 - state.beta2**state.t
    for name, param, grad in resolved:
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * (grad * grad)
        state.m[name] = m
        state.v[name] = v
        if state.lr == 0:
            continue
        m_hat = m / bias1
        v_hat = v / bias2
        update = state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        param.data = (param.data - update).astype(param.data.dtype, copy=False)
    return state


class Adam:
    """One ``AdamState`` per named parameter group, each with its own learning rate."""

    def __init__(
        self,
        groups: dict[str, Sequence[tuple[str, Parameter]]],
        lrs: dict[str, float],
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        unknown = sorted(set(groups) - set(lrs))
        if unknown:
            raise ConfigError(f"no learning rate for parameter groups {unknown}")
        self.groups = {name: list(params) for name, params in groups.items()}
        self.states = {
            name: AdamState(lr=float(lrs[name]), beta1=beta1, beta2=beta2, eps=eps)
            for name in self.groups
        }

    def zero_grad(self) -> None:
        for params in self.groups.values():
            for _, param in params:
                param.grad = None

    def step(self) -> None:
        for name, params in self.groups.items():
            if not params:
                continue
            adam_step(params, [p.grad for _, p in params], self.states[name])

    def set_lr(self, group: str, lr: float) -> None:
        self.states[group].lr = float(lr)
        logger.debug("Learning rate for group %s set to %g", group, lr)
