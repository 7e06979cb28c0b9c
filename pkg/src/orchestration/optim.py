"""In-place gradient updates for named parameter tables."""

from typing import Protocol

import numpy as np

from ..numerics import Matrix


class Optimizer(Protocol):
    def step(self, params: dict[str, Matrix], grads: dict[str, Matrix]) -> None: ...


class Sgd:
    """``p <- p - eta * g``."""

    def __init__(self, eta: float) -> None:
        self.eta = eta

    def step(self, params: dict[str, Matrix], grads: dict[str, Matrix]) -> None:
        for name, grad in grads.items():
            params[name] -= (self.eta * grad).astype(params[name].dtype, copy=False)


class Adam:
    """Adam with bias correction."""

    def __init__(self, eta: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
        self.eta = eta
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.steps = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, Matrix], grads: dict[str, Matrix]) -> None:
        self.steps += 1
        correction1 = 1.0 - self.beta1 ** self.steps
        correction2 = 1.0 - self.beta2 ** self.steps
        for name, grad in grads.items():
            g = grad.astype(np.float64, copy=False)
            m = self._m.get(name, np.zeros_like(g))
            v = self._v.get(name, np.zeros_like(g))
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * g * g
            self._m[name], self._v[name] = m, v
            update = self.eta * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            params[name] -= update.astype(params[name].dtype, copy=False)


def make_optimizer(name: str, eta: float) -> Optimizer:
    if name == "adam":
        return Adam(eta)
    if name == "sgd":
        return Sgd(eta)
    raise ValueError(f"unknown optimizer {name!r}")
