"""Adaptive-moment optimizer with bias correction.

Moment buffers live in the ParamStore so they serialize with the checkpoint.
A step with any non-finite gradient is rejected without touching parameters,
moments or the step counter.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericsError
from .nets import ParamStore

DEFAULT_LR = 3e-4
DEFAULT_BETA1 = 0.9
DEFAULT_BETA2 = 0.999
DEFAULT_EPS_HAT = 1e-8


def optimizer_step(
    store: ParamStore,
    grads: dict[str, np.ndarray],
    lr: float = DEFAULT_LR,
    beta1: float = DEFAULT_BETA1,
    beta2: float = DEFAULT_BETA2,
    eps_hat: float = DEFAULT_EPS_HAT,
) -> None:
    """One adaptive-moment update over every parameter in the store."""
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    for name in store.params:
        if name not in grads:
            raise KeyError(f"missing gradient for parameter '{name}'")
        if not np.all(np.isfinite(grads[name])):
            raise NumericsError(f"non-finite gradient for parameter '{name}'; step rejected")
    t = store.step + 1
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    # stage the whole update, validate, then commit, so a rejected step leaves
    # parameters and moments untouched
    staged: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
    with np.errstate(over="ignore", invalid="ignore"):
        for name, param in store.params.items():
            g = grads[name]
            m = beta1 * store.m[name] + (1.0 - beta1) * g
            v = beta2 * store.v[name] + (1.0 - beta2) * g * g
            new_param = param.data - lr * ((m / c1) / (np.sqrt(v / c2) + eps_hat))
            if not (np.all(np.isfinite(new_param)) and np.all(np.isfinite(v))):
                raise NumericsError(
                    f"non-finite update for parameter '{name}'; step rejected"
                )
            staged[name] = (m, v, new_param)
    for name, param in store.params.items():
        m, v, new_param = staged[name]
        store.m[name] = m
        store.v[name] = v
        param.data = new_param
    store.step = t


class Adam:
    """Stateful wrapper binding hyperparameters to a ParamStore."""

    def __init__(self, store: ParamStore, lr: float = DEFAULT_LR,
                 beta1: float = DEFAULT_BETA1, beta2: float = DEFAULT_BETA2,
                 eps_hat: float = DEFAULT_EPS_HAT):
        self.store = store
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps_hat = eps_hat

    def step(self, grads: dict[str, np.ndarray]) -> None:
        optimizer_step(self.store, grads, self.lr, self.beta1, self.beta2, self.eps_hat)
