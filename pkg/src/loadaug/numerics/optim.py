from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: tuple = field(default=(), repr=False)
    v: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("Adam betas must lie in (0, 1)")
        if self.lr <= 0 or self.eps <= 0:
            raise ValueError("learning rate and eps must be positive")
        if self.step < 0:
            raise ValueError("step counter must be non-negative")

    @classmethod
    def init(cls, params: Sequence[np.ndarray], **hyper) -> "AdamState":
        zeros = tuple(np.zeros_like(p, dtype=np.float64) for p in params)
        return cls(m=zeros, v=tuple(z.copy() for z in zeros), **hyper)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState):
    """One bias-corrected Adam update. Returns ``(new_params, new_state)``;
    inputs are not modified."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state differ in length")
    t = state.step + 1
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.shape or m.shape != p.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient")
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        p = p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_p.append(p)
        new_m.append(m)
        new_v.append(v)
    return new_p, replace(state, step=t, m=tuple(new_m), v=tuple(new_v))


class Adam:
    """Keeps a named parameter dict and its Adam state together."""

    def __init__(self, params: dict[str, np.ndarray], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.names = list(params)
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
        self.state = AdamState.init(
            [self.params[k] for k in self.names], lr=lr, beta1=beta1, beta2=beta2, eps=eps
        )

    def step(self, grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        new, self.state = adam_step(
            [self.params[k] for k in self.names], [grads[k] for k in self.names], self.state
        )
        self.params = dict(zip(self.names, new))
        return self.params
