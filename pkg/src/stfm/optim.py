"""First-order optimizers over a ParamSet."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import GradientSet, ParamSet


@dataclass
class OptimizerState:
    kind: str = "adamw"  # "adamw" | "sgd"
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.05
    warmup_steps: int = 0
    warmup_lr: float = 1e-6
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("adamw", "sgd"):
            raise ValueError(f"unknown optimizer {self.kind!r}")


def current_lr(state: OptimizerState) -> float:
    """Linear ramp from ``warmup_lr`` to ``lr`` over the warm-up steps.

    The ramp never starts above ``lr``, so ``lr=0`` freezes the parameters.
    """
    if state.step < state.warmup_steps:
        start = min(state.warmup_lr, state.lr)
        return start + (state.lr - start) * state.step / state.warmup_steps
    return state.lr


def optimizer_step(params: ParamSet, grads: GradientSet, state: OptimizerState):
    """Update ``params`` in place and return ``(params, state)``.

    Weight decay is decoupled and only touches tensors of rank >= 2.
    """
    lr = current_lr(state)
    state.step += 1
    if state.kind == "sgd":
        for k, p in params.items():
            if state.weight_decay and p.ndim >= 2:
                p -= lr * state.weight_decay * p
            p -= lr * grads[k]
        return params, state
    b1, b2 = state.betas
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {k!r} {p.shape}")
        m = state.m.get(k)
        if m is None:
            m = state.m[k] = np.zeros_like(p)
            state.v[k] = np.zeros_like(p)
        v = state.v[k]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        if state.weight_decay and p.ndim >= 2:
            p -= lr * state.weight_decay * p
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state
