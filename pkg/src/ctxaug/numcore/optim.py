"""Adam with bias correction and global-norm gradient clipping."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import TrainingError


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, **hyper):
        state = cls(**hyper)
        state.m = [np.zeros_like(np.asarray(p)) for p in params]
        state.v = [np.zeros_like(np.asarray(p)) for p in params]
        return state


def clip_global_norm(grads, max_norm):
    """Scale ``grads`` so their joint L2 norm is at most ``max_norm``; returns (grads, norm)."""
    norm = float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads)))
    if max_norm is None or norm <= max_norm:
        return grads, norm
    scale = max_norm / (norm + 1e-12)
    return [g * np.asarray(scale, dtype=g.dtype) for g in grads], norm


def adam_step(params, grads, state: AdamState):
    """One Adam update applied in place to the arrays in ``params``.

    Raises :class:`TrainingError` without touching anything if a gradient is
    not finite.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state disagree in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingError("non-finite gradient; optimizer step aborted")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**state.t
    corr2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        step = state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
        p -= step.astype(p.dtype, copy=False)
    return params, state


class Adam:
    """Adam over a list of :class:`Tensor` parameters, optionally clipping first."""

    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8, clip_norm=5.0):
        self.params = list(params)
        self.clip_norm = clip_norm
        self.state = AdamState.for_params(
            [p.data for p in self.params], lr=lr, beta1=beta1, beta2=beta2, eps=eps
        )

    def step(self):
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise TrainingError("non-finite gradient; optimizer step aborted")
        grads, norm = clip_global_norm(grads, self.clip_norm)
        adam_step([p.data for p in self.params], grads, self.state)
        return norm
