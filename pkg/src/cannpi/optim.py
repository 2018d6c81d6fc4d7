"""Adam with global gradient-norm clipping."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = 1.0
    step: int = 0
    m: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)
    v: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)


def global_norm(grads) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_gradients(grads, clip_norm: float | None):
    """Scale all gradients by min(1, clip_norm / global_norm)."""
    norm = global_norm(grads)
    if clip_norm is None or norm <= clip_norm:
        return grads, 1.0
    scale = clip_norm / norm
    return OrderedDict((k, g * scale) for k, g in grads.items()), scale


def adam_step(opt: OptimizerState, params, grads) -> float:
    """Update ``params`` (a name -> array mapping) in place; returns the clip scale."""
    grads, scale = clip_gradients(grads, opt.clip_norm)
    opt.step += 1
    bc1 = 1.0 - opt.beta1**opt.step
    bc2 = 1.0 - opt.beta2**opt.step
    for name, g in grads.items():
        if name not in opt.m:
            opt.m[name] = np.zeros_like(params[name])
            opt.v[name] = np.zeros_like(params[name])
        m, v = opt.m[name], opt.v[name]
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * (g * g)
        params[name] -= opt.lr * (m / bc1) / (np.sqrt(v / bc2) + opt.eps)
    return scale
