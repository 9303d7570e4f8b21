"""Adam / SGD updates and learning-rate schedules."""

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state, lr):
    """One bias-corrected Adam update, applied to ``params`` (name -> Tensor).

    ``grads`` maps names to gradient arrays; missing entries count as zero.
    Weight decay, when nonzero, is the L2 (coupled) form.
    """
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if state.weight_decay:
            g = g + state.weight_decay * p.data
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[name] = m
        state.v[name] = v
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass
class SGDState:
    momentum: float = 0.9
    weight_decay: float = 0.0
    step: int = 0
    buf: dict = field(default_factory=dict)


def sgd_step(params, grads, state, lr):
    state.step += 1
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if state.weight_decay:
            g = g + state.weight_decay * p.data
        b = state.buf.get(name)
        b = g if b is None else state.momentum * b + g
        state.buf[name] = b
        p.data = p.data - lr * b


STEP_MILESTONES = (0.5, 0.75)
STEP_GAMMA = 0.1


def lr_schedule(step, total_steps, base_lr, warmup_steps=0, kind="cosine"):
    """Learning rate at update ``step`` (0-based).

    Linear warm-up from 0 to ``base_lr`` over ``warmup_steps``, then:

    * ``cosine``: ``base_lr * (1 + cos(pi * t)) / 2`` with ``t`` the
      post-warm-up progress, reaching 0 at ``step == total_steps``;
    * ``step``: multiply by 0.1 at 50% and 75% of the post-warm-up span;
    * ``constant``: hold ``base_lr``.
    """
    if step < warmup_steps:
        return base_lr * step / warmup_steps
    span = max(total_steps - warmup_steps, 1)
    t = min(max((step - warmup_steps) / span, 0.0), 1.0)
    if kind == "cosine":
        return base_lr * 0.5 * (1.0 + math.cos(math.pi * t))
    if kind == "step":
        return base_lr * STEP_GAMMA ** sum(t >= m for m in STEP_MILESTONES)
    if kind == "constant":
        return base_lr
    raise ValueError(f"unknown schedule kind {kind!r}")
