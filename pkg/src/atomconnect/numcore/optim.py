"""AdamW with global-norm clipping, linear warmup and optional cosine decay."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .tensor import DiffArray


@dataclass
class OptimizerState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    warmup_steps: int = 0
    decay_steps: int = 0  # 0 keeps lr constant after warmup
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def current_lr(self, step: int | None = None) -> float:
        """Learning rate applied at update number ``step`` (1-based)."""
        s = self.step if step is None else step
        if self.warmup_steps > 0 and s < self.warmup_steps:
            return self.lr * s / self.warmup_steps
        if self.decay_steps > 0:
            frac = min(max(s - self.warmup_steps, 0) / self.decay_steps, 1.0)
            return self.lr * 0.5 * (1.0 + np.cos(np.pi * frac))
        return self.lr


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))


def optimizer_step(
    state: OptimizerState,
    params: Mapping[str, DiffArray],
    grads: Mapping[str, np.ndarray] | None = None,
    clip_norm: float = 1.0,
) -> dict[str, float]:
    """One AdamW update in place. Returns ``{"grad_norm", "lr", "clipped"}``.

    ``grads`` defaults to each parameter's ``.grad`` (missing grads count as
    zero). Gradients are rescaled by clip_norm / norm when the global norm
    exceeds ``clip_norm``.
    """
    if clip_norm <= 0:
        raise ValueError("clip_norm must be positive")
    if grads is None:
        grads = {k: (p.grad if p.grad is not None else np.zeros_like(p.data))
                 for k, p in params.items()}
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise FloatingPointError(f"non-finite gradient for parameter {name}")
    norm = global_norm(grads)
    scale = clip_norm / norm if norm > clip_norm else 1.0

    state.step += 1
    t = state.step
    lr = state.current_lr(t)
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for name, p in params.items():
        g = grads.get(name)
        g = np.zeros_like(p.data) if g is None else g * scale
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if state.weight_decay:
            p.data *= 1.0 - lr * state.weight_decay
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return {"grad_norm": norm, "lr": lr, "clipped": scale < 1.0}
