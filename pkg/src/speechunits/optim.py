"""Adam with bias correction, global-norm gradient clipping, and the
warmup / hold / decay learning-rate schedule used by the trainer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autograd import Tensor


@dataclass
class OptimState:
    """Per-parameter first/second moments plus the step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-8


def adam_init(params: dict[str, Tensor], beta1: float = 0.9,
              beta2: float = 0.98, eps: float = 1e-8) -> OptimState:
    return OptimState(
        m={name: np.zeros_like(p.data) for name, p in params.items()},
        v={name: np.zeros_like(p.data) for name, p in params.items()},
        step=0, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
              state: OptimState, lr: float) -> None:
    """One bias-corrected Adam update, in place. Missing grads mean zero."""
    if lr < 0:
        raise ValueError(f"negative learning rate {lr}")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.data.shape:
            raise ValueError(
                f"gradient shape {g.shape} != parameter shape {p.data.shape} "
                f"for '{name}'")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(np.float32)


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm.

    Returns the pre-clip norm.
    """
    total = 0.0
    for g in grads.values():
        total += float((g.astype(np.float64) ** 2).sum())
    norm = float(np.sqrt(total))
    if max_norm > 0 and norm > max_norm:
        factor = np.float32(max_norm / (norm + 1e-12))
        for g in grads.values():
            g *= factor
    return norm


@dataclass
class TriStageLR:
    """Linear warmup to peak, hold, then linear decay to final_scale*peak.

    Phase fractions are of total training progress and must sum to 1.
    """

    peak_lr: float
    warmup_frac: float = 0.1
    hold_frac: float = 0.4
    decay_frac: float = 0.5
    init_scale: float = 0.01
    final_scale: float = 0.01

    def __post_init__(self) -> None:
        total = self.warmup_frac + self.hold_frac + self.decay_frac
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"phase fractions sum to {total}, expected 1")
        if min(self.warmup_frac, self.hold_frac, self.decay_frac) < 0:
            raise ValueError("phase fractions must be non-negative")

    def lr(self, progress: float) -> float:
        """Learning rate at training progress in [0, 1]."""
        if not 0.0 <= progress <= 1.0:
            raise ValueError(f"progress {progress} outside [0, 1]")
        if progress < self.warmup_frac:
            t = progress / self.warmup_frac
            return self.peak_lr * (self.init_scale + (1.0 - self.init_scale) * t)
        if progress <= self.warmup_frac + self.hold_frac:
            return self.peak_lr
        if self.decay_frac == 0.0:
            return self.peak_lr * self.final_scale
        t = (progress - self.warmup_frac - self.hold_frac) / self.decay_frac
        return self.peak_lr * (1.0 + (self.final_scale - 1.0) * t)
