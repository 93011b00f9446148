"""AdamW with decoupled weight decay and a cosine learning-rate schedule.

Desk-scale defaults: lr 3e-4, betas (0.9, 0.999), weight decay 0.01,
cosine decay to 10% of the peak rate.
"""

from __future__ import annotations

import math

import numpy as np

from .nn import Parameter


class NonFiniteGradient(RuntimeError):
    """A parameter gradient contained NaN/Inf; the optimizer step was aborted."""


class CosineSchedule:
    """Cosine decay from peak lr to floor_frac * peak over total_steps."""

    def __init__(self, peak_lr: float, total_steps: int, floor_frac: float = 0.1):
        self.peak_lr = peak_lr
        self.total_steps = max(1, total_steps)
        self.floor = floor_frac * peak_lr

    def __call__(self, step: int) -> float:
        frac = min(step, self.total_steps) / self.total_steps
        return self.floor + 0.5 * (self.peak_lr - self.floor) * (1.0 + math.cos(math.pi * frac))


class AdamW:
    def __init__(
        self,
        params: list[Parameter],
        lr: float = 3e-4,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.01,
        schedule: CosineSchedule | None = None,
    ):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.schedule = schedule
        self.step_count = 0

    def current_lr(self) -> float:
        return self.schedule(self.step_count) if self.schedule else self.lr

    def step(self) -> float:
        """Apply one update to all unfrozen parameters with gradients; returns the lr used."""
        for p in self.params:
            if p.frozen or p.grad is None:
                continue
            if not np.all(np.isfinite(p.grad)):
                raise NonFiniteGradient(f"non-finite gradient in parameter {p.name!r}")
        lr = self.current_lr()
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.betas
        for p in self.params:
            if p.frozen or p.grad is None:
                continue
            if p.m is None:
                p.m = np.zeros_like(p.data)
                p.v = np.zeros_like(p.data)
            g = p.grad
            p.m = b1 * p.m + (1 - b1) * g
            p.v = b2 * p.v + (1 - b2) * (g * g)
            m_hat = p.m / (1 - b1 ** t)
            v_hat = p.v / (1 - b2 ** t)
            p.data = p.data - lr * (m_hat / (np.sqrt(v_hat) + self.eps) + self.weight_decay * p.data)
        return lr

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()
