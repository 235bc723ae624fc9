"""Adam with the step-decay learning-rate schedule used for training."""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from .tensor import Tensor

log = logging.getLogger(__name__)


def lr_at(epoch: int, lr0: float = 1e-3, decay: float = 0.98, every: int = 2) -> float:
    """Learning rate for zero-based ``epoch``: ``lr0 * decay ** (epoch // every)``."""
    return lr0 * decay ** (epoch // every)


class Adam:
    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros(p.shape) for p in self.params]
        self.v = [np.zeros(p.shape) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> bool:
        """Apply one update; returns False (and skips) on non-finite gradients."""
        for p in self.params:
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                log.warning("non-finite gradient in parameter of shape %s; step skipped", p.shape)
                return False
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return True

    def state_dict(self) -> dict:
        return {"t": self.t, "m": [a.copy() for a in self.m], "v": [a.copy() for a in self.v]}
