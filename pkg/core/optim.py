"""Adam with linear warmup and cosine decay."""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from core.exceptions import OptimizerStateError

logger = logging.getLogger(__name__)

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def like(cls, param):
        return cls(np.zeros_like(param), np.zeros_like(param))


def optimizer_step(params, grads, state, lr, betas=(BETA1, BETA2), eps=EPS):
    """One in-place Adam update of `params` (arrays) given `grads`."""
    if not (len(params) == len(grads) == len(state)):
        raise OptimizerStateError(
            f"{len(params)} params, {len(grads)} grads and {len(state)} state slots must match"
        )
    b1, b2 = betas
    for p, g, s in zip(params, grads, state):
        if p.shape != g.shape or s.m.shape != p.shape:
            raise OptimizerStateError(f"shape mismatch: param {p.shape}, grad {g.shape}, state {s.m.shape}")
        s.step += 1
        s.m *= b1
        s.m += (1.0 - b1) * g
        s.v *= b2
        s.v += (1.0 - b2) * g * g
        m_hat = s.m / (1.0 - b1 ** s.step)
        v_hat = s.v / (1.0 - b2 ** s.step)
        p -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype)
    return params


@dataclass
class WarmupCosineSchedule:
    base_lr: float
    warmup_steps: int
    total_steps: int

    def __call__(self, step):
        if self.warmup_steps > 0 and step < self.warmup_steps:
            return self.base_lr * (step + 1) / self.warmup_steps
        span = max(self.total_steps - self.warmup_steps, 1)
        progress = min(max(step - self.warmup_steps, 0) / span, 1.0)
        return 0.5 * self.base_lr * (1.0 + math.cos(math.pi * progress))


@dataclass
class Adam:
    params: list
    lr: float = 1e-3
    schedule: WarmupCosineSchedule = None
    state: list = field(default=None)
    step_count: int = 0

    def __post_init__(self):
        if self.state is None:
            self.state = [AdamState.like(p.data) for p in self.params]

    def current_lr(self):
        return self.schedule(self.step_count) if self.schedule else self.lr

    def step(self):
        lr = self.current_lr()
        optimizer_step([p.data for p in self.params], [p.grad for p in self.params], self.state, lr)
        self.step_count += 1
        return lr

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()
