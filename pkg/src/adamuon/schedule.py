"""Learning-rate schedules: constant, cosine and warmup-stable-decay."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass


class ScheduleKind(enum.Enum):
    CONSTANT = "constant"
    COSINE = "cosine"
    WSD = "wsd"


@dataclass(frozen=True)
class ScheduleSpec:
    """All three kinds share the linear warmup ``base_lr * (step + 1) / warmup_steps``.

    WSD holds ``base_lr`` until ``decay_start`` and then ramps linearly to
    ``min_lr`` at ``total_steps``. Cosine decays over ``[warmup_steps,
    total_steps)`` and ignores ``decay_start``.
    """

    kind: ScheduleKind
    base_lr: float
    total_steps: int
    warmup_steps: int = 0
    decay_start: int | None = None
    min_lr: float = 0.0

    def __post_init__(self):
        if self.decay_start is None:
            # decay over the final 20%
            ds = max(self.warmup_steps, int(0.8 * self.total_steps))
            object.__setattr__(self, "decay_start", ds)
        if not (math.isfinite(self.base_lr) and self.base_lr > 0):
            raise ValueError("base_lr must be finite and > 0")
        if self.total_steps < 1:
            raise ValueError("total_steps must be positive")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be >= 0")
        if not self.warmup_steps <= self.decay_start <= self.total_steps:
            raise ValueError(
                f"need warmup_steps <= decay_start <= total_steps, got "
                f"{self.warmup_steps}, {self.decay_start}, {self.total_steps}"
            )
        if not 0.0 <= self.min_lr <= self.base_lr:
            raise ValueError("min_lr must lie in [0, base_lr]")


def lr_at(spec: ScheduleSpec, step: int) -> float:
    if not 0 <= step < spec.total_steps:
        raise ValueError(f"step {step} outside [0, {spec.total_steps})")
    base, low = spec.base_lr, spec.min_lr
    if step < spec.warmup_steps:
        return base * (step + 1) / spec.warmup_steps
    if spec.kind is ScheduleKind.CONSTANT:
        return base
    if spec.kind is ScheduleKind.COSINE:
        span = spec.total_steps - spec.warmup_steps
        frac = (step - spec.warmup_steps) / span
        return low + (base - low) * 0.5 * (1.0 + math.cos(math.pi * frac))
    if step < spec.decay_start:
        return base
    frac = (step - spec.decay_start) / (spec.total_steps - spec.decay_start)
    return base + (low - base) * frac
