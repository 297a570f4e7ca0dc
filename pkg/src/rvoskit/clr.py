"""Triangular cyclical learning-rate schedule, one cycle per epoch.

Each cycle starts at ``lr_min``, rises linearly to ``lr_max`` at mid-cycle and
falls back linearly.  The rate is updated every iteration.  With an odd
number of iterations per epoch the peak falls between two samples and
``lr_max`` itself is never emitted.
"""
from __future__ import annotations

import os
from dataclasses import dataclass


@dataclass(frozen=True)
class ScheduleSpec:
    lr_min: float = 1e-7
    lr_max: float = 1e-5
    iters_per_epoch: int = 1000
    epochs: int = 1

    def __post_init__(self):
        if not self.lr_min > 0:
            raise ValueError(f"lr_min must be > 0, got {self.lr_min}")
        if self.lr_max < self.lr_min:
            raise ValueError(f"lr_max ({self.lr_max}) < lr_min ({self.lr_min})")
        if self.iters_per_epoch < 1 or self.epochs < 1:
            raise ValueError("iters_per_epoch and epochs must be >= 1")

    @property
    def total_iters(self) -> int:
        return self.iters_per_epoch * self.epochs


def lr_at(spec: ScheduleSpec, iteration: int) -> float:
    if not 0 <= iteration < spec.total_iters:
        raise IndexError(f"iteration {iteration} outside [0, {spec.total_iters})")
    n = spec.iters_per_epoch
    k = iteration % n
    # 1 - |2x - 1| with x = k / n, kept in integers until the final division
    height = (n - abs(2 * k - n)) / n
    lr = spec.lr_min + (spec.lr_max - spec.lr_min) * height
    return min(max(lr, spec.lr_min), spec.lr_max)


def schedule(spec: ScheduleSpec) -> list[float]:
    return [lr_at(spec, i) for i in range(spec.total_iters)]


def emit_schedule(spec: ScheduleSpec, path: str | os.PathLike) -> None:
    """Write ``iter,lr`` CSV rows (12 significant digits) for every iteration."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("iter,lr\n")
        for i, lr in enumerate(schedule(spec)):
            fh.write(f"{i},{lr:.11e}\n")
