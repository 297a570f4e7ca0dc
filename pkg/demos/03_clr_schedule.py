"""Triangular cyclical learning rate: one cycle per epoch between 1e-7 and 1e-5.

Writes the per-iteration schedule an external trainer would read and
prints a coarse text plot of the first two epochs.

Run: python demos/03_clr_schedule.py [out.csv]
"""
import sys

from rvoskit.clr import ScheduleSpec, emit_schedule, schedule

spec = ScheduleSpec(lr_min=1e-7, lr_max=1e-5, iters_per_epoch=40, epochs=4)
lrs = schedule(spec)
print(f"{spec.total_iters} iterations, min {min(lrs):.2e} at iter {lrs.index(min(lrs))}, "
      f"max {max(lrs):.2e} at iter {lrs.index(max(lrs))}")

for i in range(0, 2 * spec.iters_per_epoch, 4):
    bar = "#" * round(50 * lrs[i] / spec.lr_max)
    print(f"{i:>4} {lrs[i]:.2e} {bar}")

if len(sys.argv) > 1:
    emit_schedule(spec, sys.argv[1])
    print("wrote", sys.argv[1])
