"""Region (J) and boundary (F) scores on toy masks, then a leaderboard.

Run: python demos/01_metrics_and_leaderboard.py
"""
import numpy as np

from rvoskit.metrics import FrameScore, aggregate, boundary_f, eval_sequence, jaccard, rank_table

# A 10x10 square and the same square nudged one and three pixels right.
gt = np.zeros((32, 32), np.uint8)
gt[10:20, 10:20] = 1
near = np.roll(gt, 1, axis=1)
far = np.roll(gt, 3, axis=1)

print("one-pixel shift:   J = %.3f  F = %.3f" % (jaccard(near, gt), boundary_f(near, gt)))
print("three-pixel shift: J = %.3f  F = %.3f" % (jaccard(far, gt), boundary_f(far, gt)))
# F forgives the one-pixel shift entirely: the tolerance is ceil(0.008 * diagonal) = 1 px here.

# Frames average into a sequence score; sequences average into the overall J&F.
seq_a = eval_sequence([(gt, gt), (near, gt)])
seq_b = eval_sequence([(far, gt)])
report = aggregate({("video_a", "0"): seq_a, ("video_b", "0"): seq_b})
print("\noverall: J %.3f  F %.3f  J&F %.3f" % (report.j_mean, report.f_mean, report.jf))

# Percent-scale leaderboard rows (name, J, F); ranked by J&F = (J + F) / 2.
rows = [("team_c", 58.9, 62.7), ("team_a", 62.2, 66.1), ("team_b", 59.8, 63.6)]
print("\nrank  name     J&F")
for rank, row in enumerate(rank_table(rows), start=1):
    print(f"{rank:>4}  {row.name:<7}  {row.jf:.2f}")

# The same aggregation works directly on published percent numbers.
print("\nJ 59.8 / F 63.6 ->", aggregate({("x", "0"): FrameScore(59.8, 63.6)}).jf)
