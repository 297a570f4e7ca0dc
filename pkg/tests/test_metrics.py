import math

import numpy as np
import pytest

from conftest import random_mask
from oracles import boundary_f_naive, jaccard_naive
from rvoskit.errors import DimensionError
from rvoskit.metrics import FrameScore, aggregate, boundary_f, eval_sequence, jaccard, rank_table


def columns(cols, shape=(4, 4)):
    m = np.zeros(shape, np.uint8)
    m[:, cols] = 1
    return m


def test_jaccard_examples():
    a = columns([0, 1])
    assert jaccard(a, a) == 1.0
    assert jaccard(columns([0]), columns([3])) == 0.0
    assert jaccard(columns([0, 1]), columns([1, 2])) == pytest.approx(4 / 12)
    z = np.zeros((3, 3), np.uint8)
    assert jaccard(z, z) == 1.0
    with pytest.raises(DimensionError):
        jaccard(np.zeros((2, 2)), np.zeros((2, 3)))


def test_boundary_f_examples():
    gt = np.zeros((32, 32), np.uint8)
    gt[10:20, 10:20] = 1
    shifted = np.roll(gt, 1, axis=1)
    assert boundary_f(gt, gt) == 1.0
    assert boundary_f(np.zeros_like(gt), gt) == 0.0
    assert boundary_f(gt, np.zeros_like(gt)) == 0.0
    assert boundary_f(np.zeros_like(gt), np.zeros_like(gt)) == 1.0
    # tolerance ceil(0.008 * 45.25) = 1 pixel covers a one-pixel shift
    assert boundary_f_naive(shifted, gt) == 1.0
    assert boundary_f(shifted, gt) == 1.0
    # a three-pixel shift does not fit within one pixel
    assert boundary_f(np.roll(gt, 3, axis=1), gt) < 1.0
    with pytest.raises(ValueError):
        boundary_f(gt, gt, bound_frac=0.0)


def test_metrics_match_oracles_and_are_symmetric(rng):
    for _ in range(60):
        a, b = random_mask(rng), random_mask(rng)
        assert jaccard(a, b) == jaccard_naive(a, b) == jaccard(b, a)
        f = boundary_f(a, b)
        assert abs(f - boundary_f_naive(a, b)) <= 1e-9
        assert f == pytest.approx(boundary_f(b, a), abs=1e-12)
        assert 0.0 <= f <= 1.0


def test_bound_frac_widens_tolerance(rng):
    gt = np.zeros((40, 40), np.uint8)
    gt[5:25, 5:25] = 1
    pred = np.roll(gt, 3, axis=0)
    assert boundary_f(pred, gt, 0.008) < boundary_f(pred, gt, 0.06) == 1.0
    assert abs(boundary_f(pred, gt, 0.03) - boundary_f_naive(pred, gt, 0.03)) < 1e-12


def test_eval_sequence(rng):
    m = columns([1, 2])
    assert eval_sequence([(m, m)]) == (1.0, 1.0)
    seq = eval_sequence([(m, m), (columns([0]), columns([3]))])
    assert seq.j == 0.5
    frames = [(random_mask(rng, (16, 16)), random_mask(rng, (16, 16))) for _ in range(3)]
    s = eval_sequence(frames)
    assert s.j == pytest.approx(sum(jaccard_naive(p, g) for p, g in frames) / 3, abs=1e-12)
    assert s.f == pytest.approx(sum(boundary_f_naive(p, g) for p, g in frames) / 3, abs=1e-9)
    with pytest.raises(ValueError):
        eval_sequence([])


def test_aggregate():
    # percent scale passes straight through
    report = aggregate({("v", "e"): FrameScore(59.8, 63.6)})
    assert report.jf == pytest.approx(61.7, abs=1e-9)
    ones = aggregate({("a", "0"): FrameScore(1, 1), ("b", "0"): FrameScore(1, 1)})
    assert (ones.j_mean, ones.f_mean, ones.jf) == (1.0, 1.0, 1.0)
    two = aggregate({("a", "0"): FrameScore(0.4, 0.6), ("b", "0"): FrameScore(0.8, 0.2)})
    assert two.j_mean == pytest.approx(0.6) and two.f_mean == pytest.approx(0.4) and two.jf == pytest.approx(0.5)
    with pytest.raises(ValueError):
        aggregate({})


def test_aggregate_weights_sequences_equally(rng):
    scores = {(f"v{i}", "0"): FrameScore(*rng.random(2)) for i in range(17)}
    report = aggregate(scores)
    assert report.j_mean == pytest.approx(np.mean([s.j for s in scores.values()]), abs=1e-15)
    assert report.jf == (report.j_mean + report.f_mean) / 2


def test_report_json_and_csv(tmp_path):
    report = aggregate({("v1", "0"): FrameScore(0.5, 0.25), ("v0", "1"): FrameScore(1.0, 1.0)})
    report.save(tmp_path / "r.json", tmp_path / "r.csv")
    import json
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc == {"per_sequence": {"v0/1": {"J": 1.0, "F": 1.0}, "v1/0": {"J": 0.5, "F": 0.25}},
                   "J_mean": 0.75, "F_mean": 0.625, "JF": 0.6875}
    assert (tmp_path / "r.csv").read_text().splitlines() == ["video,expression,J,F", "v0,1,1.0,1.0", "v1,0,0.5,0.25"]


LEADERBOARD = [("Bo____", 62.2, 66.1), ("jiliushi (Ours)", 59.8, 63.6), ("PENG", 58.9, 62.7),
          ("ds-hohhot", 57.9, 61.2), ("JQK", 57.7, 61.1), ("nero", 56.1, 59.9)]


def test_rank_table_leaderboard():
    ranked = rank_table(reversed(LEADERBOARD))
    assert [r.name for r in ranked] == [name for name, _, _ in LEADERBOARD]
    for r, expected in zip(ranked, [64.15, 61.7, 60.8, 59.55, 59.4, 58.0]):
        assert r.jf == pytest.approx(expected, abs=1e-9)


def test_rank_table_ties():
    assert rank_table([("x", 0.5, 0.5)]) == [("x", 0.5, 0.5, 0.5)]
    ranked = rank_table([("low_j", 0.4, 0.6), ("high_j", 0.6, 0.4)])
    assert [r.name for r in ranked] == ["high_j", "low_j"]
    ranked = rank_table([("b", 0.5, 0.5), ("a", 0.5, 0.5)])
    assert [r.name for r in ranked] == ["a", "b"]


def test_rank_table_is_sorted_permutation(rng):
    rows = [(f"t{i}", float(rng.integers(0, 5)) / 4, float(rng.integers(0, 5)) / 4) for i in range(40)]
    ranked = rank_table(rows)
    assert sorted(r.name for r in ranked) == sorted(n for n, _, _ in rows)
    assert all(a.jf >= b.jf for a, b in zip(ranked, ranked[1:]))
    assert all(math.isclose(r.jf, (r.j + r.f) / 2) for r in ranked)
