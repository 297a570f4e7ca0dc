"""Region similarity (J), contour accuracy (F), J&F aggregation and ranking."""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy import ndimage

from .errors import DimensionError
from .raster import as_mask

_CROSS = ndimage.generate_binary_structure(2, 1)


class FrameScore(NamedTuple):
    j: float
    f: float


@dataclass(frozen=True)
class MetricReport:
    per_sequence: dict[tuple[str, str], FrameScore]
    j_mean: float
    f_mean: float
    jf: float

    def to_json(self) -> dict:
        return {
            "per_sequence": {
                f"{video}/{expr}": {"J": s.j, "F": s.f}
                for (video, expr), s in sorted(self.per_sequence.items())
            },
            "J_mean": self.j_mean,
            "F_mean": self.f_mean,
            "JF": self.jf,
        }

    def save(self, path: str | os.PathLike, csv_path: str | os.PathLike | None = None) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        if csv_path is not None:
            with open(csv_path, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["video", "expression", "J", "F"])
                for (video, expr), s in sorted(self.per_sequence.items()):
                    writer.writerow([video, expr, repr(s.j), repr(s.f)])


def _check_pair(pred, gt):
    pred, gt = as_mask(pred), as_mask(gt)
    if pred.shape != gt.shape:
        raise DimensionError(f"prediction shape {pred.shape} != ground-truth shape {gt.shape}")
    return pred.astype(bool), gt.astype(bool)


def jaccard(pred: np.ndarray, gt: np.ndarray) -> float:
    pred, gt = _check_pair(pred, gt)
    union = np.count_nonzero(pred | gt)
    if union == 0:
        return 1.0
    return np.count_nonzero(pred & gt) / union


def boundary(mask: np.ndarray) -> np.ndarray:
    """Foreground pixels with a 4-neighbour that is background or off-image."""
    mask = np.asarray(mask, dtype=bool)
    eroded = ndimage.binary_erosion(mask, structure=_CROSS, border_value=0)
    return mask & ~eroded


def tolerance_radius(shape: tuple[int, int], bound_frac: float) -> int:
    h, w = shape
    return math.ceil(bound_frac * math.hypot(w, h))


def _disk(radius: int) -> np.ndarray:
    y, x = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    return x * x + y * y <= radius * radius


def boundary_f(pred: np.ndarray, gt: np.ndarray, bound_frac: float = 0.008) -> float:
    """Boundary F-measure with a Euclidean matching tolerance.

    The tolerance is ``ceil(bound_frac * image_diagonal)`` pixels.  A boundary
    pixel of one mask counts as matched when a boundary pixel of the other lies
    within that distance.
    """
    if not 0.0 < bound_frac < 1.0:
        raise ValueError(f"bound_frac must be in (0, 1), got {bound_frac}")
    pred, gt = _check_pair(pred, gt)
    pb, gb = boundary(pred), boundary(gt)
    n_pred, n_gt = np.count_nonzero(pb), np.count_nonzero(gb)
    if n_pred == 0 and n_gt == 0:
        return 1.0
    if n_pred == 0 or n_gt == 0:
        return 0.0

    disk = _disk(tolerance_radius(pred.shape, bound_frac))
    gt_zone = ndimage.binary_dilation(gb, structure=disk)
    pred_zone = ndimage.binary_dilation(pb, structure=disk)
    precision = np.count_nonzero(pb & gt_zone) / n_pred
    recall = np.count_nonzero(gb & pred_zone) / n_gt
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def eval_frame(pred, gt, bound_frac: float = 0.008) -> FrameScore:
    return FrameScore(jaccard(pred, gt), boundary_f(pred, gt, bound_frac))


def eval_sequence(frames: Sequence[tuple[np.ndarray, np.ndarray]], bound_frac: float = 0.008) -> FrameScore:
    """Mean J and mean F over the (pred, gt) pairs of one sequence."""
    if len(frames) == 0:
        raise ValueError("cannot evaluate an empty sequence")
    scores = [eval_frame(p, g, bound_frac) for p, g in frames]
    return FrameScore(
        float(np.mean([s.j for s in scores])),
        float(np.mean([s.f for s in scores])),
    )


def aggregate(per_sequence: Mapping[tuple[str, str], FrameScore]) -> MetricReport:
    """Average per-sequence scores, each sequence weighted equally.

    Scale-agnostic: works on fractions or on percentages alike.
    """
    if not per_sequence:
        raise ValueError("cannot aggregate zero sequences")
    scores = {k: FrameScore(float(v[0]), float(v[1])) for k, v in per_sequence.items()}
    j_mean = math.fsum(s.j for s in scores.values()) / len(scores)
    f_mean = math.fsum(s.f for s in scores.values()) / len(scores)
    return MetricReport(scores, j_mean, f_mean, (j_mean + f_mean) / 2)


class RankedRow(NamedTuple):
    name: str
    j: float
    f: float
    jf: float


def rank_table(rows: Iterable[tuple[str, float, float]]) -> list[RankedRow]:
    """Compute J&F per row and sort best first (ties: higher J, then name)."""
    ranked = [RankedRow(name, j, f, (j + f) / 2) for name, j, f in rows]
    ranked.sort(key=lambda r: (-r.jf, -r.j, r.name))
    return ranked
