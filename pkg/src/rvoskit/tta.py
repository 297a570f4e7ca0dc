"""Test-time augmentation: enumerate scale x flip variants and fuse their outputs.

Every augmented prediction is mapped back to the original frame geometry
(un-flip, then bilinear resize), the maps are averaged pixel-wise and the
mean is thresholded with ties going to foreground.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimensionError
from .geometry import Dims, hflip_prob, resize_bilinear, target_dims
from .raster import as_prob, read_prediction, write_mask


@dataclass(frozen=True)
class AugmentationSpec:
    short_side: int
    hflip: bool = False
    long_cap: int | None = None

    def __post_init__(self):
        if self.short_side < 1:
            raise ValueError(f"short_side must be >= 1, got {self.short_side}")

    @property
    def tag(self) -> str:
        return f"s{self.short_side}_f{int(self.hflip)}"

    def dims_for(self, orig: Dims) -> Dims:
        return target_dims(orig, self.short_side, self.long_cap)


@dataclass(frozen=True)
class AugmentedOutput:
    spec: AugmentationSpec
    prob: np.ndarray


def enumerate_augs(short_sides: Sequence[int], use_flip: bool, long_cap: int | None = None) -> list[AugmentationSpec]:
    if not short_sides:
        raise ValueError("need at least one short side")
    if len(set(short_sides)) != len(short_sides):
        raise ValueError(f"duplicate short sides in {list(short_sides)}")
    flips = (False, True) if use_flip else (False,)
    return [AugmentationSpec(s, f, long_cap) for s in sorted(short_sides) for f in flips]


def invert(out: AugmentedOutput, orig: Dims) -> np.ndarray:
    """Map an augmented prediction back to the original frame geometry."""
    prob = as_prob(out.prob)
    expected = out.spec.dims_for(orig)
    if Dims.of(prob) != expected:
        raise DimensionError(
            f"{out.spec.tag}: prediction is {Dims.of(prob)}, expected {expected} for original {orig}"
        )
    if out.spec.hflip:
        prob = hflip_prob(prob)
    return resize_bilinear(prob, orig)


def fuse_probs(outputs: Sequence[AugmentedOutput], orig: Dims) -> np.ndarray:
    """Pixel-wise mean of all inverted predictions (float64)."""
    if not outputs:
        raise ValueError("nothing to fuse")
    specs = [o.spec for o in outputs]
    if len(set(specs)) != len(specs):
        raise ValueError("duplicate augmentation specs")
    # sorted accumulation keeps the float sum independent of input order
    ordered = sorted(outputs, key=lambda o: (o.spec.short_side, o.spec.hflip, o.spec.long_cap or 0))
    acc = np.zeros((orig.height, orig.width), dtype=np.float64)
    for out in ordered:
        acc += invert(out, orig)
    return acc / len(ordered)


def fuse(outputs: Sequence[AugmentedOutput], orig: Dims, threshold: float = 0.5) -> np.ndarray:
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    return (fuse_probs(outputs, orig) >= threshold).astype(np.uint8)


def prediction_stem(pred_root, spec: AugmentationSpec, video: str, expression: str, frame: str) -> Path:
    return Path(pred_root) / spec.tag / video / expression / frame


def fuse_tree(manifest, pred_root: str | os.PathLike, specs: Sequence[AugmentationSpec],
              out_root: str | os.PathLike, threshold: float = 0.5) -> int:
    """Fuse an on-disk prediction tree for every frame listed in ``manifest``.

    Reads ``<pred_root>/<tag>/<video>/<expr>/<frame>.pfm`` (or ``.png``) and
    writes ``<out_root>/<video>/<expr>/<frame>.png``.  Returns the number of
    fused frames.
    """
    count = 0
    for entry in manifest.entries:
        seq_out = Path(out_root) / entry.video_id / entry.expression_id
        seq_out.mkdir(parents=True, exist_ok=True)
        for frame in entry.frame_ids:
            orig = entry.frame_dims(frame)
            outputs = [
                AugmentedOutput(s, read_prediction(prediction_stem(pred_root, s, entry.video_id,
                                                                   entry.expression_id, frame)))
                for s in specs
            ]
            write_mask(fuse(outputs, orig, threshold), seq_out / f"{frame}.png")
            count += 1
    return count
