"""Flips, resizes and short-side / long-side-cap dimension arithmetic.

Both interpolators sample at pixel centres (``(i + 0.5) * src / dst``), which
makes them commute with horizontal flips.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .raster import as_mask, as_prob


class Dims(NamedTuple):
    width: int
    height: int

    @classmethod
    def of(cls, raster: np.ndarray) -> "Dims":
        return cls(int(raster.shape[1]), int(raster.shape[0]))


def _round_half_away(x: float) -> int:
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


def target_dims(orig: Dims, short_side: int, long_cap: int | None = None) -> Dims:
    """Scale ``orig`` so its short side equals ``short_side``.

    If the long side would then exceed ``long_cap``, the scale is reduced so
    the long side equals the cap instead.  Aspect ratio is preserved.
    """
    if short_side < 1:
        raise ValueError(f"short_side must be >= 1, got {short_side}")
    if long_cap is not None and long_cap < short_side:
        raise ValueError(f"long_cap ({long_cap}) must be >= short_side ({short_side})")
    w, h = orig
    scale = short_side / min(w, h)
    if long_cap is not None and _round_half_away(scale * max(w, h)) > long_cap:
        scale = long_cap / max(w, h)
    return Dims(max(1, _round_half_away(scale * w)), max(1, _round_half_away(scale * h)))


def hflip_mask(mask: np.ndarray) -> np.ndarray:
    return as_mask(mask)[:, ::-1].copy()


def hflip_prob(prob: np.ndarray) -> np.ndarray:
    return as_prob(prob)[:, ::-1].copy()


def _nearest_index(src: int, dst: int) -> np.ndarray:
    # floor((i + 0.5) * src / dst) in exact integer arithmetic
    i = np.arange(dst, dtype=np.int64)
    return np.minimum(((2 * i + 1) * src) // (2 * dst), src - 1)


def resize_nearest(mask: np.ndarray, to: Dims) -> np.ndarray:
    mask = as_mask(mask)
    if Dims.of(mask) == to:
        return mask.copy()
    rows = _nearest_index(mask.shape[0], to.height)
    cols = _nearest_index(mask.shape[1], to.width)
    return mask[np.ix_(rows, cols)]


def _linear_taps(src: int, dst: int):
    coord = (np.arange(dst, dtype=np.float64) + 0.5) * (src / dst) - 0.5
    coord = np.clip(coord, 0.0, src - 1)
    lo = np.floor(coord).astype(np.int64)
    hi = np.minimum(lo + 1, src - 1)
    return lo, hi, coord - lo


def resize_bilinear(prob: np.ndarray, to: Dims) -> np.ndarray:
    prob = as_prob(prob)
    if Dims.of(prob) == to:
        return prob.copy()
    src = prob.astype(np.float64)
    lo, hi, t = _linear_taps(src.shape[0], to.height)
    a, b = src[lo], src[hi]
    src = a + t[:, None] * (b - a)
    lo, hi, t = _linear_taps(src.shape[1], to.width)
    a, b = src[:, lo], src[:, hi]
    out = a + t[None, :] * (b - a)
    # float rounding may overshoot the source range by an ulp
    return np.clip(out, prob.min(), prob.max()).astype(np.float32)
