"""Binary masks, probability maps and their on-disk formats.

Rasters are plain numpy arrays indexed ``[row, col]`` with row 0 at the top:

* a *binary mask* is a ``uint8`` array holding only 0 and 1;
* a *probability map* is a ``float32`` array with values in ``[0, 1]``.

Masks are stored as 8-bit grayscale PNG (0 / 255).  Probability maps are
stored as grayscale little-endian Portable FloatMaps, whose raster runs
bottom-to-top; the flip happens only inside :func:`read_pfm` / :func:`write_pfm`.
"""
from __future__ import annotations

import io
import os
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DimensionError, FormatError

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def as_mask(data) -> np.ndarray:
    """Validate ``data`` as a binary mask and return it as ``uint8``."""
    arr = np.asarray(data)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"mask must be a non-empty 2-D array, got shape {arr.shape}")
    if arr.dtype == np.bool_:
        return arr.astype(np.uint8)
    if not np.isin(arr, (0, 1)).all():
        raise ValueError("mask values must be 0 or 1")
    return arr.astype(np.uint8, copy=False)


def as_prob(data) -> np.ndarray:
    """Validate ``data`` as a probability map and return it as ``float32``."""
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"probability map must be a non-empty 2-D array, got shape {arr.shape}")
    if not ((arr >= 0.0) & (arr <= 1.0)).all():
        raise ValueError("probability values must lie in [0, 1]")
    return arr


def mask_to_prob(mask: np.ndarray) -> np.ndarray:
    """Lift a hard mask to a {0.0, 1.0} probability map."""
    return as_mask(mask).astype(np.float32)


def read_mask(path: str | os.PathLike) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if not raw.startswith(PNG_MAGIC):
        raise FormatError(f"{path}: not a PNG file")
    try:
        with Image.open(io.BytesIO(raw)) as img:
            if img.mode != "L":
                raise FormatError(f"{path}: expected 8-bit single-channel PNG, got mode {img.mode!r}")
            img.load()
            arr = np.asarray(img, dtype=np.uint8)
    except FormatError:
        raise
    except Exception as exc:  # Pillow raises a zoo of types on corrupt data
        raise FormatError(f"{path}: cannot decode PNG ({exc})") from exc
    if arr.size == 0:
        raise FormatError(f"{path}: zero-sized image")
    return (arr != 0).astype(np.uint8)


def write_mask(mask: np.ndarray, path: str | os.PathLike) -> None:
    mask = as_mask(mask)
    img = Image.fromarray(mask * np.uint8(255), mode="L")
    img.save(path, format="PNG")


def read_pfm(path: str | os.PathLike) -> np.ndarray:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"Pf":
            raise FormatError(f"{path}: bad PFM magic {magic!r} (only grayscale 'Pf' is supported)")
        try:
            width, height = (int(t) for t in fh.readline().split())
            scale = float(fh.readline().strip())
        except ValueError as exc:
            raise FormatError(f"{path}: malformed PFM header") from exc
        if width < 1 or height < 1:
            raise FormatError(f"{path}: zero-sized PFM")
        if scale >= 0:
            raise FormatError(f"{path}: positive scale (big-endian PFM) is not supported")
        body = fh.read()
    expected = width * height * 4
    if len(body) != expected:
        raise FormatError(f"{path}: raster has {len(body)} bytes, expected {expected}")
    arr = np.frombuffer(body, dtype="<f4").reshape(height, width)[::-1]
    if not ((arr >= 0.0) & (arr <= 1.0)).all():
        raise FormatError(f"{path}: probability value outside [0, 1]")
    return arr.astype(np.float32)


def write_pfm(prob: np.ndarray, path: str | os.PathLike) -> None:
    prob = as_prob(prob)
    height, width = prob.shape
    header = f"Pf\n{width} {height}\n-1.0\n".encode("ascii")
    body = np.ascontiguousarray(prob[::-1], dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(body)


def read_prediction(stem: str | os.PathLike) -> np.ndarray:
    """Load ``<stem>.pfm`` if present, else lift ``<stem>.png`` to a probability map."""
    stem = str(stem)
    if os.path.exists(stem + ".pfm"):
        return read_pfm(stem + ".pfm")
    if os.path.exists(stem + ".png"):
        return mask_to_prob(read_mask(stem + ".png"))
    raise FileNotFoundError(f"no prediction at {stem}.pfm or {stem}.png")
