"""Deterministic stand-ins for an external segmentation trainer and predictor.

These exist to exercise the pipeline plumbing end to end without a neural
network.  They say nothing about whether self-training helps a real model.

* Synthetic frames are grayscale images in which each referred object is
  painted at its own gray level; the expression text names that level.
* ``train`` only counts the labeled frames in its manifest and records the
  count in ``model.json``.
* ``predict`` segments by gray level and adds seeded Gaussian noise whose
  magnitude shrinks as the model's labeled-frame count grows.  The noise
  draw depends on (seed, sequence, frame, augmentation) but not on the
  model, so a better-trained stub predicts strictly less noisy maps.

Run as ``python -m rvoskit.stub train|predict ...``.
"""
from __future__ import annotations

import argparse
import json
import math
import re
import sys
import zlib
from pathlib import Path

import numpy as np
from PIL import Image

from . import manifest as mf
from .geometry import Dims, hflip_prob, resize_bilinear, target_dims
from .raster import write_mask, write_pfm

LEVELS = (80, 160)
NOISE_REF_FRAMES = 10


def _paint(shape, level_masks):
    img = np.zeros(shape, dtype=np.uint8)
    for level, m in level_masks:
        img[m] = level
    return img


def make_synthetic_dataset(root, n_videos: int = 5, frames_per_sequence: int = 3,
                           size: tuple[int, int] = (48, 32), seed: int = 0,
                           splits: tuple[int, int, int] = (3, 1, 1)) -> dict[str, Path]:
    """Write a toy RVOS dataset under ``root`` and return its manifest paths.

    Every video holds one object per entry of ``LEVELS`` and gets one
    expression per object.  Videos are split ``splits`` ways into train (with
    ground truth), valid and test (unlabeled).  ``valid_gt`` / ``test_gt``
    manifests carry the hidden labels for scoring.
    """
    if sum(splits) != n_videos:
        raise ValueError(f"split sizes {splits} do not add up to {n_videos} videos")
    root = Path(root)
    width, height = size
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width]
    split_names = ["train"] * splits[0] + ["valid"] * splits[1] + ["test"] * splits[2]
    entries: dict[str, list] = {"train": [], "valid": [], "test": [], "valid_gt": [], "test_gt": []}

    for v, split in enumerate(split_names):
        video = f"v{v}"
        frame_dir = root / "frames" / video
        frame_dir.mkdir(parents=True, exist_ok=True)
        frame_ids = [f"{5 * i:05d}" for i in range(frames_per_sequence)]
        # a rectangle and a disc drifting across the frame
        rx, ry = rng.integers(2, width // 2), rng.integers(2, height // 2)
        rw, rh = rng.integers(6, width // 3), rng.integers(5, height // 3)
        cx, cy = rng.uniform(width / 3, width - 6), rng.uniform(height / 3, height - 6)
        cr = rng.uniform(4, min(width, height) / 4)
        vx, vc = rng.integers(-2, 3, size=2)
        visible = {level: [] for level in LEVELS}
        for i, fid in enumerate(frame_ids):
            rect = (xx >= rx + i * vx) & (xx < rx + rw + i * vx) & (yy >= ry) & (yy < ry + rh)
            disc = (xx - cx - i * vc) ** 2 + (yy - cy) ** 2 <= cr ** 2
            img = _paint((height, width), [(LEVELS[0], rect), (LEVELS[1], disc)])
            Image.fromarray(img, mode="L").save(frame_dir / f"{fid}.png")
            for level in LEVELS:
                visible[level].append(img == level)

        for k, level in enumerate(LEVELS):
            expr = str(k)
            label_dir = root / "gt" / video / expr
            label_dir.mkdir(parents=True, exist_ok=True)
            for fid, m in zip(frame_ids, visible[level]):
                write_mask(m, label_dir / f"{fid}.png")
            text = f"the object painted at gray level {level}"
            gt_entry = mf.SequenceEntry(video, expr, text, tuple(frame_ids), str(frame_dir),
                                        str(label_dir), mf.GROUND_TRUTH)
            if split == "train":
                entries["train"].append(gt_entry)
            else:
                entries[split].append(mf.SequenceEntry(video, expr, text, tuple(frame_ids), str(frame_dir)))
                entries[f"{split}_gt"].append(gt_entry)

    paths = {}
    for name, ents in entries.items():
        paths[name] = root / f"{name}.json"
        mf.save_manifest(mf.Manifest(name.split("_")[0], tuple(ents)), paths[name])
    return paths


def train(manifest_path, schedule_path, out_dir, round: int = 0) -> dict:
    m = mf.load_manifest(manifest_path)
    with open(schedule_path, encoding="ascii") as fh:
        n_iters = sum(1 for _ in fh) - 1
    counts = mf.stats(m)
    model = {
        "round": round,
        "labeled_frames": sum(v for k, v in counts.frames.items() if k != "none"),
        "schedule_iters": n_iters,
        "provenance": counts.to_json(),
    }
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "model.json").write_text(json.dumps(model, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return model


def effective_noise(noise: float, labeled_frames: int) -> float:
    return noise / math.sqrt(1.0 + labeled_frames / NOISE_REF_FRAMES)


def _level(expression_text: str) -> int:
    found = re.findall(r"\d+", expression_text)
    if not found:
        raise ValueError(f"stub predictor cannot find a gray level in {expression_text!r}")
    return int(found[-1])


def predict(manifest_path, out_dir, seed: int = 0, noise: float = 0.3, model_dir=None,
            scale: int | None = None, flip: bool = False, long_cap: int | None = None) -> int:
    """Write ``<out_dir>/<video>/<expr>/<frame>.pfm`` for every manifest frame.

    With ``scale`` set, maps are produced at ``target_dims(frame, scale,
    long_cap)``; with ``flip`` they are mirrored, as a real model run on a
    flipped input would return them.
    """
    m = mf.load_manifest(manifest_path)
    if model_dir is not None:
        model = json.loads((Path(model_dir) / "model.json").read_text(encoding="utf-8"))
        noise = effective_noise(noise, model["labeled_frames"])
    tag = f"s{scale}_f{int(flip)}" if scale is not None else f"orig_f{int(flip)}"
    count = 0
    for e in m.entries:
        level = _level(e.expression_text)
        seq_dir = Path(out_dir) / e.video_id / e.expression_id
        seq_dir.mkdir(parents=True, exist_ok=True)
        for fid in e.frame_ids:
            with Image.open(e.frame_path(fid)) as img:
                frame = np.asarray(img.convert("L"))
            prob = (frame == level).astype(np.float32)
            if scale is not None:
                prob = resize_bilinear(prob, target_dims(Dims.of(prob), scale, long_cap))
            if flip:
                prob = hflip_prob(prob)
            key = zlib.crc32(f"{e.video_id}/{e.expression_id}/{fid}/{tag}".encode())
            z = np.random.default_rng([seed, key]).standard_normal(prob.shape)
            noisy = np.clip(prob + noise * z, 0.0, 1.0).astype(np.float32)
            write_pfm(noisy, seq_dir / f"{fid}.pfm")
            count += 1
    return count


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="python -m rvoskit.stub", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="count labeled frames and write model.json")
    p.add_argument("--manifest", required=True)
    p.add_argument("--schedule", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--round", type=int, default=0)
    p.add_argument("--fail-if-exists", metavar="PATH", help="exit 1 if PATH exists (failure injection)")

    p = sub.add_parser("predict", help="emit noisy probability maps")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--model")
    p.add_argument("--scale", type=int)
    p.add_argument("--flip", type=int, choices=(0, 1), default=0)
    p.add_argument("--long-cap", type=int)
    p.add_argument("--fail-if-exists", metavar="PATH", help="exit 1 if PATH exists (failure injection)")

    args = parser.parse_args(argv)
    if args.fail_if_exists and Path(args.fail_if_exists).exists():
        print(f"stub {args.command}: failure injected via {args.fail_if_exists}", file=sys.stderr)
        return 1
    if args.command == "train":
        train(args.manifest, args.schedule, args.out, args.round)
    else:
        predict(args.manifest, args.out, args.seed, args.noise, args.model,
                args.scale, bool(args.flip), args.long_cap)
    return 0


if __name__ == "__main__":
    sys.exit(main())
