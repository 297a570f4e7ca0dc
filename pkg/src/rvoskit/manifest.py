"""Dataset manifests: sequences of frames with label provenance.

A manifest describes one split as a list of sequences, one per
(video, expression) pair.  Each sequence records where its frames live,
where its labels live and whether those labels are ground truth or the
pseudo labels of a given self-training round.

On disk (``vtk-manifest/1``)::

    {"schema": "vtk-manifest/1", "split": "valid",
     "entries": [{"video": "v0", "expression_id": "0", "expression": "a dog",
                  "frames": ["00000", "00005"], "frame_dir": "JPEGImages/v0",
                  "label_dir": null, "label_source": "none"}]}

Paths in the file are relative to the file's directory; in memory they are
absolute.  Frames are ``<frame_dir>/<frame_id>.{jpg,jpeg,png}`` and labels
are ``<label_dir>/<frame_id>.png``.
"""
from __future__ import annotations

import json
import os
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

from PIL import Image

from .errors import ManifestError
from .geometry import Dims

SCHEMA = "vtk-manifest/1"
FRAME_EXTS = (".jpg", ".jpeg", ".png")


@dataclass(frozen=True)
class LabelSource:
    kind: str  # "ground_truth" | "pseudo" | "none"
    round: int | None = None

    def __post_init__(self):
        if self.kind == "pseudo":
            if not isinstance(self.round, int) or self.round < 1:
                raise ValueError(f"pseudo label round must be an int >= 1, got {self.round!r}")
        elif self.kind in ("ground_truth", "none"):
            if self.round is not None:
                raise ValueError(f"{self.kind} labels carry no round")
        else:
            raise ValueError(f"unknown label source {self.kind!r}")

    @classmethod
    def pseudo(cls, round: int) -> "LabelSource":
        return cls("pseudo", round)

    @property
    def bucket(self) -> str:
        return f"pseudo:{self.round}" if self.kind == "pseudo" else self.kind

    def to_json(self):
        return {"pseudo": self.round} if self.kind == "pseudo" else self.kind

    @classmethod
    def from_json(cls, value) -> "LabelSource":
        if isinstance(value, dict) and set(value) == {"pseudo"}:
            return cls.pseudo(value["pseudo"])
        if value in ("ground_truth", "none"):
            return cls(value)
        raise ValueError(f"bad label_source {value!r}")


GROUND_TRUTH = LabelSource("ground_truth")
UNLABELED = LabelSource("none")


@dataclass(frozen=True)
class SequenceEntry:
    video_id: str
    expression_id: str
    expression_text: str
    frame_ids: tuple[str, ...]
    frame_dir: str
    label_dir: str | None = None
    label_source: LabelSource = UNLABELED

    def __post_init__(self):
        frames = tuple(self.frame_ids)
        object.__setattr__(self, "frame_ids", frames)
        if not frames:
            raise ManifestError(f"{self.key_str}: no frames")
        if len(set(frames)) != len(frames) or list(frames) != sorted(frames):
            raise ManifestError(f"{self.key_str}: frame ids must be unique and sorted ascending")
        if (self.label_source.kind == "none") != (self.label_dir is None):
            raise ManifestError(f"{self.key_str}: label_dir must be null exactly when label_source is none")

    @property
    def key(self) -> tuple[str, str]:
        return (self.video_id, self.expression_id)

    @property
    def key_str(self) -> str:
        return f"{self.video_id}/{self.expression_id}"

    @property
    def labeled(self) -> bool:
        return self.label_source.kind != "none"

    def frame_path(self, frame_id: str) -> Path:
        for ext in FRAME_EXTS:
            p = Path(self.frame_dir) / f"{frame_id}{ext}"
            if p.exists():
                return p
        raise ManifestError(f"{self.key_str}: missing frame file {Path(self.frame_dir) / frame_id}.*")

    def label_path(self, frame_id: str) -> Path:
        if self.label_dir is None:
            raise ManifestError(f"{self.key_str}: sequence is unlabeled")
        return Path(self.label_dir) / f"{frame_id}.png"

    def frame_dims(self, frame_id: str) -> Dims:
        with Image.open(self.frame_path(frame_id)) as img:
            return Dims(*img.size)


@dataclass(frozen=True)
class Manifest:
    split_name: str
    entries: tuple[SequenceEntry, ...] = field(default_factory=tuple)

    def __post_init__(self):
        entries = tuple(self.entries)
        object.__setattr__(self, "entries", entries)
        seen = set()
        for e in entries:
            if e.key in seen:
                raise ManifestError(f"duplicate sequence key {e.key_str}")
            seen.add(e.key)

    def __len__(self):
        return len(self.entries)

    @property
    def n_frames(self) -> int:
        return sum(len(e.frame_ids) for e in self.entries)


def validate_files(m: Manifest) -> None:
    """Check that every frame exists and every labeled frame has a label file."""
    for e in m.entries:
        for fid in e.frame_ids:
            e.frame_path(fid)
            if e.labeled and not e.label_path(fid).exists():
                raise ManifestError(f"{e.key_str}: missing label file {e.label_path(fid)}")


def _entry_from_json(obj: dict, root: Path) -> SequenceEntry:
    required = {"video", "expression_id", "expression", "frames", "frame_dir", "label_dir", "label_source"}
    if not isinstance(obj, dict) or set(obj) != required:
        got = sorted(obj) if isinstance(obj, dict) else type(obj).__name__
        raise ManifestError(f"entry must have exactly the keys {sorted(required)}, got {got}")
    for k in ("video", "expression_id", "expression", "frame_dir"):
        if not isinstance(obj[k], str):
            raise ManifestError(f"entry field {k!r} must be a string")
    if not isinstance(obj["frames"], list) or not all(isinstance(f, str) for f in obj["frames"]):
        raise ManifestError("entry field 'frames' must be a list of strings")
    if obj["label_dir"] is not None and not isinstance(obj["label_dir"], str):
        raise ManifestError("entry field 'label_dir' must be a string or null")
    try:
        source = LabelSource.from_json(obj["label_source"])
    except ValueError as exc:
        raise ManifestError(str(exc)) from exc
    return SequenceEntry(
        video_id=obj["video"],
        expression_id=obj["expression_id"],
        expression_text=obj["expression"],
        frame_ids=tuple(obj["frames"]),
        frame_dir=os.path.normpath(root / obj["frame_dir"]),
        label_dir=None if obj["label_dir"] is None else os.path.normpath(root / obj["label_dir"]),
        label_source=source,
    )


def load_manifest(path: str | os.PathLike, check_files: bool = True) -> Manifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("schema") != SCHEMA:
        raise ManifestError(f"{path}: schema must be {SCHEMA!r}")
    if set(doc) != {"schema", "split", "entries"} or not isinstance(doc["split"], str) \
            or not isinstance(doc["entries"], list):
        raise ManifestError(f"{path}: expected keys schema, split (str), entries (list)")
    root = Path(os.path.abspath(path.parent))
    m = Manifest(doc["split"], tuple(_entry_from_json(e, root) for e in doc["entries"]))
    if check_files:
        validate_files(m)
    return m


def to_json(m: Manifest, root: str | os.PathLike) -> dict:
    root = os.path.abspath(root)

    def rel(p):
        return Path(os.path.relpath(p, root)).as_posix()

    return {
        "schema": SCHEMA,
        "split": m.split_name,
        "entries": [
            {
                "video": e.video_id,
                "expression_id": e.expression_id,
                "expression": e.expression_text,
                "frames": list(e.frame_ids),
                "frame_dir": rel(e.frame_dir),
                "label_dir": None if e.label_dir is None else rel(e.label_dir),
                "label_source": e.label_source.to_json(),
            }
            for e in m.entries
        ],
    }


def dumps(m: Manifest, root: str | os.PathLike) -> str:
    return json.dumps(to_json(m, root), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def save_manifest(m: Manifest, path: str | os.PathLike) -> None:
    """Write canonical JSON (sorted keys, 2-space indent, trailing newline)."""
    path = Path(path)
    path.write_text(dumps(m, path.parent), encoding="utf-8", newline="\n")


def inject_pseudo(m: Manifest, pred_root: str | os.PathLike, round: int) -> tuple[Manifest, list[str]]:
    """Point every non-ground-truth entry at fused predictions under ``pred_root``.

    Predictions are read from ``<pred_root>/<video>/<expr>/<frame>.png``.
    Ground-truth entries are kept as they are; their keys are returned as
    warnings.
    """
    if round < 1:
        raise ValueError(f"pseudo-label round must be >= 1, got {round}")
    pred_root = Path(os.path.abspath(pred_root))
    entries, skipped = [], []
    for e in m.entries:
        if e.label_source.kind == "ground_truth":
            skipped.append(e.key_str)
            entries.append(e)
            continue
        label_dir = pred_root / e.video_id / e.expression_id
        for fid in e.frame_ids:
            if not (label_dir / f"{fid}.png").exists():
                raise ManifestError(
                    f"missing prediction for video {e.video_id!r}, expression {e.expression_id!r}, frame {fid!r}"
                )
        entries.append(replace(e, label_dir=str(label_dir), label_source=LabelSource.pseudo(round)))
    return Manifest(m.split_name, tuple(entries)), skipped


def merge(manifests: Iterable[Manifest], name: str) -> Manifest:
    entries = []
    seen: dict[tuple[str, str], str] = {}
    for m in manifests:
        for e in m.entries:
            if e.key in seen:
                raise ManifestError(f"sequence {e.key_str} appears in both {seen[e.key]!r} and {m.split_name!r}")
            seen[e.key] = m.split_name
            entries.append(e)
    return Manifest(name, tuple(entries))


@dataclass
class ProvenanceStats:
    """Entry and frame counts per label bucket (``ground_truth``, ``none``, ``pseudo:<round>``)."""

    entries: Counter = field(default_factory=Counter)
    frames: Counter = field(default_factory=Counter)

    def __add__(self, other: "ProvenanceStats") -> "ProvenanceStats":
        return ProvenanceStats(self.entries + other.entries, self.frames + other.frames)

    def __eq__(self, other):
        if not isinstance(other, ProvenanceStats):
            return NotImplemented
        # Counter equality treats missing and zero buckets alike
        return +self.entries == +other.entries and +self.frames == +other.frames

    def pseudo_rounds(self) -> dict[int, int]:
        return {int(k.split(":")[1]): v for k, v in sorted(self.entries.items())
                if k.startswith("pseudo:") and v}

    def summary(self) -> dict[str, int]:
        return {
            "ground_truth": self.entries["ground_truth"],
            "pseudo": sum(self.pseudo_rounds().values()),
            "none": self.entries["none"],
        }

    def to_json(self) -> dict:
        return {"entries": dict(sorted(self.entries.items())), "frames": dict(sorted(self.frames.items()))}


def stats(m: Manifest) -> ProvenanceStats:
    out = ProvenanceStats()
    for e in m.entries:
        out.entries[e.label_source.bucket] += 1
        out.frames[e.label_source.bucket] += len(e.frame_ids)
    return out
