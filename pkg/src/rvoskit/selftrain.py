"""Resumable pseudo-label self-training driven by external train/predict commands.

The procedure has six steps, run strictly in order:

S1  finetune on the training split with a fresh CLR schedule
S2  predict the validation split (TTA + fusion), inject pseudo labels (round 1)
S3  re-finetune on train + pseudo-labeled validation
S4  re-predict validation, re-inject (round 2) and re-finetune again; each
    extra entry in ``round_epochs`` beyond four adds one more such round
S5  predict the test split, inject its pseudo labels, re-finetune on
    train + validation + test
S6  predict the test split with the final model

The model is a black box: each step renders argv templates, runs them
without a shell, and exchanges files only.  After every step the state is
written atomically to ``<work_dir>/state.json``; a failed command leaves the
state ``halted`` at the last completed step and ``run_all(resume=True)``
retries from there.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import shutil
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import manifest as mf
from .clr import ScheduleSpec, emit_schedule
from .errors import ConfigError, RvosError
from .metrics import aggregate, eval_sequence
from .raster import read_mask
from .tta import AugmentationSpec, enumerate_augs, fuse_tree

log = logging.getLogger(__name__)

STEPS = ("S1", "S2", "S3", "S4", "S5", "S6")
STEP_DESCRIPTIONS = {
    "S1": "finetune on train with CLR",
    "S2": "predict valid, inject pseudo labels",
    "S3": "re-finetune on train + valid pseudo labels",
    "S4": "re-predict valid, re-inject, re-finetune",
    "S5": "predict test, inject, re-finetune on train + valid + test",
    "S6": "final test prediction",
}

PLACEHOLDERS = frozenset({"manifest", "out_dir", "schedule", "round", "scales", "flip", "model", "seed"})
TRAIN_PLACEHOLDERS = PLACEHOLDERS - {"scales", "flip", "model"}
PREDICT_PLACEHOLDERS = PLACEHOLDERS - {"schedule"}
_PLACEHOLDER_RE = re.compile(r"\{([^{}]*)\}")

STATE_FILE = "state.json"


def placeholders(argv: Sequence[str]) -> set[str]:
    return {name for arg in argv for name in _PLACEHOLDER_RE.findall(arg)}


def check_template(argv: Sequence[str], kind: str) -> None:
    if not argv or not all(isinstance(a, str) for a in argv):
        raise ConfigError(f"{kind} command must be a non-empty list of strings")
    allowed, required = {
        "train": (TRAIN_PLACEHOLDERS, {"manifest", "schedule"}),
        "predict": (PREDICT_PLACEHOLDERS, {"manifest", "out_dir"}),
    }[kind]
    used = placeholders(argv)
    if used - allowed:
        raise ConfigError(f"{kind} command uses unknown placeholders {sorted(used - allowed)}")
    if required - used:
        raise ConfigError(f"{kind} command must contain {sorted(required - used)}")


def _bind_value(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    return str(value)


def render_command(argv: Sequence[str], bindings: Mapping[str, Any]) -> list[str]:
    """Substitute ``{name}`` placeholders textually; nothing is shell-interpreted."""

    def sub(match):
        name = match.group(1)
        if name not in PLACEHOLDERS:
            raise ConfigError(f"unknown placeholder {{{name}}}")
        if name not in bindings:
            raise ConfigError(f"unbound placeholder {{{name}}}")
        return _bind_value(bindings[name])

    return [_PLACEHOLDER_RE.sub(sub, arg) for arg in argv]


@dataclass(frozen=True)
class PipelineConfig:
    train_manifest: Path
    val_manifest: Path
    test_manifest: Path
    train_cmd: tuple[str, ...]
    predict_cmd: tuple[str, ...]
    work_dir: Path
    clr: ScheduleSpec = ScheduleSpec(1e-7, 1e-5, 1000, 1)
    round_epochs: tuple[int, ...] = (4, 5, 7, 7)
    tta_scales: tuple[int, ...] = (288, 352, 448, 512, 640)
    tta_flip: bool = True
    test_tta_scales: tuple[int, ...] | None = None
    test_tta_flip: bool | None = None
    long_cap: int | None = None
    threshold: float = 0.5
    seed: int = 0
    val_gt_manifest: Path | None = None
    test_gt_manifest: Path | None = None
    bound_frac: float = 0.008
    # canonical JSON of the config as written, used for the resume check
    source: str = field(default="", compare=False, repr=False)

    def __post_init__(self):
        check_template(self.train_cmd, "train")
        check_template(self.predict_cmd, "predict")
        if len(self.round_epochs) < 4 or any(int(e) < 1 for e in self.round_epochs):
            raise ConfigError(
                f"round_epochs needs at least four positive entries (S1, S3, S4, S5), got {list(self.round_epochs)}"
            )
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("threshold must be in (0, 1)")
        try:
            self.val_specs()
            self.test_specs()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def config_hash(self) -> str:
        text = self.source
        if not text:
            fields = {k: v for k, v in asdict(self).items() if k != "source"}
            text = json.dumps(fields, sort_keys=True, default=str)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    @property
    def n_val_rounds(self) -> int:
        """Validation re-prediction rounds performed inside S4."""
        return len(self.round_epochs) - 3

    def val_specs(self) -> list[AugmentationSpec]:
        return enumerate_augs(list(self.tta_scales), self.tta_flip, self.long_cap)

    def test_specs(self) -> list[AugmentationSpec]:
        scales = self.tta_scales if self.test_tta_scales is None else self.test_tta_scales
        flip = self.tta_flip if self.test_tta_flip is None else self.test_tta_flip
        return enumerate_augs(list(scales), flip, self.long_cap)

    def schedule(self, epochs: int) -> ScheduleSpec:
        return ScheduleSpec(self.clr.lr_min, self.clr.lr_max, self.clr.iters_per_epoch, epochs)


_CONFIG_KEYS = {
    "train_manifest", "val_manifest", "test_manifest", "train_cmd", "predict_cmd", "work_dir", "clr",
    "round_epochs", "tta_scales", "tta_flip", "test_tta_scales", "test_tta_flip", "long_cap",
    "threshold", "seed", "val_gt_manifest", "test_gt_manifest", "bound_frac",
}


def config_from_dict(doc: Mapping[str, Any], base_dir: str | os.PathLike = ".") -> PipelineConfig:
    """Build a config from its JSON form; relative paths resolve against ``base_dir``."""
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    missing = {"train_manifest", "val_manifest", "test_manifest", "train_cmd", "predict_cmd", "work_dir"} - set(doc)
    if missing:
        raise ConfigError(f"missing config keys {sorted(missing)}")
    base = Path(os.path.abspath(base_dir))

    def path(key):
        value = doc.get(key)
        return None if value is None else Path(os.path.normpath(base / value))

    try:
        clr = ScheduleSpec(**{"epochs": 1, **doc.get("clr", {})})
        kwargs = dict(
            train_manifest=path("train_manifest"),
            val_manifest=path("val_manifest"),
            test_manifest=path("test_manifest"),
            train_cmd=tuple(doc["train_cmd"]),
            predict_cmd=tuple(doc["predict_cmd"]),
            work_dir=path("work_dir"),
            clr=clr,
            val_gt_manifest=path("val_gt_manifest"),
            test_gt_manifest=path("test_gt_manifest"),
            source=json.dumps(doc, sort_keys=True, separators=(",", ":")),
        )
        for key in ("round_epochs", "tta_scales", "test_tta_scales"):
            if doc.get(key) is not None:
                kwargs[key] = tuple(int(v) for v in doc[key])
        for key in ("tta_flip", "test_tta_flip", "long_cap", "threshold", "seed", "bound_frac"):
            if key in doc:
                kwargs[key] = doc[key]
        return PipelineConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def load_config(path: str | os.PathLike) -> PipelineConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return config_from_dict(doc, path.parent)


@dataclass
class PipelineState:
    config_hash: str
    completed_steps: list[str] = field(default_factory=list)
    current_round: int = 0
    artifacts: dict[str, dict[str, str]] = field(default_factory=dict)
    status: str = "running"  # running | halted | done
    error: dict[str, str] | None = None

    @property
    def next_step(self) -> str | None:
        n = len(self.completed_steps)
        return STEPS[n] if n < len(STEPS) else None

    @property
    def pending_steps(self) -> list[str]:
        return list(STEPS[len(self.completed_steps):])

    def to_json(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "completed_steps": list(self.completed_steps),
            "current_round": self.current_round,
            "artifacts": self.artifacts,
            "status": self.status,
            "error": self.error,
        }

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> "PipelineState":
        state = cls(**doc)
        if state.completed_steps != list(STEPS[: len(state.completed_steps)]):
            raise RvosError(f"corrupt state: completed steps {state.completed_steps} are not a prefix of {STEPS}")
        return state


def save_state(state: PipelineState, work_dir: str | os.PathLike) -> Path:
    """Write ``state.json`` atomically (temp file, fsync, rename)."""
    work_dir = Path(work_dir)
    target = work_dir / STATE_FILE
    fd, tmp = tempfile.mkstemp(prefix=".state-", suffix=".json", dir=work_dir)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(state.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return target


def load_state(work_dir: str | os.PathLike) -> PipelineState:
    with open(Path(work_dir) / STATE_FILE, encoding="utf-8") as fh:
        return PipelineState.from_json(json.load(fh))


def plan(config: PipelineConfig) -> PipelineState:
    """Validate inputs and return a fresh state with every step pending."""
    for path in (config.train_manifest, config.val_manifest, config.test_manifest,
                 config.val_gt_manifest, config.test_gt_manifest):
        if path is not None:
            mf.load_manifest(path)
    config.work_dir.mkdir(parents=True, exist_ok=True)
    return PipelineState(config.config_hash)


class StepFailed(RvosError):
    def __init__(self, message: str, stderr_path: Path | None = None):
        super().__init__(message)
        self.stderr_path = stderr_path


class _StepRunner:
    """Executes one step into ``<work_dir>/s<k>/``."""

    def __init__(self, config: PipelineConfig, state: PipelineState, workers: int = 1):
        self.config = config
        self.state = state
        self.workers = max(1, workers)
        self.work_dir = config.work_dir

    def rel(self, path: Path) -> str:
        return Path(os.path.relpath(path, self.work_dir)).as_posix()

    def artifact(self, step: str, key: str) -> Path:
        return self.work_dir / self.state.artifacts[step][key]

    # -- external commands -------------------------------------------------

    def _exec(self, argv: list[str], name: str, log_dir: Path) -> None:
        log_dir.mkdir(parents=True, exist_ok=True)
        out_path, err_path = log_dir / f"{name}.stdout.txt", log_dir / f"{name}.stderr.txt"
        log.info("running %s: %s", name, " ".join(argv))
        with open(out_path, "wb") as out, open(err_path, "wb") as err:
            try:
                proc = subprocess.run(argv, stdout=out, stderr=err, stdin=subprocess.DEVNULL)
            except OSError as exc:
                err.write(f"{exc}\n".encode())
                raise StepFailed(f"{name}: cannot execute {argv[0]!r}: {exc}", err_path) from exc
        if proc.returncode != 0:
            raise StepFailed(f"{name}: command exited with status {proc.returncode}", err_path)

    def _collect_stderr(self, log_dir: Path, names: Sequence[str]) -> None:
        with open(log_dir / "stderr.txt", "wb") as fh:
            for name in names:
                part = log_dir / f"{name}.stderr.txt"
                if part.exists():
                    fh.write(part.read_bytes())

    def train(self, manifest: mf.Manifest, step_dir: Path, round: int, epochs: int) -> dict[str, str]:
        manifest_path = step_dir / "manifest.json"
        schedule_path = step_dir / "schedule.csv"
        model_dir = step_dir / "model"
        mf.save_manifest(manifest, manifest_path)
        emit_schedule(self.config.schedule(epochs), schedule_path)
        model_dir.mkdir(parents=True, exist_ok=True)
        argv = render_command(self.config.train_cmd, {
            "manifest": manifest_path, "schedule": schedule_path, "out_dir": model_dir,
            "round": round, "seed": self.config.seed,
        })
        log_dir = step_dir / "log"
        try:
            self._exec(argv, "train", log_dir)
        finally:
            self._collect_stderr(log_dir, ["train"])
        return {"manifest": self.rel(manifest_path), "schedule": self.rel(schedule_path),
                "model": self.rel(model_dir)}

    def predict(self, manifest_path: Path, model_dir: Path, step_dir: Path, round: int,
                specs: Sequence[AugmentationSpec], gt_manifest: Path | None) -> dict[str, str]:
        pred_root, fused_root, log_dir = step_dir / "pred", step_dir / "fused", step_dir / "log"
        jobs = []
        for spec in specs:
            out_dir = pred_root / spec.tag
            out_dir.mkdir(parents=True, exist_ok=True)
            argv = render_command(self.config.predict_cmd, {
                "manifest": manifest_path, "out_dir": out_dir, "model": model_dir, "round": round,
                "scales": [spec.short_side], "flip": spec.hflip, "seed": self.config.seed,
            })
            jobs.append((argv, f"predict_{spec.tag}"))
        try:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                futures = [pool.submit(self._exec, argv, name, log_dir) for argv, name in jobs]
                # surface the first failure in submission order
                for fut in futures:
                    fut.result()
        finally:
            self._collect_stderr(log_dir, [name for _, name in jobs])

        manifest = mf.load_manifest(manifest_path)
        try:
            fuse_tree(manifest, pred_root, specs, fused_root, self.config.threshold)
        except (OSError, ValueError, RvosError) as exc:
            raise StepFailed(f"fusing predictions failed: {exc}") from exc
        out = {"pred": self.rel(pred_root), "fused": self.rel(fused_root)}
        if gt_manifest is not None:
            report_path = step_dir / "report.json"
            evaluate_tree(fused_root, mf.load_manifest(gt_manifest), self.config.bound_frac).save(report_path)
            out["report"] = self.rel(report_path)
        return out

    def inject(self, base: mf.Manifest, step_dir: Path, fused: Path, round: int, name: str) -> tuple[mf.Manifest, Path]:
        pseudo, skipped = mf.inject_pseudo(base, fused, round)
        for key in skipped:
            log.warning("%s keeps ground-truth labels; not replaced by pseudo labels", key)
        path = step_dir / name
        mf.save_manifest(pseudo, path)
        return pseudo, path

    # -- the six steps -------------------------------------------------------

    def run(self, step: str) -> tuple[dict[str, str], int]:
        step_dir = self.work_dir / step.lower()
        if step_dir.exists():
            shutil.rmtree(step_dir)  # leftovers of an interrupted attempt
        step_dir.mkdir(parents=True)
        return getattr(self, f"_{step.lower()}")(step_dir)

    def _s1(self, step_dir):
        train = mf.load_manifest(self.config.train_manifest)
        return self.train(train, step_dir, 0, self.config.round_epochs[0]), 0

    def _s2(self, step_dir):
        cfg = self.config
        out = self.predict(cfg.val_manifest, self.artifact("S1", "model"), step_dir, 1,
                           cfg.val_specs(), cfg.val_gt_manifest)
        val = mf.load_manifest(cfg.val_manifest)
        _, path = self.inject(val, step_dir, step_dir / "fused", 1, "manifest.json")
        out["pseudo"] = self.rel(path)
        return out, 1

    def _s3(self, step_dir):
        train = mf.load_manifest(self.config.train_manifest)
        val_pseudo = mf.load_manifest(self.artifact("S2", "pseudo"))
        joint = mf.merge([train, val_pseudo], "train+valid")
        return self.train(joint, step_dir, 1, self.config.round_epochs[1]), 1

    def _s4(self, step_dir):
        cfg = self.config
        train = mf.load_manifest(cfg.train_manifest)
        model = self.artifact("S3", "model")
        pseudo_path = self.artifact("S2", "pseudo")
        out: dict[str, str] = {}
        last_round = 1 + cfg.n_val_rounds
        for round in range(2, last_round + 1):
            round_dir = step_dir if round == 2 else step_dir / f"round{round}"
            round_dir.mkdir(parents=True, exist_ok=True)
            out = self.predict(cfg.val_manifest, model, round_dir, round, cfg.val_specs(), cfg.val_gt_manifest)
            val_pseudo, pseudo_path = self.inject(mf.load_manifest(pseudo_path), round_dir,
                                                  round_dir / "fused", round, "pseudo.json")
            out["pseudo"] = self.rel(pseudo_path)
            out.update(self.train(mf.merge([train, val_pseudo], "train+valid"), round_dir, round,
                                  cfg.round_epochs[round]))
            model = self.work_dir / out["model"]
        return out, last_round

    def _s5(self, step_dir):
        cfg = self.config
        round = len(cfg.round_epochs) - 1
        out = self.predict(cfg.test_manifest, self.artifact("S4", "model"), step_dir, round,
                           cfg.test_specs(), cfg.test_gt_manifest)
        test_pseudo, path = self.inject(mf.load_manifest(cfg.test_manifest), step_dir,
                                        step_dir / "fused", round, "pseudo.json")
        out["pseudo"] = self.rel(path)
        train = mf.load_manifest(cfg.train_manifest)
        val_pseudo = mf.load_manifest(self.artifact("S4", "pseudo"))
        joint = mf.merge([train, val_pseudo, test_pseudo], "train+valid+test")
        out.update(self.train(joint, step_dir, round, cfg.round_epochs[round]))
        return out, round

    def _s6(self, step_dir):
        cfg = self.config
        round = len(cfg.round_epochs) - 1
        out = self.predict(cfg.test_manifest, self.artifact("S5", "model"), step_dir, round,
                           cfg.test_specs(), cfg.test_gt_manifest)
        return out, round


def evaluate_tree(pred_root: str | os.PathLike, gt: mf.Manifest, bound_frac: float = 0.008):
    """Score ``<pred_root>/<video>/<expr>/<frame>.png`` against a labeled manifest."""
    per_sequence = {}
    for e in gt.entries:
        pairs = [
            (read_mask(Path(pred_root) / e.video_id / e.expression_id / f"{fid}.png"), read_mask(e.label_path(fid)))
            for fid in e.frame_ids
        ]
        per_sequence[e.key] = eval_sequence(pairs, bound_frac)
    return aggregate(per_sequence)


def run_step(state: PipelineState, config: PipelineConfig, workers: int = 1) -> PipelineState:
    """Run the next pending step and persist the resulting state.

    A failing external command leaves the step uncompleted and the state
    ``halted`` with the error message and the captured stderr path.
    """
    if state.status != "running":
        raise RvosError(f"cannot run a step while the pipeline is {state.status}")
    step = state.next_step
    if step is None:
        state.status = "done"
        save_state(state, config.work_dir)
        return state
    log.info("step %s: %s", step, STEP_DESCRIPTIONS[step])
    runner = _StepRunner(config, state, workers)
    try:
        artifacts, round = runner.run(step)
    except (RvosError, OSError, ValueError) as exc:
        state.status = "halted"
        state.error = {"step": step, "message": str(exc)}
        if getattr(exc, "stderr_path", None) is not None:
            state.error["stderr"] = runner.rel(exc.stderr_path)
        save_state(state, config.work_dir)
        log.error("step %s halted: %s", step, exc)
        return state
    state.completed_steps.append(step)
    state.artifacts[step] = artifacts
    state.current_round = round
    if state.next_step is None:
        state.status = "done"
    save_state(state, config.work_dir)
    return state


def run_all(config: PipelineConfig, resume: bool = False, workers: int = 1) -> PipelineState:
    """Run every remaining step until the pipeline is done or halts."""
    state_path = config.work_dir / STATE_FILE
    if state_path.exists():
        if not resume:
            raise ConfigError(f"{state_path} already exists; pass resume=True (--resume) to continue it")
        state = load_state(config.work_dir)
        if state.config_hash != config.config_hash:
            raise ConfigError("config changed since this run started (config hash mismatch); refusing to resume")
        if state.status == "halted":
            log.info("retrying halted step %s", state.next_step)
            state.status, state.error = "running", None
        if state.status == "running":
            plan(config)  # re-validate inputs before touching anything
    else:
        state = plan(config)
    while state.status == "running":
        state = run_step(state, config, workers)
    return state
