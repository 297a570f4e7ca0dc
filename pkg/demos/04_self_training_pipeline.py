"""The six-step pseudo-label pipeline end to end, on toy data with stub commands.

The stub trainer only counts labeled frames and the stub predictor gets
less noisy as that count grows, so this shows the bookkeeping (schedules,
pseudo-label injection, manifest merging, TTA fusion, resumable state) and
not a real accuracy gain.  Swap ``train_cmd`` / ``predict_cmd`` for your
own model's commands to run it for real.

Run: python demos/04_self_training_pipeline.py [work_root]
"""
import json
import sys
import tempfile
from pathlib import Path

from rvoskit import manifest as mf, selftrain, stub

root = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="rvoskit-demo-"))
paths = stub.make_synthetic_dataset(root / "data")

py = sys.executable
config = selftrain.config_from_dict({
    "train_manifest": "data/train.json",
    "val_manifest": "data/valid.json",
    "test_manifest": "data/test.json",
    "val_gt_manifest": "data/valid_gt.json",   # scoring only; never shown to the trainer
    "test_gt_manifest": "data/test_gt.json",
    "train_cmd": [py, "-m", "rvoskit.stub", "train", "--manifest", "{manifest}",
                  "--schedule", "{schedule}", "--out", "{out_dir}", "--round", "{round}"],
    "predict_cmd": [py, "-m", "rvoskit.stub", "predict", "--manifest", "{manifest}", "--out", "{out_dir}",
                    "--model", "{model}", "--scale", "{scales}", "--flip", "{flip}", "--seed", "{seed}",
                    "--noise", "0.8"],
    "clr": {"lr_min": 1e-7, "lr_max": 1e-5, "iters_per_epoch": 25},
    "round_epochs": [4, 5, 7, 7],
    "tta_scales": [24, 32],
    "tta_flip": True,
    "work_dir": "work",
    "seed": 0,
}, base_dir=root)

state = selftrain.run_all(config, workers=4)
print("status:", state.status, "| steps:", " ".join(state.completed_steps))

work = config.work_dir
for step in ("S2", "S4", "S5", "S6"):
    report = json.loads((work / state.artifacts[step]["report"]).read_text())
    print(f"{step}: J&F {report['JF']:.3f}")

for step in ("S3", "S5"):
    counts = mf.stats(mf.load_manifest(work / state.artifacts[step]["manifest"]))
    print(f"{step} training set entries by label source: {dict(sorted((+counts.entries).items()))}")

print("final fused masks:", work / state.artifacts["S6"]["fused"])
