import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rvoskit import stub  # noqa: E402

PY = sys.executable


def random_mask(rng, shape=(32, 32)):
    """Either salt-and-pepper noise or a union of rectangles, so both
    ragged and clean boundaries show up."""
    if rng.random() < 0.5:
        return (rng.random(shape) < rng.uniform(0.05, 0.95)).astype(np.uint8)
    m = np.zeros(shape, dtype=np.uint8)
    for _ in range(rng.integers(0, 4)):
        y0, x0 = rng.integers(0, shape[0]), rng.integers(0, shape[1])
        m[y0:y0 + rng.integers(1, 16), x0:x0 + rng.integers(1, 16)] = 1
    return m


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def stub_config(data_dir, work_dir, scales=(24, 32), noise=0.8, fail_marker=None, **extra):
    fail = ["--fail-if-exists", str(fail_marker)] if fail_marker else []
    cfg = {
        "train_manifest": str(Path(data_dir) / "train.json"),
        "val_manifest": str(Path(data_dir) / "valid.json"),
        "test_manifest": str(Path(data_dir) / "test.json"),
        "val_gt_manifest": str(Path(data_dir) / "valid_gt.json"),
        "test_gt_manifest": str(Path(data_dir) / "test_gt.json"),
        "train_cmd": [PY, "-m", "rvoskit.stub", "train", "--manifest", "{manifest}",
                      "--schedule", "{schedule}", "--out", "{out_dir}", "--round", "{round}"],
        "predict_cmd": [PY, "-m", "rvoskit.stub", "predict", "--manifest", "{manifest}", "--out", "{out_dir}",
                        "--model", "{model}", "--scale", "{scales}", "--flip", "{flip}",
                        "--seed", "{seed}", "--noise", str(noise)] + fail,
        "clr": {"lr_min": 1e-7, "lr_max": 1e-5, "iters_per_epoch": 10},
        "tta_scales": list(scales),
        "tta_flip": True,
        "work_dir": str(work_dir),
        "seed": 0,
    }
    cfg.update(extra)
    return cfg


def write_config(path, cfg):
    Path(path).write_text(json.dumps(cfg, indent=2), encoding="utf-8")
    return Path(path)


@pytest.fixture
def dataset(tmp_path):
    root = tmp_path / "data"
    stub.make_synthetic_dataset(root)
    return root


# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
