"""Command-line entry point: ``rvoskit <subcommand> ...``.

Exit codes: 0 success, 1 domain error (bad input files, failed pipeline
step), 2 usage error.  Logs go to stderr; data goes to files only.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import clr, manifest as mf, metrics, selftrain, stub, tta
from .raster import read_mask
from .errors import RvosError

log = logging.getLogger("rvoskit")


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def cmd_evaluate(args) -> int:
    m = mf.load_manifest(args.manifest, check_files=False)
    per_sequence = {}
    for e in m.entries:
        pairs = []
        for fid in e.frame_ids:
            pred = Path(args.pred) / e.video_id / e.expression_id / f"{fid}.png"
            gt = Path(args.gt) / e.video_id / e.expression_id / f"{fid}.png"
            pairs.append((read_mask(pred), read_mask(gt)))
        per_sequence[e.key] = metrics.eval_sequence(pairs, args.bound_frac)
    report = metrics.aggregate(per_sequence)
    report.save(args.out, args.csv)
    log.info("J %.4f  F %.4f  J&F %.4f over %d sequences", report.j_mean, report.f_mean, report.jf, len(per_sequence))
    return 0


def cmd_fuse(args) -> int:
    m = mf.load_manifest(args.manifest)
    specs = tta.enumerate_augs(args.scales, args.flip, args.long_cap)
    n = tta.fuse_tree(m, args.pred_root, specs, args.out, args.threshold)
    log.info("fused %d frames from %d augmentations", n, len(specs))
    return 0


def cmd_schedule(args) -> int:
    spec = clr.ScheduleSpec(args.lr_min, args.lr_max, args.iters_per_epoch, args.epochs)
    clr.emit_schedule(spec, args.out)
    return 0


def cmd_pipeline(args) -> int:
    config = selftrain.load_config(args.config)
    state = selftrain.run_all(config, resume=args.resume, workers=args.workers)
    if state.status != "done":
        log.error("pipeline %s at %s: %s", state.status, state.next_step, (state.error or {}).get("message"))
        return 1
    log.info("pipeline done; final predictions in %s", config.work_dir / state.artifacts["S6"]["fused"])
    return 0


def _fmt(x: float) -> str:
    return format(x, ".10g")


def cmd_report_rank(args) -> int:
    upper = 1.0 if args.fraction else 100.0
    rows = []
    with open(args.input, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"name", "J", "F"} <= set(reader.fieldnames):
            raise RvosError(f"{args.input}: expected a header with columns name,J,F")
        for row in reader:
            j, f = float(row["J"]), float(row["F"])
            if not (0.0 <= j <= upper and 0.0 <= f <= upper):
                raise RvosError(f"{args.input}: {row['name']!r} has J/F outside [0, {upper:g}]")
            rows.append((row["name"], j, f))
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["rank", "name", "JF", "J", "F"])
        for rank, r in enumerate(metrics.rank_table(rows), start=1):
            writer.writerow([rank, r.name, _fmt(r.jf), _fmt(r.j), _fmt(r.f)])
    return 0


def cmd_stub_predict(args) -> int:
    stub.predict(args.manifest, args.out, args.seed, args.noise, args.model, args.scale, bool(args.flip), args.long_cap)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rvoskit", description="Referring-VOS evaluation, TTA fusion, "
                                     "CLR schedules and self-training orchestration.")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help="stderr log verbosity (default: INFO)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    p = sub.add_parser("evaluate", help="score predicted masks against ground truth (J, F, J&F)")
    p.add_argument("--pred", required=True, metavar="DIR", help="predictions: DIR/<video>/<expr>/<frame>.png")
    p.add_argument("--gt", required=True, metavar="DIR", help="ground truth: DIR/<video>/<expr>/<frame>.png")
    p.add_argument("--manifest", required=True, metavar="FILE", help="manifest listing the sequences to score")
    p.add_argument("--out", required=True, metavar="FILE", help="report JSON to write")
    p.add_argument("--csv", metavar="FILE", help="optional per-sequence CSV (video,expression,J,F)")
    p.add_argument("--bound-frac", type=float, default=0.008,
                   help="boundary tolerance as a fraction of the image diagonal (default: 0.008)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("fuse", help="fuse per-augmentation predictions into hard masks")
    p.add_argument("--pred-root", required=True, metavar="DIR", help="DIR/<aug_tag>/<video>/<expr>/<frame>.pfm|png")
    p.add_argument("--scales", required=True, type=_int_list, metavar="CSV", help="short sides, e.g. 288,352,448")
    p.add_argument("--flip", action="store_true", help="include horizontally flipped variants")
    p.add_argument("--long-cap", type=int, metavar="N", help="maximum long side used at inference")
    p.add_argument("--manifest", required=True, metavar="FILE", help="manifest of the predicted split")
    p.add_argument("--threshold", type=float, default=0.5, help="foreground threshold on the mean (default: 0.5)")
    p.add_argument("--out", required=True, metavar="DIR", help="output: DIR/<video>/<expr>/<frame>.png")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("schedule", help="write a triangular CLR schedule CSV")
    p.add_argument("--lr-min", type=float, default=1e-7, help="lower bound (default: 1e-7)")
    p.add_argument("--lr-max", type=float, default=1e-5, help="upper bound (default: 1e-5)")
    p.add_argument("--iters-per-epoch", type=int, required=True, metavar="N", help="iterations per epoch (cycle length)")
    p.add_argument("--epochs", type=int, required=True, metavar="E", help="number of epochs")
    p.add_argument("--out", required=True, metavar="FILE", help="CSV to write (iter,lr)")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("pipeline", help="self-training pipeline")
    psub = p.add_subparsers(dest="action", required=True, metavar="ACTION")
    pr = psub.add_parser("run", help="run (or resume) all six steps")
    pr.add_argument("--config", required=True, metavar="FILE", help="pipeline config JSON")
    pr.add_argument("--resume", action="store_true", help="continue an existing run in the config's work_dir")
    pr.add_argument("--workers", type=int, default=1, metavar="N", help="parallel predict invocations (default: 1)")
    pr.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("report", help="leaderboard reports")
    rsub = p.add_subparsers(dest="action", required=True, metavar="ACTION")
    rr = rsub.add_parser("rank", help="rank rows of name,J,F by J&F")
    rr.add_argument("--in", dest="input", required=True, metavar="FILE", help="CSV with columns name,J,F")
    rr.add_argument("--out", required=True, metavar="FILE", help="ranked CSV (rank,name,JF,J,F)")
    rr.add_argument("--fraction", action="store_true", help="values are fractions in [0,1] instead of percent")
    rr.set_defaults(func=cmd_report_rank)

    p = sub.add_parser("stub-predict", help="deterministic fixture predictions (testing only)")
    p.add_argument("--manifest", required=True, metavar="FILE", help="manifest of the split to predict")
    p.add_argument("--out", required=True, metavar="DIR", help="output: DIR/<video>/<expr>/<frame>.pfm")
    p.add_argument("--seed", type=int, default=0, help="noise seed (default: 0)")
    p.add_argument("--noise", type=float, default=0.3, help="noise standard deviation (default: 0.3)")
    p.add_argument("--model", metavar="DIR", help="stub model dir; shrinks noise by its labeled-frame count")
    p.add_argument("--scale", type=int, metavar="N", help="short side of the augmented geometry")
    p.add_argument("--flip", type=int, choices=(0, 1), default=0, help="emit horizontally flipped maps")
    p.add_argument("--long-cap", type=int, metavar="N", help="maximum long side")
    p.set_defaults(func=cmd_stub_predict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    logging.basicConfig(level=args.log_level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (RvosError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
