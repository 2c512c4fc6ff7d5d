"""Command-line entry point.

Commands:
    gen        generate and save a synthetic blob dataset
    train      train a model on a dataset directory (``--baseline`` for the
               partial-BCE-only run)
    selftrain  generate pseudo labels with a teacher checkpoint and train a
               fresh student on them
    eval       evaluate a checkpoint and append a row to a report CSV
    stats      annotation-accuracy statistics per weak-annotation type

Exit codes: 0 success, 2 argument/config errors, 3 divergence abort.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import dataio, metrics, selftrain
from .exceptions import ScribbleSegError, TrainingDivergedError
from .model import init_model, load_checkpoint, save_checkpoint
from .trainer import train


def _fallback_seed(flag_seed) -> int:
    if flag_seed is not None:
        return int(flag_seed)
    env = os.environ.get(cfgmod.SEED_ENV_VAR)
    return int(env) if env is not None else 0


def _cmd_gen(args) -> int:
    if args.size < 16 or args.size % 16:
        raise ValueError(f"--size must be a multiple of 16 and >= 16, got {args.size}")
    seed = _fallback_seed(args.seed)
    samples = dataio.generate_blob_dataset(args.n, args.size, args.size, seed)
    dataio.save_dataset(samples, args.out)
    print(f"wrote {len(samples)} samples to {args.out}")
    return 0


def _load_nonempty(path) -> list:
    samples = dataio.load_dataset(path)
    if not samples:
        raise ValueError(f"no samples found under {path}")
    return samples


def _cmd_train(args) -> int:
    samples = _load_nonempty(args.data)
    cp, user_keys = cfgmod.load_config(args.config)
    if args.epochs is not None:
        cp.set("train", "epochs", str(args.epochs))
    if args.lr is not None:
        cp.set("train", "lr", str(args.lr))
    seed = cfgmod.resolve_seed(args.seed, cp, user_keys)
    train_cfg = cfgmod.train_config(cp, seed, baseline=args.baseline)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfgmod.dump_effective(cp, seed, out / "config_used.cfg")

    val = _load_nonempty(args.val_data) if args.val_data else None
    model = init_model(width_base=cp.getint("train", "width_base"), seed=seed,
                       in_channels=cp.getint("train", "in_channels"))
    model, log = train(model, samples, train_cfg, val_dataset=val)

    digest = save_checkpoint(model, out / "model.ckpt")
    log.write_steps_jsonl(out / "train_steps.jsonl")
    log.write_epochs_csv(out / "epochs.csv")
    last = log.steps[-1]
    print(f"trained {train_cfg.epochs} epochs ({len(log.steps)} steps); "
          f"final l_pce={last.l_pce:.4f} l_align={last.l_align:.4f}")
    print(f"checkpoint {out / 'model.ckpt'} sha256={digest}")
    return 0


def _cmd_selftrain(args) -> int:
    samples = _load_nonempty(args.data)
    cp, user_keys = cfgmod.load_config(args.config)
    if args.epochs is not None:
        cp.set("train", "epochs", str(args.epochs))
    seed = cfgmod.resolve_seed(args.seed, cp, user_keys)
    train_cfg = cfgmod.train_config(cp, seed)

    teacher = load_checkpoint(args.teacher)
    pseudo = selftrain.generate_pseudo_labels(teacher, samples)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfgmod.dump_effective(cp, seed, out / "config_used.cfg")
    selftrain.save_pseudo_labels(pseudo, args.data)

    images = {s.id: s.image for s in samples}
    offset = cp.getint("selftrain", "student_seed_offset")
    student, log = selftrain.self_train(pseudo, images, train_cfg,
                                        init_seed=seed + offset,
                                        width_base=teacher.width_base)
    digest = save_checkpoint(student, out / "student.ckpt")
    log.write_steps_jsonl(out / "train_steps.jsonl")
    print(f"pseudo labels for {len(pseudo.labels)} samples -> {Path(args.data) / 'pseudo'}")
    print(f"student checkpoint {out / 'student.ckpt'} sha256={digest}")
    return 0


def _cmd_eval(args) -> int:
    samples = _load_nonempty(args.data)
    model = load_checkpoint(args.checkpoint)
    report = metrics.evaluate(model, samples, threshold=args.threshold,
                              aggregation=args.aggregation)
    metrics.append_report_row(args.report, args.method, report)
    print(f"{args.method}: dice={report.dice:.4f} iou={report.iou:.4f} "
          f"precision={report.precision:.4f} recall={report.recall:.4f} n={report.n_samples}")
    return 0


def _cmd_stats(args) -> int:
    samples = _load_nonempty(args.data)
    seed = _fallback_seed(args.seed)
    kinds = args.types.split(",")
    rows = []
    for kind in kinds:
        stats = []
        for i, s in enumerate(samples):
            if kind == "scribble":
                weak = s.scribble
            elif kind in ("box", "point"):
                weak = dataio.synthesize_weak(s.full_mask, kind, seed=seed + i)
            else:
                raise ValueError(f"unknown annotation type {kind!r}")
            stats.append(dataio.annotation_stats(s.full_mask, weak))
        rows.append((kind,
                     float(np.mean([t.accurate_fraction for t in stats])),
                     float(np.mean([t.noisy_fraction for t in stats])),
                     float(np.mean([t.unlabeled_fraction for t in stats]))))
    print(f"{'type':<10} {'accurate':>9} {'noisy':>9} {'unlabeled':>10}")
    for kind, acc, noisy, unl in rows:
        print(f"{kind:<10} {acc:>9.4f} {noisy:>9.4f} {unl:>10.4f}")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("type,accurate,noisy,unlabeled\n")
            for kind, acc, noisy, unl in rows:
                fh.write(f"{kind},{acc!r},{noisy!r},{unl!r}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scribbleseg",
                                     description="Scribble-supervised segmentation lab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--size", type=int, default=64, help="square image size (multiple of 16)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("train", help="train on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None, help="INI config overlaying the defaults")
    p.add_argument("--out", required=True)
    p.add_argument("--baseline", action="store_true",
                   help="disable alignments (partial-BCE-only run)")
    p.add_argument("--val-data", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("selftrain", help="one-shot pseudo labels + student training")
    p.add_argument("--data", required=True)
    p.add_argument("--teacher", required=True, help="teacher checkpoint path")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(func=_cmd_selftrain)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--report", required=True, help="CSV to append the result row to")
    p.add_argument("--method", default="model")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--aggregation", choices=("per_image_mean", "global_confusion"),
                   default="per_image_mean")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("stats", help="annotation accuracy statistics")
    p.add_argument("--data", required=True)
    p.add_argument("--types", default="scribble,box,point")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_stats)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ScribbleSegError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
