"""Command line interface.

One executable, six subcommands: synth (dataset generation), train, eval,
sweep (architecture comparison), gradcheck (finite-difference verification)
and tweak (capsule-dimension perturbation grids). Every command is
deterministic given its flags, writes only to paths named by flags, exits 0
on success and prints a one-line machine-parsable error otherwise.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import checkpoint as ckpt_io
from . import data, pgm, presets
from .capsnet import CapsNetModel, default_tweak_deltas, tweak
from .cnn import CnnModel
from .errors import CapsRouteError, ConfigError
from .gradcheck import MODEL_TOLERANCE, check_model, format_reports
from .rng import make_rng
from .train import (
    TrainConfig,
    default_train_config,
    evaluate,
    model_from_checkpoint,
    train,
    write_confusion_csv,
    write_reports_csv,
)

MODE_FLAGS = {"whole": "whole_brain", "segmented": "segmented_tumor"}
SWEEP_ORDER = (
    "original-256-maps",
    "two-conv-64",
    "one-conv-64",
    "16-primary-caps",
    "primary-dim-4",
    "decoder-1024-2048-4096",
)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def _fractions(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"need three comma-separated fractions, got {text!r}")
    return tuple(parts)  # type: ignore[return-value]


def _delta_list(text: str) -> list[float]:
    return [float(p) for p in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="capsroute",
        description="Capsule-network and CNN experiments on 64x64 brain tumor slices.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--per-class", type=_positive_int, default=20)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a model and write checkpoint + epoch CSV")
    p.add_argument("--model", choices=("capsnet", "cnn"), default="capsnet")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=tuple(MODE_FLAGS), default="whole")
    p.add_argument("--preset", default="default")
    p.add_argument("--out-ckpt", required=True)
    p.add_argument("--out-csv", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs-max", type=_positive_int, default=10)
    p.add_argument("--batch-size", type=_positive_int, default=16)
    p.add_argument("--optimizer", choices=("adam", "sgd_momentum"), default=None,
                   help="default: adam for capsnet, sgd_momentum for cnn")
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--patience", type=_positive_int, default=2)
    p.add_argument("--fractions", type=_fractions, default=data.DEFAULT_FRACTIONS,
                   help="train,val,test split fractions (patient-level)")
    p.add_argument("--timing", choices=("off", "wall"), default="off",
                   help="'wall' records wall-clock seconds per epoch; 'off' keeps the CSV reproducible")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=data.SPLITS, default="test")
    p.add_argument("--mode", choices=tuple(MODE_FLAGS), default="whole")
    p.add_argument("--seed", type=int, default=None,
                   help="split seed; defaults to the seed stored in the checkpoint")
    p.add_argument("--fractions", type=_fractions, default=data.DEFAULT_FRACTIONS)
    p.add_argument("--out-csv", default=None, help="write the confusion matrix here")

    p = sub.add_parser("sweep", help="train every architecture preset and tabulate accuracy")
    p.add_argument("--data", required=True)
    p.add_argument("--presets", choices=("all",), default="all")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=tuple(MODE_FLAGS), default="whole")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs-max", type=_positive_int, default=10)
    p.add_argument("--batch-size", type=_positive_int, default=16)
    p.add_argument("--patience", type=_positive_int, default=2)
    p.add_argument("--workers", type=_positive_int, default=1,
                   help="presets trained concurrently (capped by CAPSROUT_THREADS)")

    p = sub.add_parser("gradcheck", help="finite-difference check of every parameter group")
    p.add_argument("--model", choices=("capsnet", "cnn"), default="capsnet")
    p.add_argument("--tiny-config", action=argparse.BooleanOptionalAction, default=True,
                   help="use the small verification architecture (recommended)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch", type=_positive_int, default=2)
    p.add_argument("--max-entries", type=_positive_int, default=None,
                   help="probe at most this many entries per parameter group")
    p.add_argument("--tolerance", type=float, default=MODEL_TOLERANCE)

    p = sub.add_parser("tweak", help="perturb one class-capsule dimension and write PGM grids")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--index", type=int, default=0, help="sample index in dataset order")
    p.add_argument("--dim", type=int, default=0)
    p.add_argument("--deltas", type=_delta_list, default=None,
                   help="comma-separated deltas; default -0.25..0.25 step 0.05")
    p.add_argument("--mode", choices=tuple(MODE_FLAGS), default="whole")
    p.add_argument("--out-dir", required=True)
    return parser


def _load_dataset(args, seed: int) -> data.Dataset:
    return data.load_dataset(args.data, seed=seed,
                             fractions=getattr(args, "fractions", data.DEFAULT_FRACTIONS),
                             input_mode=MODE_FLAGS[getattr(args, "mode", "whole")])


def _new_model(kind: str, preset_name: str, seed: int):
    if kind == "capsnet":
        cfg = presets.capsnet_preset(preset_name)
        return CapsNetModel(cfg, rng=make_rng(seed, "init-capsnet"))
    cfg = presets.cnn_preset(preset_name)
    return CnnModel(cfg, rng=make_rng(seed, "init-cnn"))


def cmd_synth(args) -> int:
    samples = data.synth_generate(args.seed, args.per_class)
    data.store(args.out, samples)
    per_label = {name: sum(1 for s in samples if s.label == lab) for lab, name in data.LABEL_NAMES.items()}
    print(f"wrote {args.out}: {len(samples)} samples, per class {per_label}")
    return 0


def cmd_train(args) -> int:
    dataset = _load_dataset(args, args.seed)
    model = _new_model(args.model, args.preset, args.seed)
    overrides = dict(epochs_max=args.epochs_max, batch_size=args.batch_size,
                     momentum=args.momentum, early_stop_patience=args.patience,
                     seed=args.seed, learning_rate=args.lr)
    if args.optimizer is not None:
        overrides["optimizer"] = args.optimizer
    cfg = default_train_config(args.model, **overrides)
    ckpt, reports = train(model, dataset, cfg, timing=args.timing)
    ckpt_io.save(args.out_ckpt, ckpt)
    write_reports_csv(args.out_csv, reports)
    print(f"trained {args.model}/{args.preset}: epochs={len(reports)} "
          f"best_epoch={ckpt.meta['best_epoch']} val_accuracy={ckpt.meta['best_val_accuracy']:.4f}")
    return 0


def cmd_eval(args) -> int:
    ckpt = ckpt_io.load(args.ckpt)
    model = model_from_checkpoint(ckpt)
    seed = args.seed
    if seed is None:
        seed = int(ckpt.meta.get("train_config", {}).get("seed", 0))
    dataset = _load_dataset(args, seed)
    result = evaluate(model, dataset, args.split)
    print(f"accuracy {result['accuracy']:.6f}")
    for c in range(len(result["precision"])):
        print(f"class {c}: precision {result['precision'][c]:.6f} recall {result['recall'][c]:.6f}")
    if args.out_csv:
        write_confusion_csv(args.out_csv, result["confusion"])
    return 0


def cmd_sweep(args) -> int:
    dataset = _load_dataset(args, args.seed)

    def run(name: str) -> float:
        model = CapsNetModel(presets.capsnet_preset(name), rng=make_rng(args.seed, f"init-{name}"))
        cfg = TrainConfig(optimizer="adam", epochs_max=args.epochs_max,
                          batch_size=args.batch_size, early_stop_patience=args.patience,
                          seed=args.seed)
        _, _ = train(model, dataset, cfg)
        return evaluate(model, dataset, "test")["accuracy"]

    workers = args.workers
    cap = os.environ.get("CAPSROUT_THREADS")
    if cap is not None:
        workers = min(workers, max(1, int(cap)))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            accs = list(pool.map(run, SWEEP_ORDER))
    else:
        accs = [run(name) for name in SWEEP_ORDER]
    with open(args.out, "w", newline="") as fh:
        fh.write("preset,accuracy\n")
        for name, acc in zip(SWEEP_ORDER, accs):
            fh.write(f"{name},{acc!r}\n")
    print(f"wrote {args.out}: {len(SWEEP_ORDER)} presets")
    return 0


def cmd_gradcheck(args) -> int:
    preset_name = "tiny" if args.tiny_config else "default"
    if args.model == "capsnet":
        cfg = presets.capsnet_preset(preset_name)
        model = CapsNetModel(cfg, rng=make_rng(args.seed, "init-capsnet"), dtype=np.float64)
    else:
        cfg = presets.cnn_preset(preset_name)
        model = CnnModel(cfg, rng=make_rng(args.seed, "init-cnn"), dtype=np.float64)
    rng = make_rng(args.seed, "gradcheck")
    images = rng.uniform(0.0, 1.0, size=(args.batch, 1, cfg.input_side, cfg.input_side))
    labels = rng.integers(0, cfg.class_count, size=args.batch)
    reports = check_model(model, images, labels, tolerance=args.tolerance,
                          max_entries=args.max_entries, rng=rng)
    print(format_reports(reports))
    return 0 if all(r.ok for r in reports) else 1


def cmd_tweak(args) -> int:
    ckpt = ckpt_io.load(args.ckpt)
    model = model_from_checkpoint(ckpt, expect_kind="capsnet")
    samples = data.load(args.data)
    if not 0 <= args.index < len(samples):
        raise ConfigError(f"--index {args.index} out of range 0..{len(samples) - 1}")
    image = data.apply_input_mode(samples[args.index], MODE_FLAGS[args.mode])
    deltas = args.deltas if args.deltas is not None else default_tweak_deltas()
    result = tweak(model, image, args.dim, deltas)
    os.makedirs(args.out_dir, exist_ok=True)
    for i, (delta, recon) in enumerate(zip(result.deltas, result.images)):
        pgm.write(os.path.join(args.out_dir, f"delta_{i:02d}_{delta:+.2f}.pgm"), recon)
    pgm.write(os.path.join(args.out_dir, "strip.pgm"), pgm.strip(result.images))
    print(f"wrote {len(result.images)} tweak images + strip to {args.out_dir} "
          f"(winning capsule {result.winner}, dim {args.dim})")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "gradcheck": cmd_gradcheck,
    "tweak": cmd_tweak,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except CapsRouteError as exc:
        print(f"capsroute: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"capsroute: error: OSError: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
