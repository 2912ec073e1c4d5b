"""Command line entry points: synth, train, eval, compare, plot."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .types import DEFAULT_CLASS_NAMES, Scenario


def _add_synth(sub):
    p = sub.add_parser("synth", help="generate a synthetic dataset on disk")
    p.add_argument("--out", type=Path, required=True, help="dataset root directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tiles", type=int, nargs=3, default=(8, 2, 2), metavar=("TRAIN", "VAL", "TEST"))
    p.add_argument("--tile-size", type=int, default=256)
    p.add_argument("--num-classes", type=int, default=6)
    p.add_argument("--force", action="store_true", help="write into a non-empty directory")


def _add_train(sub):
    p = sub.add_parser("train", help="train a model from a yaml config")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--out", type=Path, default=None, help="override the run directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--baseline", action="store_true", help="drop translation and fusion extras")
    p.add_argument("--mode", choices=("ae", "cgan"), default=None, help="override the loss mode")
    p.add_argument("--resume", type=Path, default=None, help="checkpoint to continue from")
    p.add_argument("--quiet", action="store_true")


def _add_eval(sub):
    p = sub.add_parser("eval", help="score a checkpoint on a stored split")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True, help="dataset root directory")
    p.add_argument("--split", default="test")
    p.add_argument(
        "--scenario",
        choices=[s.value for s in Scenario] + ["all"],
        default="all",
    )
    p.add_argument("--out", type=Path, default=None, help="csv report path")


def _add_compare(sub):
    p = sub.add_parser("compare", help="delta report between two checkpoints")
    p.add_argument("--baseline", type=Path, required=True, help="baseline checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True, help="candidate checkpoint")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--split", default="test")


def _add_plot(sub):
    p = sub.add_parser("plot", help="render training curves or eval bar charts")
    p.add_argument("--loss-csv", type=Path, default=None)
    p.add_argument("--eval-csv", type=Path, default=None, help="per-class report csv")
    p.add_argument("--val-csv", type=Path, default=None, help="run eval log csv")
    p.add_argument("--out", type=Path, required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robuseg",
        description="modality-robust multimodal segmentation harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_synth(sub)
    _add_train(sub)
    _add_eval(sub)
    _add_compare(sub)
    _add_plot(sub)
    return parser


def cmd_synth(args) -> int:
    from .data import (
        STATS_FILENAME,
        compute_normalization_stats,
        save_normalization_stats,
        write_manifest,
        write_tile,
    )
    from .synthetic import synth_dataset

    out: Path = args.out
    if out.exists() and any(out.iterdir()) and not args.force:
        print(f"error: {out} is not empty (use --force to write anyway)", file=sys.stderr)
        return 1
    n_train, n_val, n_test = args.tiles
    offset = 0
    train_raw = []
    for split, count in (("train", n_train), ("val", n_val), ("test", n_test)):
        tiles = synth_dataset(
            seed=args.seed,
            n_tiles=count,
            tile_size=args.tile_size,
            num_classes=args.num_classes,
            id_offset=offset,
        )
        offset += count
        split_dir = out / split
        for tile in tiles:
            rgir = tile.rgir.numpy()
            ndsm = tile.ndsm.numpy()
            write_tile(split_dir, tile.sample_id, rgir, ndsm, tile.label.numpy())
            if split == "train":
                train_raw.append({"rgir": rgir, "ndsm": ndsm})
        write_manifest(split_dir, [t.sample_id for t in tiles])
    stats = compute_normalization_stats(train_raw)
    save_normalization_stats(out / STATS_FILENAME, stats)
    print(f"wrote {n_train}+{n_val}+{n_test} tiles under {out}")
    return 0


def cmd_train(args) -> int:
    from .config import load_run_config
    from .train import Trainer

    config = load_run_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.out_dir = args.out
    if args.baseline:
        config.model.baseline = True
    if args.mode is not None:
        config.model.mode = args.mode
    trainer = Trainer(config)
    if args.resume is not None:
        trainer.resume(args.resume)
    result = trainer.run(quiet=args.quiet)
    print(f"finished {result['steps']} steps, best val mF1 {result['best_val_mf1']:.4f}")
    return 0


def _load_eval_pieces(checkpoint: Path, data_root: Path, split: str):
    from .evaluate import load_patches_for_eval
    from .train import load_checkpoint, model_from_checkpoint

    payload = load_checkpoint(checkpoint)
    model, run_config = model_from_checkpoint(payload)
    patches = load_patches_for_eval(
        data_root,
        split,
        patch_size=run_config.data.patch_size,
        num_classes=run_config.data.num_classes,
        ignore_index=run_config.data.ignore_index,
        class_names=run_config.data.class_names,
    )
    return model, run_config, patches


def cmd_eval(args) -> int:
    from .evaluate import evaluate_model, format_eval_table, write_eval_report

    model, run_config, patches = _load_eval_pieces(args.checkpoint, args.data, args.split)
    scenarios = (
        [s.value for s in Scenario] if args.scenario == "all" else [args.scenario]
    )
    results = evaluate_model(
        model,
        patches,
        num_classes=run_config.data.num_classes,
        ignore_index=run_config.data.ignore_index,
        exclude=run_config.data.excluded_indices(),
        scenarios=scenarios,
    )
    names = run_config.data.class_names or DEFAULT_CLASS_NAMES
    print(format_eval_table(results, names))
    if args.out is not None:
        write_eval_report(args.out, results, names)
        print(f"report written to {args.out}")
    return 0


def cmd_compare(args) -> int:
    from .evaluate import compare_results, evaluate_model
    from .train import load_checkpoint, model_from_checkpoint

    base_model, base_cfg, patches = _load_eval_pieces(args.baseline, args.data, args.split)
    cand_model, cand_cfg = model_from_checkpoint(load_checkpoint(args.checkpoint))
    if base_cfg.data.num_classes != cand_cfg.data.num_classes:
        print("error: checkpoints disagree on class count", file=sys.stderr)
        return 1
    kwargs = dict(
        num_classes=base_cfg.data.num_classes,
        ignore_index=base_cfg.data.ignore_index,
        exclude=base_cfg.data.excluded_indices(),
    )
    base_results = evaluate_model(base_model, patches, **kwargs)
    cand_results = evaluate_model(cand_model, patches, **kwargs)
    names = base_cfg.data.class_names or DEFAULT_CLASS_NAMES
    print(compare_results(base_results, cand_results, names))
    return 0


def cmd_plot(args) -> int:
    from .plots import plot_loss_curves, plot_scenario_f1, plot_val_curves

    if args.loss_csv is None and args.eval_csv is None and args.val_csv is None:
        print("error: give at least one of --loss-csv, --eval-csv, --val-csv", file=sys.stderr)
        return 1
    out_dir: Path = args.out
    written = []
    if args.loss_csv is not None:
        written.append(plot_loss_curves(args.loss_csv, out_dir / "loss_curves.png"))
    if args.eval_csv is not None:
        written.append(plot_scenario_f1(args.eval_csv, out_dir / "scenario_f1.png"))
    if args.val_csv is not None:
        written.append(plot_val_curves(args.val_csv, out_dir / "val_curves.png"))
    for path in written:
        print(f"wrote {path}")
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "compare": cmd_compare,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
