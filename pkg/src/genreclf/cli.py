"""Command-line front end.

Subcommands: import, synth, train, eval, predict, ablate, frames-sweep.
Every run writes ``run_manifest.json`` (resolved config + seed + argv) into
its output directory so results are reproducible from the manifest alone.
Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import __version__
from .data import (VideoRecord, filter_by_duration, load_manifest,
                   split_records, write_manifest)
from .errors import ConfigError, DataError, NumericError
from .metrics import format_table, to_csv
from .mmf import import_npy, write_mmf
from .models import ModelConfig, predict
from .modalities import default_modalities
from .checkpoint import load_checkpoint
from .rng import SeededRng, derive_seed
from .synth import synth_mean_encoded, synth_order_encoded
from .training import TrainConfig, Trainer, evaluate
from .vocab import GENRES

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _write_run_manifest(out_dir: str, command: str, resolved: dict, seed: int):
    os.makedirs(out_dir, exist_ok=True)
    doc = {
        "command": command,
        "argv": sys.argv[1:],
        "seed": seed,
        "version": __version__,
        "resolved_config": resolved,
    }
    with open(os.path.join(out_dir, "run_manifest.json"), "w") as fh:
        json.dump(doc, fh, indent=1)


def _load_train_config(args) -> TrainConfig:
    if args.config:
        with open(args.config) as fh:
            cfg = TrainConfig.from_dict(json.load(fh))
    elif args.preset:
        model = ModelConfig.preset(args.preset,
                                   modalities=args.modalities.split(",") if args.modalities else None,
                                   averaged=args.averaged.split(",") if args.averaged else ())
        cfg = TrainConfig(model=model)
    else:
        raise ConfigError("provide --config JSON or --preset")
    if args.seed is not None:
        cfg.seed = args.seed  # --seed wins over the config file
    if args.epochs is not None:
        cfg.epochs = args.epochs
    if args.max_steps is not None:
        cfg.max_steps = args.max_steps
    if args.lr is not None:
        cfg.lr = args.lr
    if args.batch_size is not None:
        cfg.batch_size = args.batch_size
    if args.eval_interval is not None:
        cfg.eval_interval = args.eval_interval
    return cfg


def _load_split_records(data_dir: str):
    manifest = os.path.join(data_dir, "manifest.json")
    if not os.path.exists(manifest):
        raise DataError(f"no manifest.json under {data_dir}")
    records = load_manifest(manifest)
    kept, stats = filter_by_duration(records)
    if not kept:
        raise DataError("duration filter removed every record")
    return split_records(kept), stats


# -- subcommands -----------------------------------------------------------


def cmd_import(args) -> int:
    specs = default_modalities()
    summary = import_npy(args.npy_dir, args.manifest, args.out, specs)
    _write_run_manifest(args.out, "import", {"npy_dir": args.npy_dir, "manifest": args.manifest},
                        args.seed or 0)
    for msg in summary["errors"]:
        print(f"warning: {msg}", file=sys.stderr)
    print(f"imported {summary['imported']} videos, {summary['failed']} failed, "
          f"{summary['dropped_genre_labels']} unknown genre labels dropped")
    if summary["imported"] == 0:
        raise DataError("nothing imported")
    return 0


def cmd_synth(args) -> int:
    seed = args.seed or 0
    if args.kind == "mean":
        records = synth_mean_encoded(args.n, seed, noise_std=args.noise_std)
    elif args.kind == "order":
        records = synth_order_encoded(args.n, seed)
    else:
        raise ConfigError(f"unknown synthetic kind {args.kind!r}")
    os.makedirs(args.out, exist_ok=True)
    for rec in records:
        path = os.path.join(args.out, f"{rec.id}.mmf")
        write_mmf(rec.features, path)
        rec.path = path
    write_manifest(records, os.path.join(args.out, "manifest.json"))
    _write_run_manifest(args.out, "synth", {"kind": args.kind, "n": args.n, "noise_std": args.noise_std}, seed)
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_train_config(args)
    cfg.checkpoint_dir = args.out
    splits, stats = _load_split_records(args.data)
    _write_run_manifest(args.out, "train", cfg.to_dict(), cfg.seed)
    trainer = Trainer(cfg, splits["train"], splits["val"])
    print(f"architecture={cfg.model.architecture} parameters={trainer.model.parameter_count()}")
    print(f"records: train={len(splits['train'])} val={len(splits['val'])} test={len(splits['test'])} "
          f"(dropped: short={stats.dropped_short} long={stats.dropped_long} "
          f"no-duration={stats.dropped_missing_duration})")
    history = trainer.run()
    with open(os.path.join(args.out, "history.csv"), "w") as fh:
        fh.write(history.to_csv())
    if splits["val"]:
        report = evaluate(trainer.model, splits["val"])
        print(format_table(report))
    print(f"final loss={history.losses[-1][1]:.6f} steps={history.losses[-1][0]}")
    return 0


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    splits, _ = _load_split_records(args.data)
    records = splits[args.split]
    if not records:
        raise DataError(f"split {args.split!r} is empty")
    report = evaluate(model, records, threshold=args.threshold)
    os.makedirs(args.out, exist_ok=True)
    _write_run_manifest(args.out, "eval", {"checkpoint": args.checkpoint, "split": args.split,
                                           "threshold": args.threshold}, args.seed or 0)
    with open(os.path.join(args.out, "report.csv"), "w") as fh:
        fh.write(to_csv(report))
    text = format_table(report)
    with open(os.path.join(args.out, "report.txt"), "w") as fh:
        fh.write(text + "\n")
    print(text)
    return 0


def cmd_predict(args) -> int:
    model = load_checkpoint(args.checkpoint)
    from .mmf import read_mmf
    features = read_mmf(args.input)
    record = VideoRecord(id=os.path.basename(args.input), duration_s=None, genres=(),
                         features=features)
    probs, decisions = predict(model, record, threshold=args.threshold)
    for g, p, d in zip(GENRES, probs, decisions):
        marker = "*" if d else " "
        print(f"{marker} {g:<12} {p:.4f}")
    return 0


ABLATION_ROWS = (
    {"modalities": ("clip",), "averaged": ()},
    {"modalities": ("clip", "musicnet"), "averaged": ()},
    {"modalities": ("clip", "musicnet", "audiotag"), "averaged": ()},
    {"modalities": ("clip", "musicnet", "audiotag", "ocr"), "averaged": ()},
    {"modalities": ("clip", "musicnet", "audiotag", "ocr"), "averaged": ("ocr",)},
    {"modalities": ("clip", "musicnet", "audiotag", "ocr", "asr"), "averaged": ()},
    {"modalities": ("clip", "musicnet", "audiotag", "ocr", "asr"), "averaged": ("ocr", "asr")},
)


def _row_label(row) -> str:
    return "+".join(f"{m}*" if m in row["averaged"] else m for m in row["modalities"])


def _train_eval_once(cfg: TrainConfig, splits) -> float:
    trainer = Trainer(cfg, splits["train"], splits["val"])
    trainer.run()
    report = evaluate(trainer.model, splits["test"] or splits["train"])
    return report.mean_ap


def _run_rows(jobs, threads: int):
    """Run (key, cfg, splits) training jobs, optionally in worker processes.
    Seeds are derived per row either way, so results do not depend on the
    execution mode."""
    if threads <= 1:
        return [(key, _train_eval_once(cfg, splits)) for key, cfg, splits in jobs]
    import concurrent.futures
    with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [(key, pool.submit(_train_eval_once, cfg, splits)) for key, cfg, splits in jobs]
        return [(key, f.result()) for key, f in futures]


def cmd_ablate(args) -> int:
    base = _load_train_config(args)
    splits, _ = _load_split_records(args.data)
    os.makedirs(args.out, exist_ok=True)
    _write_run_manifest(args.out, "ablate", base.to_dict(), base.seed)
    jobs = []
    for i, row in enumerate(ABLATION_ROWS):
        model_cfg = dataclasses.replace(
            base.model,
            modalities=default_modalities(row["modalities"], row["averaged"]))
        cfg = dataclasses.replace(base, model=model_cfg, seed=derive_seed(base.seed, "ablate", i),
                                  checkpoint_dir=None)
        jobs.append((_row_label(row), cfg, splits))
    rows_out = _run_rows(jobs, args.threads)
    for label, mean_ap in rows_out:
        print(f"{label:<40} mAP={mean_ap * 100:.2f}")
    with open(os.path.join(args.out, "ablation.csv"), "w") as fh:
        fh.write("features,mAP\n")
        for label, mean_ap in rows_out:
            fh.write(f"{label},{mean_ap!r}\n")
    return 0


SWEEP_FRAME_COUNTS = (8, 16, 32, 64, 128, 256)


def _subsample_clip(records, n_frames: int, seed: int):
    """Per-record uniform subsample of clip frames, without replacement,
    temporal order preserved. Records with fewer frames keep them all."""
    out = []
    for i, rec in enumerate(records):
        feats = dict(rec.get_features())
        clip = feats.get("clip")
        if clip is None:
            raise DataError(f"record {rec.id} has no clip features")
        rng = SeededRng(derive_seed(seed, "frames", rec.id))
        idx = rng.subsample_sorted(clip.shape[0], n_frames)
        feats["clip"] = clip[idx]
        out.append(VideoRecord(id=rec.id, duration_s=rec.duration_s, genres=rec.genres, features=feats))
    return out


def cmd_frames_sweep(args) -> int:
    base = _load_train_config(args)
    splits, _ = _load_split_records(args.data)
    frame_counts = tuple(int(x) for x in args.frames.split(",")) if args.frames else SWEEP_FRAME_COUNTS
    if "clip" not in {s.name for s in base.model.modalities}:
        raise ConfigError("frames-sweep needs the clip modality enabled")
    os.makedirs(args.out, exist_ok=True)
    _write_run_manifest(args.out, "frames-sweep",
                        {**base.to_dict(), "frames": list(frame_counts)}, base.seed)
    jobs = []
    for n_frames in frame_counts:
        sub = {k: _subsample_clip(v, n_frames, derive_seed(base.seed, "sweep", n_frames)) for k, v in splits.items()}
        for arch in ("mlp", "single_transformer"):
            model_cfg = dataclasses.replace(
                base.model, architecture=arch,
                modalities=tuple(s for s in base.model.modalities if s.name == "clip"))
            cfg = dataclasses.replace(base, model=model_cfg,
                                      seed=derive_seed(base.seed, "sweep-row", n_frames, arch),
                                      checkpoint_dir=None)
            jobs.append(((n_frames, arch), cfg, sub))
    rows = [(key[0], key[1], mean_ap) for key, mean_ap in _run_rows(jobs, args.threads)]
    for n_frames, arch, mean_ap in rows:
        print(f"n={n_frames:<4} {arch:<20} mAP={mean_ap * 100:.2f}")
    with open(os.path.join(args.out, "frames_sweep.csv"), "w") as fh:
        fh.write("frames,model,mAP\n")
        for n_frames, arch, mean_ap in rows:
            fh.write(f"{n_frames},{arch},{mean_ap!r}\n")
    return 0


# -- argument parsing --------------------------------------------------------


def _add_train_args(p: argparse.ArgumentParser):
    p.add_argument("--config", help="TrainConfig JSON file")
    p.add_argument("--preset", choices=("mlp", "single_transformer", "multi_transformer"))
    p.add_argument("--modalities", help="comma-separated subset, e.g. clip,ocr")
    p.add_argument("--averaged", help="comma-separated temporally averaged modalities")
    p.add_argument("--epochs", type=int)
    p.add_argument("--max-steps", type=int, dest="max_steps")
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--eval-interval", type=int, dest="eval_interval")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="genreclf",
                                     description="Multimodal trailer genre classification")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=1,
                        help="worker processes for ablate / frames-sweep rows")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("import", help="convert NPY feature arrays to .mmf")
    p.add_argument("--npy-dir", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--kind", choices=("mean", "order"), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--noise-std", type=float, default=0.1, dest="noise_std")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a model")
    _add_train_args(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True, help="checkpoint stem (no extension)")
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True)

    p = sub.add_parser("predict", help="score a single .mmf file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--threshold", type=float, default=None)

    p = sub.add_parser("ablate", help="feature-set ablation table")
    _add_train_args(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("frames-sweep", help="frame count vs mAP sweep on clip features")
    _add_train_args(p)
    p.add_argument("--data", required=True)
    p.add_argument("--frames", help="comma-separated frame counts (default 8,16,32,64,128,256)")
    p.add_argument("--out", required=True)
    return parser


_HANDLERS = {
    "import": cmd_import,
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "ablate": cmd_ablate,
    "frames-sweep": cmd_frames_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
