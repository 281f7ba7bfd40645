"""Command-line interface.

Subcommands: gen-data, train, eval, parcellate, flops.  Every command is
deterministic given its flags and input bytes (wall-clock fields aside).
Exit codes: 0 success, 1 internal or numerical failure, 2 usage or input
error.  Option precedence: explicit flags > --config file > defaults.
Set SUPWMA_LOG={error,info,debug} to control stderr logging.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import geometry, synthdata, train as training
from .metrics import DEFAULT_CIR_THRESHOLD, compute_report
from .model import (
    ArchDescriptor,
    build_model,
    count_flops,
    load_checkpoint,
    predict_features,
    save_checkpoint,
)

log = logging.getLogger("supwma.cli")

TNET_NOTE = (
    "# with-tnets assumes the standard alignment-net layout "
    "(shared MLP 64/128/1024, head 512/256, output map) plus applying each transform"
)


def _setup_logging() -> None:
    level_name = os.environ.get("SUPWMA_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(
        level=levels.get(level_name, logging.ERROR),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _load_config_file(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ValueError(f"config file not found: {path}")
    if p.suffix == ".toml":
        try:
            import tomllib
        except ImportError:
            raise ValueError(
                "TOML config files need Python 3.11+; use a JSON config instead"
            ) from None
        with open(p, "rb") as fh:
            return tomllib.load(fh)
    with open(p) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"config file {path} is not valid JSON: {exc}") from None


def _merge_options(args: argparse.Namespace, defaults: dict) -> dict:
    """flags > config file > defaults; unknown config keys are rejected."""
    merged = dict(defaults)
    if getattr(args, "config", None):
        file_cfg = _load_config_file(args.config)
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_cfg)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ValueError(f"{what} not found: {path}")
    return p


def _read_affine(path) -> np.ndarray:
    values = np.loadtxt(_require_file(path, "affine file"), dtype=np.float64).ravel()
    if values.size != 16:
        raise ValueError(f"affine file must hold 16 numbers, got {values.size}")
    return geometry.validate_affine(values.reshape(4, 4))


def _read_expected_clusters(path) -> np.ndarray:
    text = _require_file(path, "expected-clusters file").read_text().split()
    if not text:
        raise ValueError("expected-clusters file is empty")
    try:
        return np.asarray([int(tok) for tok in text], dtype=np.int64)
    except ValueError:
        raise ValueError("expected-clusters file must hold whitespace-separated integers") from None


# ---------------------------------------------------------------------------
# gen-data
# ---------------------------------------------------------------------------

GEN_DEFAULTS = dict(
    seed=0,
    clusters=20,
    per_cluster=950,
    outlier_fraction=0.05,
    outlier_scale=4.0,
    confusable_pairs=2,
    fractions=[0.7, 0.1, 0.2],
    raw_points=32,
    noise_mm=1.0,
    endpoint_jitter_mm=0.5,
)


def cmd_gen_data(args: argparse.Namespace) -> int:
    opts = _merge_options(args, GEN_DEFAULTS)
    config = synthdata.GenConfig(
        seed=int(opts["seed"]),
        clusters=int(opts["clusters"]),
        per_cluster=int(opts["per_cluster"]),
        outlier_fraction=float(opts["outlier_fraction"]),
        outlier_scale=float(opts["outlier_scale"]),
        confusable_pairs=int(opts["confusable_pairs"]),
        fractions=tuple(float(f) for f in opts["fractions"]),
        raw_points=int(opts["raw_points"]),
        point_noise_mm=float(opts["noise_mm"]),
        endpoint_jitter_mm=float(opts["endpoint_jitter_mm"]),
    )
    synthdata.gen_dataset(config, args.out)
    print(str(Path(args.out) / "manifest.json"))
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

TRAIN_DEFAULTS = dict(
    seed=0,
    lr_scl=None,       # None: take from preset
    lr_cls=None,
    batch_scl=None,
    batch_cls=None,
    epochs_scl=None,
    epochs_cls=None,
    temperature=None,
    val_fraction=None,
    preset="desk",
    arch_k=None,
    arch_n=15,
)


def _build_train_config(opts: dict) -> training.TrainConfig:
    if opts["preset"] == "paper":
        base = training.TrainConfig(seed=int(opts["seed"]))
    elif opts["preset"] == "desk":
        base = training.TrainConfig.desk_scale(seed=int(opts["seed"]))
    else:
        raise ValueError(f"unknown preset {opts['preset']!r}")
    overrides = {}
    for key, attr in (
        ("lr_scl", "scl_lr"),
        ("lr_cls", "cls_lr"),
        ("batch_scl", "scl_batch"),
        ("batch_cls", "cls_batch"),
        ("epochs_scl", "scl_epochs"),
        ("epochs_cls", "cls_epochs"),
        ("temperature", "temperature"),
        ("val_fraction", "validation_fraction"),
    ):
        if opts[key] is not None:
            overrides[attr] = type(getattr(base, attr))(opts[key])
    from dataclasses import replace

    return replace(base, **overrides) if overrides else base


def _resolve_dataset(args: argparse.Namespace):
    """Either --data DIR (manifest-described) or explicit file flags."""
    if args.data:
        manifest_path = _require_file(Path(args.data) / "manifest.json", "dataset manifest")
        manifest = json.loads(manifest_path.read_text())
        base = Path(args.data)
        files = manifest["files"]
        train_files = (base / files["train"]["slp"], base / files["train"]["labels"])
        val_files = (base / files["val"]["slp"], base / files["val"]["labels"])
        return train_files, val_files
    if not (args.train_slp and args.train_labels):
        raise ValueError("provide --data DIR or both --train-slp and --train-labels")
    train_files = (_require_file(args.train_slp, "training SLP"),
                   _require_file(args.train_labels, "training labels"))
    val_files = None
    if args.val_slp or args.val_labels:
        if not (args.val_slp and args.val_labels):
            raise ValueError("--val-slp and --val-labels must be given together")
        val_files = (_require_file(args.val_slp, "validation SLP"),
                     _require_file(args.val_labels, "validation labels"))
    return train_files, val_files


def cmd_train(args: argparse.Namespace) -> int:
    opts = _merge_options(args, TRAIN_DEFAULTS)
    config = _build_train_config(opts)
    (train_slp, train_labels), val_files = _resolve_dataset(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    arch = None
    if opts["arch_k"] is not None:
        arch = ArchDescriptor(n_points=int(opts["arch_n"]), n_classes=int(opts["arch_k"]))
    elif int(opts["arch_n"]) != 15:
        train_y = geometry.read_labels(train_labels)
        arch = ArchDescriptor(n_points=int(opts["arch_n"]), n_classes=int(train_y.max()) + 1)

    if args.phase == "both":
        _, report = training.run_pipeline(
            train_slp,
            train_labels,
            out,
            config,
            val_slp=val_files[0] if val_files else None,
            val_labels=val_files[1] if val_files else None,
            arch=arch,
        )
    elif args.phase == "scl":
        report = _train_scl_only(train_slp, train_labels, out, config, arch)
    else:
        if not args.checkpoint:
            raise ValueError("--phase cls requires --checkpoint from a phase-1 run")
        report = _train_cls_only(
            args.checkpoint, train_slp, train_labels, out, config, val_files
        )
    print(json.dumps({"checkpoint": report.checkpoint_path, "out": str(out)}))
    return 0


def _train_scl_only(train_slp, train_labels, out: Path, config, arch) -> training.TrainReport:
    train_set = geometry.read_slp(train_slp)
    labels = geometry.read_labels(train_labels, expected_count=len(train_set))
    if arch is None:
        arch = ArchDescriptor(n_classes=int(labels.max()) + 1)
    features = geometry.to_feature_batch(train_set, arch.n_points)
    bundle = build_model(arch, seed=config.seed)
    start = time.perf_counter()
    curve = training.train_scl_phase(features, labels, bundle, config)
    elapsed = time.perf_counter() - start
    checkpoint = out / "checkpoint.swc"
    save_checkpoint(bundle, checkpoint)
    report = training.TrainReport(
        phase1_loss=curve,
        phase2_loss=[],
        val_accuracy=None,
        phase1_seconds=elapsed,
        phase2_seconds=0.0,
        checkpoint_path=str(checkpoint),
    )
    (out / "train_report.json").write_text(json.dumps(report.to_dict(), indent=2))
    return report


def _train_cls_only(checkpoint, train_slp, train_labels, out: Path, config, val_files):
    bundle = load_checkpoint(_require_file(checkpoint, "checkpoint"))
    train_set = geometry.read_slp(train_slp)
    labels = geometry.read_labels(train_labels, expected_count=len(train_set))
    features = geometry.to_feature_batch(train_set, bundle.arch.n_points)
    val_x = val_y = None
    val_set = None
    if val_files:
        val_set = geometry.read_slp(val_files[0])
        val_y = geometry.read_labels(val_files[1], expected_count=len(val_set))
        val_set = geometry.StreamlineSet(val_set.streamlines, val_y)
        val_x = geometry.to_feature_batch(val_set, bundle.arch.n_points)
    start = time.perf_counter()
    curve, val_curve = training.train_cls_phase(
        features, labels, bundle, config, val_features=val_x, val_labels=val_y
    )
    elapsed = time.perf_counter() - start
    validation = None
    if val_set is not None:
        validation = training.evaluate(bundle, val_set).to_dict()
    out_checkpoint = out / "checkpoint.swc"
    save_checkpoint(bundle, out_checkpoint)
    report = training.TrainReport(
        phase1_loss=[],
        phase2_loss=curve,
        val_accuracy=val_curve,
        phase1_seconds=0.0,
        phase2_seconds=elapsed,
        checkpoint_path=str(out_checkpoint),
        validation=validation,
    )
    (out / "train_report.json").write_text(json.dumps(report.to_dict(), indent=2))
    return report


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def cmd_eval(args: argparse.Namespace) -> int:
    bundle = load_checkpoint(_require_file(args.checkpoint, "checkpoint"))
    streamline_set = geometry.read_slp(_require_file(args.slp, "SLP file"))
    labels = geometry.read_labels(
        _require_file(args.labels, "label file"), expected_count=len(streamline_set)
    )
    expected = None
    if args.expected_clusters:
        expected = _read_expected_clusters(args.expected_clusters)
    batch = geometry.to_feature_batch(streamline_set, bundle.arch.n_points)
    predicted = predict_features(bundle, batch)
    report = compute_report(
        labels,
        predicted,
        bundle.arch.n_classes,
        expected_clusters=expected,
        cir_threshold=args.cir_threshold,
    )
    payload = json.dumps(report.to_dict(), indent=2)
    print(payload)
    if args.out:
        Path(args.out).write_text(payload)
    return 0


# ---------------------------------------------------------------------------
# parcellate
# ---------------------------------------------------------------------------

def _predict_threaded(bundle, batch: np.ndarray, threads: int, chunk: int = 4096):
    if threads <= 1 or batch.shape[0] < 2 * chunk:
        return predict_features(bundle, batch, chunk)
    bounds = np.linspace(0, batch.shape[0], threads + 1, dtype=int)
    slabs = [batch[bounds[i] : bounds[i + 1]] for i in range(threads)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda slab: predict_features(bundle, slab, chunk), slabs))
    return np.concatenate(parts)


def cmd_parcellate(args: argparse.Namespace) -> int:
    bundle = load_checkpoint(_require_file(args.checkpoint, "checkpoint"))
    streamline_set = geometry.read_slp(_require_file(args.slp, "SLP file"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.affine:
        streamline_set = geometry.apply_affine(streamline_set, _read_affine(args.affine))

    start = time.perf_counter()
    if len(streamline_set):
        batch = geometry.to_feature_batch(streamline_set, bundle.arch.n_points)
        predicted = _predict_threaded(bundle, batch, args.threads)
    else:
        predicted = np.zeros(0, dtype=np.int64)
    elapsed = time.perf_counter() - start

    geometry.write_labels(predicted, out / "predictions.csv")
    counts = np.bincount(predicted, minlength=bundle.arch.n_classes)
    summary = {
        "streamline_count": int(len(streamline_set)),
        "wall_clock_sec": elapsed,
        "streamlines_per_second": (len(streamline_set) / elapsed) if elapsed > 0 else None,
        "class_counts": counts.tolist(),
        "predictions_csv": str(out / "predictions.csv"),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary, indent=2))
    return 0


# ---------------------------------------------------------------------------
# flops
# ---------------------------------------------------------------------------

def cmd_flops(args: argparse.Namespace) -> int:
    arch = ArchDescriptor(
        n_points=args.arch_n, n_classes=args.arch_k, with_tnets=args.with_tnets
    )
    macs = count_flops(arch)
    print(f"{macs} ({macs / 1e6:.1f}M)")
    if args.with_tnets:
        print(TNET_NOTE)
    return 0


# ---------------------------------------------------------------------------
# Parser and entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="supwma",
        description="Streamline classification: synthetic corpora, two-phase "
        "training, evaluation, parcellation, and cost accounting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic labeled corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="JSON (or TOML on 3.11+) option file")
    p.add_argument("--seed", type=int)
    p.add_argument("--clusters", type=int)
    p.add_argument("--per-cluster", dest="per_cluster", type=int)
    p.add_argument("--outlier-fraction", dest="outlier_fraction", type=float)
    p.add_argument("--outlier-scale", dest="outlier_scale", type=float)
    p.add_argument("--confusable-pairs", dest="confusable_pairs", type=int)
    p.add_argument("--fractions", nargs=3, type=float, metavar=("TRAIN", "VAL", "TEST"))
    p.add_argument("--raw-points", dest="raw_points", type=int)
    p.add_argument("--noise-mm", dest="noise_mm", type=float)
    p.add_argument("--endpoint-jitter-mm", dest="endpoint_jitter_mm", type=float)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="run the two-phase training pipeline")
    p.add_argument("--data", help="dataset directory holding manifest.json")
    p.add_argument("--train-slp", dest="train_slp")
    p.add_argument("--train-labels", dest="train_labels")
    p.add_argument("--val-slp", dest="val_slp")
    p.add_argument("--val-labels", dest="val_labels")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON (or TOML on 3.11+) option file")
    p.add_argument("--phase", choices=("scl", "cls", "both"), default="both")
    p.add_argument("--checkpoint", help="phase-1 checkpoint (required for --phase cls)")
    p.add_argument("--preset", choices=("desk", "paper"))
    p.add_argument("--seed", type=int)
    p.add_argument("--lr-scl", dest="lr_scl", type=float)
    p.add_argument("--lr-cls", dest="lr_cls", type=float)
    p.add_argument("--batch-scl", dest="batch_scl", type=int)
    p.add_argument("--batch-cls", dest="batch_cls", type=int)
    p.add_argument("--epochs-scl", dest="epochs_scl", type=int)
    p.add_argument("--epochs-cls", dest="epochs_cls", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--val-fraction", dest="val_fraction", type=float)
    p.add_argument("--arch-k", dest="arch_k", type=int)
    p.add_argument("--arch-n", dest="arch_n", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a labeled set with a trained model")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--slp", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--expected-clusters", dest="expected_clusters")
    p.add_argument("--cir-threshold", dest="cir_threshold", type=int,
                   default=DEFAULT_CIR_THRESHOLD)
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("parcellate", help="classify an unlabeled SLP file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--slp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--affine", help="16-number row-major text file, applied first")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_parcellate)

    p = sub.add_parser("flops", help="multiply-accumulate count per streamline")
    p.add_argument("--arch-k", dest="arch_k", type=int, default=199)
    p.add_argument("--arch-n", dest="arch_n", type=int, default=15)
    p.add_argument("--with-tnets", dest="with_tnets", action="store_true")
    p.set_defaults(func=cmd_flops)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # numerical or internal failure
        log.debug("internal failure", exc_info=True)
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
