"""Command-line front end: ``rodnn <command> [options]``.

Every command writes delimited CSV reports into ``--out``; ``--plot`` also renders
PNG figures next to them.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import plotting
from .config import RunConfig, config_from_mapping, load_config, parse_floats
from .dataio import Dataset, EncodingSpec, load_split, read_network, save_network
from .evaluation import (
    GEOMETRY_PARAMS,
    SWEEP_KINDS,
    evaluate,
    export_planes,
    sweep_architecture,
    sweep_errors,
    write_plane_export,
    write_sweep_csv,
)
from .network import DiffractiveNetwork
from .training import (
    EpochMetrics,
    History,
    accuracy,
    detector_outputs,
    train_correcting,
    train_optical,
    ste_train_optical,
)

log = logging.getLogger("rodnn")

METRICS_COLUMNS = ["epoch", "gamma", "train_loss", "train_acc", "val_acc"]
SWEEP_LABELS = {
    "axial": "axial shift per gap (um)",
    "theta": "phase difference (rad)",
    "kratio": "transmittance ratio",
    "geometry": "neuron geometry value",
    "distance": "layer distance (um)",
    "layers": "number of layers",
}


# -- data ---------------------------------------------------------------------------


def train_val_split(full: Dataset, cfg: RunConfig) -> tuple[Dataset, Dataset]:
    """Validation = last ``val_size`` training samples; training = the first
    ``train_size`` of the rest (all of them when 0)."""
    if cfg.val_size >= len(full):
        raise ValueError(f"val_size {cfg.val_size} leaves no training samples out of {len(full)}")
    cut = len(full) - cfg.val_size
    train = full.subset(slice(0, cut))
    if cfg.train_size:
        train = train.subset(slice(0, min(cfg.train_size, cut)))
    return train, replace(full.subset(slice(cut, len(full))), split="val")


def load_data(cfg: RunConfig, split: str) -> Dataset:
    if split == "test":
        data = load_split(cfg.dataset_dir, "test")
        return data.subset(slice(0, cfg.test_size)) if cfg.test_size else data
    train, val = train_val_split(load_split(cfg.dataset_dir, "train"), cfg)
    return {"train": train, "val": val}[split]


def retrain_data(cfg: RunConfig) -> Dataset:
    train, _ = train_val_split(load_split(cfg.dataset_dir, "train"), cfg)
    return train.subset(slice(0, cfg.retrain_size)) if cfg.retrain_size else train


# -- output helpers -------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_metrics_csv(rows, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(METRICS_COLUMNS)
        for r in rows:
            w.writerow([_fmt(getattr(r, c)) for c in METRICS_COLUMNS])


def write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _checkpoint_encoding(meta: dict, cfg: RunConfig) -> EncodingSpec:
    return EncodingSpec(int(meta.get("upsample", cfg.upsample)))


def _meta(cfg: RunConfig, **extra) -> dict:
    return {"upsample": cfg.upsample, "logit_scale": cfg.logit_scale, "seed": cfg.seed, **extra}


def _train_network(net: DiffractiveNetwork, cfg: RunConfig, train: Dataset, val: Dataset | None,
                   callback=None) -> tuple[DiffractiveNetwork, History]:
    hp = cfg.hyperparams()
    if cfg.mode == "ste":
        return ste_train_optical(net, train, val, hp, cfg.seed, cfg.encoding(), callback=callback)
    return train_optical(net, train, val, cfg.schedule(), hp, cfg.seed, cfg.encoding(), callback=callback)


# -- commands -------------------------------------------------------------------------


def cmd_train_optical(cfg: RunConfig, args) -> int:
    train, val = train_val_split(load_split(cfg.dataset_dir, "train"), cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.txt")
    log.info("training on %d samples, validating on %d", len(train), len(val))

    rows: list[EpochMetrics] = []

    def progress(m: EpochMetrics) -> None:
        rows.append(m)
        write_metrics_csv(rows, out / "metrics.csv")

    write_metrics_csv(rows, out / "metrics.csv")
    net, history = _train_network(cfg.network(), cfg, train, val, progress)
    save_network(net, out / "checkpoint.rodn", meta=_meta(cfg))
    write_metrics_csv(history.epochs, out / "metrics.csv")
    summary = sorted(history.summary.items())
    write_rows(out / "summary.csv", ["key", "value"], summary)
    for k, v in summary:
        print(f"{k} {v:.6f}")
    if args.plot and history.epochs:
        plotting.plot_training(history.epochs, out / "metrics.png")
    return 0


def cmd_train_correcting(cfg: RunConfig, args) -> int:
    net, meta = read_network(args.checkpoint)
    if not net.binary:
        raise ValueError(f"{args.checkpoint} holds a non-binarized network; train and binarize the optics first")
    encoding = _checkpoint_encoding(meta, cfg)
    hp = cfg.hyperparams()
    if args.identity_init:
        hp = replace(hp, correcting_init="identity")
    train, val = train_val_split(load_split(cfg.dataset_dir, "train"), cfg)
    layer = train_correcting(net, train, hp, cfg.seed, encoding, epochs=args.epochs)
    corrected = replace(net, correcting=layer)

    Xv = detector_outputs(net, val, encoding, hp.eval_batch_size)
    optical = accuracy(Xv, val.labels)
    with_w, _, _ = evaluate(corrected, val, encoding, X=Xv)
    out = Path(args.out) if args.out else Path(args.checkpoint).parent
    out.mkdir(parents=True, exist_ok=True)
    save_network(corrected, out / "checkpoint.rodn", meta=meta)
    write_rows(out / "correcting.csv", ["split", "samples", "optical_only", "with_correcting"],
               [["val", len(val), optical, with_w]])
    print(f"val optical_only {optical:.6f} with_correcting {with_w:.6f}")
    return 0


def cmd_eval(cfg: RunConfig, args) -> int:
    net, meta = read_network(args.checkpoint)
    encoding = _checkpoint_encoding(meta, cfg)
    data = load_data(cfg, args.split)
    use_w = not args.no_correcting
    acc, cm, _ = evaluate(net, data, encoding, use_correcting=use_w, batch_size=cfg.eval_batch_size)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cm.write_csv(out / "confusion.csv")
    write_rows(out / "eval.csv", ["split", "samples", "with_correcting", "accuracy"],
               [[args.split, len(data), use_w and net.correcting is not None, acc]])
    print(f"accuracy {acc:.6f}")
    if args.plot:
        plotting.plot_confusion(cm.counts, out / "confusion.png", f"accuracy {acc:.4f}")
    return 0


def cmd_sweep(cfg: RunConfig, args) -> int:
    values = parse_floats(args.grid)
    if not values:
        raise ValueError("--grid needs at least one value")
    test = load_data(cfg, "test")
    retrain = retrain_data(cfg) if args.retrain_correcting else None
    hp = cfg.hyperparams()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.kind in ("distance", "layers"):
        base = cfg
        encoding = cfg.encoding()
        train, val = train_val_split(load_split(cfg.dataset_dir, "train"), cfg)

        def build(v: float) -> DiffractiveNetwork:
            if args.kind == "distance":
                return replace(base, distance=v, distances="").network()
            if v != int(v) or v < 1:
                raise ValueError(f"layer count must be a positive integer, got {v}")
            return replace(base, n_layers=int(v), distances="").network()

        rows = sweep_architecture(args.kind, values, build, lambda n: _train_network(n, cfg, train, val)[0],
                                  test, encoding, retrain, hp, cfg.seed, cfg.retrain_epochs, cfg.workers)
    else:
        net, meta = read_network(args.checkpoint)
        rows = sweep_errors(net, args.kind, values, test, _checkpoint_encoding(meta, cfg), retrain, hp,
                            cfg.seed, cfg.retrain_epochs, geometry_param=args.geometry_param,
                            workers=cfg.workers)
    path = out / f"sweep_{args.kind}.csv"
    write_sweep_csv(rows, path)
    for r in rows:
        print(f"{args.kind} {r.value!r} accuracy {r.accuracy:.6f} after_retrain {r.accuracy_after_retrain:.6f}")
    if args.plot:
        plotting.plot_sweep(rows, out / f"sweep_{args.kind}.png", SWEEP_LABELS[args.kind])
    return 0


def cmd_export_field(cfg: RunConfig, args) -> int:
    net, meta = read_network(args.checkpoint)
    data = load_data(cfg, args.split)
    if not 0 <= args.sample_index < len(data):
        raise IndexError(f"sample index {args.sample_index} out of range for {len(data)} {args.split} samples")
    export = export_planes(net, data.images[args.sample_index], _checkpoint_encoding(meta, cfg))
    out = Path(cfg.out) / f"fields_{args.split}_{args.sample_index}"
    write_plane_export(export, net, out)
    print(f"label {int(data.labels[args.sample_index])} predicted {int(np.argmax(export.X))} -> {out}")
    if args.plot:
        plotting.plot_planes(export, net, out / "planes.png")
    return 0


# -- argument parsing -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key = value config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--dataset-dir", help="directory with the four IDX files")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
    common.add_argument("--plot", action="store_true", help="also render PNG figures")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="rodnn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-optical", parents=[common], help="train and binarize the diffractive layers")
    p.set_defaults(func=cmd_train_optical)

    p = sub.add_parser("train-correcting", parents=[common], help="fit the correcting layer behind a checkpoint")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--epochs", type=int)
    p.add_argument("--identity-init", action="store_true")
    p.set_defaults(func=cmd_train_correcting)

    p = sub.add_parser("eval", parents=[common], help="accuracy and confusion matrix")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--split", choices=("test", "train", "val"), default="test")
    p.add_argument("--no-correcting", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", parents=[common], help="accuracy under injected errors or architecture changes")
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--kind", required=True, choices=SWEEP_KINDS)
    p.add_argument("--grid", required=True, help="comma-separated values, e.g. 0.8pi,1.0pi,1.2pi")
    p.add_argument("--retrain-correcting", action="store_true")
    p.add_argument("--geometry-param", choices=GEOMETRY_PARAMS, default="thickness")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-field", parents=[common], help="intensity at every plane for one sample")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--sample-index", required=True, type=int)
    p.add_argument("--split", choices=("test", "train", "val"), default="test")
    p.set_defaults(func=cmd_export_field)
    return parser


def resolve_config(args) -> RunConfig:

    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value.strip()
    if overrides:
        cfg = config_from_mapping(overrides, cfg)
    return cfg.updated(seed=args.seed, out=args.out, dataset_dir=args.dataset_dir)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        if args.command == "sweep" and args.kind not in ("distance", "layers") and args.checkpoint is None:
            raise ValueError(f"--kind {args.kind} needs --checkpoint")
        cfg = resolve_config(args)
        return args.func(cfg, args)
    except (ValueError, OSError, IndexError, RuntimeError, KeyError) as exc:
        print(f"rodnn: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
