"""Command-line front end.

Subcommands: synth-data, pretrain, finetune, eval, sweep-beta,
limited-labels, selfcheck. Exit codes: 0 success, 2 configuration error,
3 data error, 4 selfcheck failure.

Every run echoes its fully resolved configuration as
``resolved_config.json`` next to its outputs; re-running a subcommand from
that file (same data, same kernel backend) reproduces the outputs bitwise.
The output directory defaults to ``$HNCL_OUT_ROOT/<subcommand>``.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    RunConfig,
    build_finetune_config,
    build_pretrain_config,
    build_supervised_config,
    load_config,
    resolve_for_dataset,
    write_resolved,
)
from .data import (
    CanonicalDataset,
    generate_synthetic,
    load_canonical,
    make_split,
    save_canonical,
    standardize_split,
)
from .encoders import load_checkpoint, save_checkpoint
from .errors import ConfigError, DataError
from .metrics import accuracy, macro_f1
from .selfcheck import run_selfcheck
from .train import (
    PretrainResult,
    RunResult,
    beta_sweep,
    compute_representations,
    finetune_probe,
    limited_label_study,
    pretrain,
    write_aggregate_json,
    write_metrics_csv,
)

OUT_ROOT_ENV = "HNCL_OUT_ROOT"


def _out_dir(args, subcommand: str) -> Path:
    if args.out:
        out = Path(args.out)
    else:
        root = os.environ.get(OUT_ROOT_ENV)
        if not root:
            raise ConfigError(
                f"no --out given and {OUT_ROOT_ENV} is not set; one of them is required"
            )
        out = Path(root) / subcommand
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_dataset(cfg: RunConfig, args) -> CanonicalDataset:
    data_dir = getattr(args, "data", None) or cfg.data_dir
    if not data_dir:
        raise DataError("no dataset directory: pass --data or set data_dir in the config")
    ds = load_canonical(data_dir)
    cfg.data_dir = str(Path(data_dir).resolve())
    resolve_for_dataset(cfg, {m.name: m.channels for m in ds.meta.modalities})
    return ds


def _make_split(cfg: RunConfig, ds: CanonicalDataset):
    return make_split(ds, cfg.split_protocol, **cfg.split_params)


def _write_history_csv(path: Path, loss_history, lr_history) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "mean_loss", "learning_rate"])
        for i, (loss, lr) in enumerate(zip(loss_history, lr_history)):
            writer.writerow([i, repr(float(loss)), repr(float(lr))])


def cmd_synth_data(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args, "synth-data")
    ds = generate_synthetic(cfg.synth)
    save_canonical(ds, out)
    cfg.data_dir = str(out.resolve())
    resolve_for_dataset(cfg, {m.name: m.channels for m in ds.meta.modalities})
    write_resolved(cfg, out)
    print(f"wrote {ds.num_windows} windows ({len(ds.modalities)} modalities) to {out}")
    return 0


def cmd_pretrain(args) -> int:
    cfg = load_config(args.config)
    ds = _load_dataset(cfg, args)
    out = _out_dir(args, "pretrain")
    split = _make_split(cfg, ds)
    pre_cfg = build_pretrain_config(cfg)
    result = pretrain(pre_cfg, ds, split)
    for mod in result.encoder_params:
        save_checkpoint(
            out / f"encoder_{mod}.ckpt",
            result.encoder_configs[mod],
            result.encoder_params[mod],
            result.projection_params[mod],
        )
    _write_history_csv(out / "history.csv", result.loss_history, result.lr_history)
    write_resolved(cfg, out)
    print(
        f"pretrained {pre_cfg.method} for {pre_cfg.epochs} epochs: "
        f"loss {result.loss_history[0]:.4f} -> {result.loss_history[-1]:.4f}; outputs in {out}"
    )
    return 0


def _load_encoders(args, cfg: RunConfig) -> PretrainResult:
    enc_dir = Path(args.encoders)
    if not enc_dir.is_dir():
        raise DataError(f"encoder directory not found: {enc_dir}")
    paths = sorted(enc_dir.glob("encoder_*.ckpt"))
    if not paths:
        raise DataError(f"{enc_dir}: no encoder_*.ckpt files")
    configs, enc_params, proj_params = {}, {}, {}
    for path in paths:
        mod = path.stem[len("encoder_"):]
        expected = cfg.encoders.get(mod) if cfg.encoders else None
        config, enc, proj = load_checkpoint(path, expected_config=expected)
        configs[mod] = config
        enc_params[mod] = enc
        proj_params[mod] = proj
    return PretrainResult(
        encoder_configs=configs,
        encoder_params=enc_params,
        projection_params=proj_params,
        loss_history=[],
        lr_history=[],
    )


def cmd_finetune(args) -> int:
    cfg = load_config(args.config)
    ds = _load_dataset(cfg, args)
    out = _out_dir(args, "finetune")
    split = _make_split(cfg, ds)
    trained = _load_encoders(args, cfg)
    pre_cfg = build_pretrain_config(cfg)
    ft_cfg = build_finetune_config(cfg)

    uses_hnl = pre_cfg.method in ("cmc_hnl", "simclr_hnl", "cmc_debiased")
    result = RunResult(
        method=pre_cfg.method,
        modality=ft_cfg.modalities,
        beta=pre_cfg.hnl.beta if uses_hnl else None,
        tau_plus=pre_cfg.hnl.tau_plus if uses_hnl else None,
        label_fraction=ft_cfg.label_fraction,
        seeds=[],
        accuracies=[],
        macro_f1s=[],
    )
    for k in range(cfg.num_seeds):
        seed = cfg.seed + k
        probe = finetune_probe(build_finetune_config(cfg, seed=seed), trained, ds, split)
        result.seeds.append(seed)
        result.accuracies.append(probe.accuracy)
        result.macro_f1s.append(probe.macro_f1)
    write_metrics_csv(out / "metrics.csv", [result])
    write_aggregate_json(out / "aggregate.json", [result])
    write_resolved(cfg, out)
    print(
        f"probe on frozen encoders ({result.modality}): "
        f"accuracy {result.mean_accuracy:.4f} over {cfg.num_seeds} seed(s); outputs in {out}"
    )
    return 0


def cmd_eval(args) -> int:
    """Representation quality without training a probe: cosine 1-NN from the
    train split to the test split on concatenated frozen representations."""
    cfg = load_config(args.config)
    ds = _load_dataset(cfg, args)
    out = _out_dir(args, "eval")
    split = _make_split(cfg, ds)
    trained = _load_encoders(args, cfg)

    ds_std, _ = standardize_split(ds, split)
    mods = sorted(m for m in trained.encoder_params if m in ds.modalities)
    if not mods:
        raise DataError("no checkpointed modality is present in the dataset")
    parts = []
    for m in mods:
        h = compute_representations(
            trained.encoder_configs[m], trained.encoder_params[m], ds_std.modalities[m]
        )
        norms = np.linalg.norm(h, axis=1, keepdims=True)
        parts.append(h / np.where(norms < 1e-12, 1.0, norms))
    feats = np.concatenate(parts, axis=1)

    train, test = split.train_indices, split.test_indices
    sims = feats[test] @ feats[train].T
    preds = ds.labels[train][np.argmax(sims, axis=1)]
    report = {
        "modalities": mods,
        "num_train": int(train.size),
        "num_test": int(test.size),
        "knn_accuracy": accuracy(ds.labels[test], preds),
        "knn_macro_f1": macro_f1(ds.labels[test], preds, ds.meta.num_classes),
        "per_class_test_counts": np.bincount(
            ds.labels[test], minlength=ds.meta.num_classes
        ).tolist(),
    }
    with open(out / "eval.json", "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    write_resolved(cfg, out)
    print(f"1-NN accuracy {report['knn_accuracy']:.4f} on {report['num_test']} test windows; outputs in {out}")
    return 0


def cmd_sweep_beta(args) -> int:
    cfg = load_config(args.config)
    if args.betas:
        cfg.betas = [float(b) for b in args.betas.split(",") if b.strip()]
        if not cfg.betas:
            raise ConfigError("--betas parsed to an empty list")
    ds = _load_dataset(cfg, args)
    out = _out_dir(args, "sweep-beta")
    split = _make_split(cfg, ds)
    pre_cfg = build_pretrain_config(cfg)
    if not pre_cfg.method.endswith("_hnl"):
        raise ConfigError(f"sweep-beta needs a *_hnl method, got {pre_cfg.method!r}")
    rows = beta_sweep(pre_cfg, build_finetune_config(cfg), ds, split, cfg.betas, cfg.num_seeds)
    write_metrics_csv(out / "sweep.csv", [r for _, r in rows])
    write_aggregate_json(out / "sweep_aggregate.json", [r for _, r in rows])
    write_resolved(cfg, out)
    for beta, r in rows:
        print(f"beta={beta}: accuracy {r.mean_accuracy:.4f}")
    print(f"outputs in {out}")
    return 0


def cmd_limited_labels(args) -> int:
    cfg = load_config(args.config)
    if args.fractions:
        cfg.fractions = [float(f) for f in args.fractions.split(",") if f.strip()]
        if not cfg.fractions or any(not (0.0 < f <= 1.0) for f in cfg.fractions):
            raise ConfigError("--fractions must parse to values in (0, 1]")
    ds = _load_dataset(cfg, args)
    out = _out_dir(args, "limited-labels")
    split = _make_split(cfg, ds)

    pre_cfgs = {}
    sup_cfg = None
    for name in cfg.limited_labels_methods:
        if name == "supervised":
            sup_cfg = build_supervised_config(cfg)
        else:
            pre_cfgs[name] = replace(build_pretrain_config(cfg), method=name)
    rows = limited_label_study(
        pre_cfgs, sup_cfg, build_finetune_config(cfg), ds, split, cfg.fractions, cfg.num_seeds
    )
    write_metrics_csv(out / "limited_labels.csv", rows)
    write_aggregate_json(out / "limited_labels_aggregate.json", rows)
    write_resolved(cfg, out)
    for r in rows:
        print(f"{r.method} @ {r.label_fraction:.0%}: accuracy {r.mean_accuracy:.4f}")
    print(f"outputs in {out}")
    return 0


def cmd_selfcheck(args) -> int:
    return 0 if run_selfcheck() else 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hncl",
        description="Cross-modal contrastive pretraining with hard-negative sampling.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, *, data=False, encoders=False, out=True, config=True):
        p = sub.add_parser(name)
        if config:
            p.add_argument("--config", required=True, help="run config JSON file")
        if data:
            p.add_argument("--data", help="canonical dataset directory (overrides config)")
        if encoders:
            p.add_argument("--encoders", required=True, help="directory with encoder checkpoints")
        if out:
            p.add_argument("--out", help=f"output directory (default ${OUT_ROOT_ENV}/{name})")
        p.set_defaults(func=fn)
        return p

    add("synth-data", cmd_synth_data)
    add("pretrain", cmd_pretrain, data=True)
    add("finetune", cmd_finetune, data=True, encoders=True)
    add("eval", cmd_eval, data=True, encoders=True)
    p = add("sweep-beta", cmd_sweep_beta, data=True)
    p.add_argument("--betas", help="comma-separated hardness values (overrides config)")
    p = add("limited-labels", cmd_limited_labels, data=True)
    p.add_argument("--fractions", help="comma-separated label fractions (overrides config)")
    p = sub.add_parser("selfcheck")
    p.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses exit code 2 for usage errors
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
