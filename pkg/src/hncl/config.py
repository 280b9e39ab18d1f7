"""Run configuration files: strict JSON parsing with every default
materialized, so the echoed resolved config reproduces a run exactly.

Unknown keys are rejected at every nesting level. Paths are resolved to
absolute form in the echo; the output directory is deliberately not part of
the config (outputs are wherever the echo sits), which keeps re-runs from a
resolved config bitwise comparable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .augment import AugmentSpec
from .backend import active_backend
from .data import SynthConfig
from .encoders import EncoderConfig
from .errors import ConfigError
from .train import FinetuneConfig, HnlSettings, METHODS, PretrainConfig, SupervisedConfig

SPLIT_PROTOCOLS = (
    "cross_subject_odd_even",
    "cross_subject_first_k",
    "cross_session_top_fraction",
)

# Augmentation families applied when the config does not name its own:
# the first modality gets the sensor-style set, the second the pose-style set
# (rotations and shears need channel triplets).
DEFAULT_AUG_PRIMARY = [
    {"kind": "jitter", "probability": 0.8, "params": {"sigma": 0.1}},
    {"kind": "scale", "probability": 0.8, "params": {}},
    {"kind": "permute_segments", "probability": 0.5, "params": {}},
    {"kind": "channel_shuffle", "probability": 0.3, "params": {}},
]
DEFAULT_AUG_SECONDARY = [
    {"kind": "jitter", "probability": 0.8, "params": {"sigma": 0.1}},
    {"kind": "scale", "probability": 0.8, "params": {}},
    {"kind": "rotate", "probability": 0.5, "params": {}},
    {"kind": "shear", "probability": 0.3, "params": {}},
    {"kind": "resized_crop", "probability": 0.5, "params": {}},
]

DEFAULT_CONV_LAYERS = [[16, 5, 1], [32, 5, 2]]


def _check_keys(d: dict, allowed: set[str], path: str) -> None:
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}")


def _section(raw: dict, name: str) -> dict:
    value = raw.get(name, {})
    if value is None:
        value = {}
    if not isinstance(value, dict):
        raise ConfigError(f"{name} must be a JSON object")
    return dict(value)


@dataclass
class RunConfig:
    """Everything a CLI run needs besides the output directory."""

    seed: int = 0
    num_seeds: int = 3
    data_dir: str | None = None
    backend: str | None = None
    synth: SynthConfig = field(default_factory=SynthConfig)
    encoders: dict[str, EncoderConfig] | None = None
    augment: dict[str, AugmentSpec] | None = None
    pretrain_raw: dict = field(default_factory=dict)
    finetune_raw: dict = field(default_factory=dict)
    supervised_raw: dict = field(default_factory=dict)
    split_protocol: str = "cross_subject_odd_even"
    split_params: dict = field(default_factory=dict)
    limited_labels_methods: list[str] = field(
        default_factory=lambda: ["cmc", "cmc_hnl", "supervised"]
    )
    betas: list[float] = field(default_factory=lambda: [0.25, 0.5, 1.0, 1.5, 2.0])
    fractions: list[float] = field(default_factory=lambda: [0.02, 0.05, 0.10, 0.25, 0.50])


_TOP_KEYS = {
    "seed", "num_seeds", "data_dir", "backend", "synth", "encoders", "augment",
    "pretrain", "finetune", "supervised", "split", "limited_labels_methods",
    "betas", "fractions",
}
_PRETRAIN_KEYS = {
    "method", "batch_size", "learning_rate", "epochs", "scheduler_patience",
    "scheduler_factor", "temperature", "hnl", "modality",
}
_HNL_KEYS = {"beta", "tau_plus"}
_FINETUNE_KEYS = {
    "modalities", "fusion_width", "epochs", "learning_rate", "label_fraction", "batch_size",
}
_SUPERVISED_KEYS = {"fusion_width", "epochs", "learning_rate", "batch_size", "modalities"}
_SPLIT_KEYS = {"protocol", "k", "fraction"}
_SYNTH_KEYS = set(SynthConfig().to_dict().keys())
_ENCODER_KEYS = {"input_channels", "conv_layers", "activation", "embedding_dim", "projection_dim"}
_AUG_STEP_KEYS = {"kind", "probability", "params"}


def load_config(path: str | Path) -> RunConfig:
    """Parse and validate a config file; defaults are applied later, at
    resolution time, once the dataset (and hence modalities) is known."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: malformed JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return parse_config(raw)


def parse_config(raw: dict) -> RunConfig:
    _check_keys(raw, _TOP_KEYS, "config")
    cfg = RunConfig()

    cfg.seed = int(raw.get("seed", cfg.seed))
    cfg.num_seeds = int(raw.get("num_seeds", cfg.num_seeds))
    if cfg.num_seeds < 1:
        raise ConfigError("num_seeds must be >= 1")
    if raw.get("data_dir") is not None:
        cfg.data_dir = str(raw["data_dir"])
    if raw.get("backend") is not None:
        cfg.backend = str(raw["backend"])
        if cfg.backend not in ("numba", "numpy"):
            raise ConfigError("backend must be 'numba' or 'numpy' when given")
        if cfg.backend != active_backend():
            raise ConfigError(
                f"config expects the {cfg.backend!r} kernel backend but {active_backend()!r} "
                "is active; set HNCL_BACKEND accordingly to reproduce the run"
            )

    synth = _section(raw, "synth")
    _check_keys(synth, _SYNTH_KEYS, "synth")
    base = SynthConfig().to_dict()
    base.update(synth)
    if "seed" not in synth:
        base["seed"] = cfg.seed
    try:
        cfg.synth = SynthConfig.from_dict(base)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"synth: {exc}") from exc

    if raw.get("encoders") is not None:
        if not isinstance(raw["encoders"], dict):
            raise ConfigError("encoders must map modality names to encoder specs")
        encoders = {}
        for name, spec in raw["encoders"].items():
            if not isinstance(spec, dict):
                raise ConfigError(f"encoders.{name} must be a JSON object")
            _check_keys(spec, _ENCODER_KEYS, f"encoders.{name}")
            merged = {
                "input_channels": spec.get("input_channels"),
                "conv_layers": spec.get("conv_layers", DEFAULT_CONV_LAYERS),
                "activation": spec.get("activation", "relu"),
                "embedding_dim": spec.get("embedding_dim", 32),
                "projection_dim": spec.get("projection_dim", 16),
            }
            if merged["input_channels"] is None:
                raise ConfigError(f"encoders.{name}: input_channels is required")
            try:
                encoders[name] = EncoderConfig.from_dict(merged)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"encoders.{name}: {exc}") from exc
        cfg.encoders = encoders

    if raw.get("augment") is not None:
        if not isinstance(raw["augment"], dict):
            raise ConfigError("augment must map modality names to step lists")
        augment = {}
        for name, steps in raw["augment"].items():
            if not isinstance(steps, list):
                raise ConfigError(f"augment.{name} must be a list of steps")
            for i, step in enumerate(steps):
                if not isinstance(step, dict):
                    raise ConfigError(f"augment.{name}[{i}] must be a JSON object")
                _check_keys(step, _AUG_STEP_KEYS, f"augment.{name}[{i}]")
            try:
                augment[name] = AugmentSpec.from_list(steps)
            except ConfigError:
                raise
            except (TypeError, ValueError, KeyError) as exc:
                raise ConfigError(f"augment.{name}: {exc}") from exc
        cfg.augment = augment

    pre = _section(raw, "pretrain")
    _check_keys(pre, _PRETRAIN_KEYS, "pretrain")
    if "hnl" in pre and pre["hnl"] is not None:
        _check_keys(pre["hnl"], _HNL_KEYS, "pretrain.hnl")
    cfg.pretrain_raw = pre

    ft = _section(raw, "finetune")
    _check_keys(ft, _FINETUNE_KEYS, "finetune")
    cfg.finetune_raw = ft

    sup = _section(raw, "supervised")
    _check_keys(sup, _SUPERVISED_KEYS, "supervised")
    cfg.supervised_raw = sup

    split = _section(raw, "split")
    _check_keys(split, _SPLIT_KEYS, "split")
    protocol = split.get("protocol", "cross_subject_odd_even")
    if protocol not in SPLIT_PROTOCOLS:
        raise ConfigError(f"split.protocol must be one of {SPLIT_PROTOCOLS}, got {protocol!r}")
    cfg.split_protocol = protocol
    cfg.split_params = {k: split[k] for k in ("k", "fraction") if k in split}

    if raw.get("limited_labels_methods") is not None:
        methods = [str(m) for m in raw["limited_labels_methods"]]
        for m in methods:
            if m != "supervised" and m not in METHODS:
                raise ConfigError(f"limited_labels_methods: unknown method {m!r}")
        cfg.limited_labels_methods = methods
    if raw.get("betas") is not None:
        cfg.betas = [float(b) for b in raw["betas"]]
    if raw.get("fractions") is not None:
        cfg.fractions = [float(f) for f in raw["fractions"]]
        if any(not (0.0 < f <= 1.0) for f in cfg.fractions):
            raise ConfigError("fractions must lie in (0, 1]")
    return cfg


def resolve_for_dataset(cfg: RunConfig, modality_channels: dict[str, int]) -> RunConfig:
    """Materialize encoder and augmentation defaults for concrete modalities."""
    names = list(modality_channels)
    if cfg.encoders is None:
        cfg.encoders = {
            name: EncoderConfig(
                input_channels=modality_channels[name],
                conv_layers=tuple(tuple(l) for l in DEFAULT_CONV_LAYERS),
            )
            for name in names
        }
    for name, enc in cfg.encoders.items():
        if name in modality_channels and enc.input_channels != modality_channels[name]:
            raise ConfigError(
                f"encoders.{name}: input_channels={enc.input_channels} but the dataset "
                f"has {modality_channels[name]} channels"
            )
    if cfg.augment is None:
        defaults = [DEFAULT_AUG_PRIMARY, DEFAULT_AUG_SECONDARY]
        cfg.augment = {}
        for j, name in enumerate(names):
            steps = defaults[min(j, 1)]
            if modality_channels[name] % 3 != 0:
                steps = [s for s in steps if s["kind"] not in ("rotate", "shear")]
            cfg.augment[name] = AugmentSpec.from_list(steps)
    return cfg


def build_pretrain_config(cfg: RunConfig, seed: int | None = None) -> PretrainConfig:
    if cfg.encoders is None or cfg.augment is None:
        raise ConfigError("encoder/augment sections are unresolved; load a dataset first")
    pre = cfg.pretrain_raw
    hnl_raw = pre.get("hnl") or {}
    try:
        return PretrainConfig(
            method=str(pre.get("method", "cmc_hnl")),
            encoder_configs=dict(cfg.encoders),
            augment_specs=dict(cfg.augment),
            batch_size=int(pre.get("batch_size", 64)),
            learning_rate=float(pre.get("learning_rate", 1e-3)),
            epochs=int(pre.get("epochs", 150)),
            scheduler_patience=int(pre.get("scheduler_patience", 20)),
            scheduler_factor=float(pre.get("scheduler_factor", 0.5)),
            temperature=float(pre.get("temperature", 0.1)),
            hnl=HnlSettings.from_dict(hnl_raw),
            modality=pre.get("modality"),
            seed=cfg.seed if seed is None else seed,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"pretrain: {exc}") from exc


def build_finetune_config(cfg: RunConfig, seed: int | None = None) -> FinetuneConfig:
    ft = cfg.finetune_raw
    try:
        return FinetuneConfig(
            modalities=str(ft.get("modalities", "both")),
            fusion_width=int(ft.get("fusion_width", 256)),
            epochs=int(ft.get("epochs", 100)),
            learning_rate=float(ft.get("learning_rate", 1e-3)),
            label_fraction=float(ft.get("label_fraction", 1.0)),
            batch_size=int(ft.get("batch_size", 64)),
            seed=cfg.seed if seed is None else seed,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"finetune: {exc}") from exc


def build_supervised_config(cfg: RunConfig, seed: int | None = None) -> SupervisedConfig:
    if cfg.encoders is None:
        raise ConfigError("encoder section is unresolved; load a dataset first")
    sup = cfg.supervised_raw
    ft = cfg.finetune_raw
    try:
        return SupervisedConfig(
            encoder_configs=dict(cfg.encoders),
            modalities=str(sup.get("modalities", ft.get("modalities", "both"))),
            fusion_width=int(sup.get("fusion_width", ft.get("fusion_width", 256))),
            epochs=int(sup.get("epochs", 100)),
            learning_rate=float(sup.get("learning_rate", 1e-3)),
            label_fraction=float(ft.get("label_fraction", 1.0)),
            batch_size=int(sup.get("batch_size", 64)),
            seed=cfg.seed if seed is None else seed,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"supervised: {exc}") from exc


def resolved_dict(cfg: RunConfig) -> dict:
    """Fully materialized, JSON-ready view of the configuration."""
    pre = build_pretrain_config(cfg) if cfg.encoders and cfg.augment else None
    ft = build_finetune_config(cfg)
    out: dict = {
        "seed": cfg.seed,
        "num_seeds": cfg.num_seeds,
        "data_dir": str(Path(cfg.data_dir).resolve()) if cfg.data_dir else None,
        "backend": active_backend(),
        "synth": cfg.synth.to_dict(),
        "split": {"protocol": cfg.split_protocol, **cfg.split_params},
        "finetune": {
            "modalities": ft.modalities,
            "fusion_width": ft.fusion_width,
            "epochs": ft.epochs,
            "learning_rate": ft.learning_rate,
            "label_fraction": ft.label_fraction,
            "batch_size": ft.batch_size,
        },
        "limited_labels_methods": list(cfg.limited_labels_methods),
        "betas": list(cfg.betas),
        "fractions": list(cfg.fractions),
    }
    if cfg.encoders is not None:
        out["encoders"] = {name: enc.to_dict() for name, enc in sorted(cfg.encoders.items())}
    if cfg.augment is not None:
        out["augment"] = {name: spec.to_list() for name, spec in sorted(cfg.augment.items())}
    if pre is not None:
        out["pretrain"] = {
            "method": pre.method,
            "batch_size": pre.batch_size,
            "learning_rate": pre.learning_rate,
            "epochs": pre.epochs,
            "scheduler_patience": pre.scheduler_patience,
            "scheduler_factor": pre.scheduler_factor,
            "temperature": pre.temperature,
            "hnl": pre.hnl.to_dict(),
            "modality": pre.modality,
        }
    else:
        out["pretrain"] = dict(cfg.pretrain_raw)
    sup_cfg = None
    if cfg.encoders is not None:
        sup_cfg = build_supervised_config(cfg)
        out["supervised"] = {
            "modalities": sup_cfg.modalities,
            "fusion_width": sup_cfg.fusion_width,
            "epochs": sup_cfg.epochs,
            "learning_rate": sup_cfg.learning_rate,
            "batch_size": sup_cfg.batch_size,
        }
    else:
        out["supervised"] = dict(cfg.supervised_raw)
    return out


def write_resolved(cfg: RunConfig, out_dir: str | Path) -> None:
    path = Path(out_dir) / "resolved_config.json"
    with open(path, "w", encoding="utf-8") as f:
        json.dump(resolved_dict(cfg), f, indent=2, sort_keys=True)
        f.write("\n")
