"""Pre-training, frozen-encoder linear probing, a supervised-from-scratch
baseline, and the multi-seed experiment drivers (beta sweeps, limited-label
studies).

Methods:

* ``cmc``          - cross-modal InfoNCE over both directions.
* ``cmc_hnl``      - cross-modal hard-negative loss.
* ``cmc_debiased`` - cross-modal class-prior-corrected loss (beta = 0).
* ``simclr``       - two-augmented-view loss on one modality.
* ``simclr_hnl``   - the same with the hard-negative denominator.

Every run is a pure function of its config (all randomness flows through
seeded substreams), so identical configs reproduce results bitwise.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .augment import AugmentSpec, apply_pipeline
from .data import CanonicalDataset, SplitSpec, standardize_split, stratified_label_subset
from .encoders import (
    EncoderConfig,
    _layer_norm_backward,
    _layer_norm_forward,
    encoder_backward_batch,
    encoder_forward_batch,
    init_encoder_params,
    init_projection_params,
    projection_backward_batch,
    projection_forward_batch,
)
from .errors import ConfigError, DataError
from .losses import (
    EmbeddingBatch,
    HnlParams,
    debiased_loss_bidirectional,
    hnl_loss_bidirectional,
    info_nce_bidirectional,
    nt_xent_two_view,
)
from .metrics import accuracy, macro_f1, mean_ci95
from .numcore import AdamState, ParamSet, adam_step, make_rng

METHODS = ("cmc", "cmc_hnl", "cmc_debiased", "simclr", "simclr_hnl")
CROSS_MODAL_METHODS = ("cmc", "cmc_hnl", "cmc_debiased")


@dataclass(frozen=True)
class HnlSettings:
    """Hardness/prior knobs; temperature lives on the parent config."""

    beta: float = 1.0
    tau_plus: float = 0.1

    def to_dict(self) -> dict:
        return {"beta": self.beta, "tau_plus": self.tau_plus}

    @classmethod
    def from_dict(cls, d: dict) -> "HnlSettings":
        return cls(beta=float(d.get("beta", 1.0)), tau_plus=float(d.get("tau_plus", 0.1)))


@dataclass(frozen=True)
class PretrainConfig:
    method: str
    encoder_configs: dict[str, EncoderConfig]
    augment_specs: dict[str, AugmentSpec]
    batch_size: int = 64
    learning_rate: float = 1e-3
    epochs: int = 150
    scheduler_patience: int = 20
    scheduler_factor: float = 0.5
    temperature: float = 0.1
    hnl: HnlSettings = field(default_factory=HnlSettings)
    modality: str | None = None  # which modality the simclr* methods train
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (every anchor needs a negative)")
        if self.epochs < 1 or self.learning_rate <= 0 or self.temperature <= 0:
            raise ConfigError("epochs must be >= 1; learning_rate and temperature > 0")
        if self.scheduler_patience < 1 or not (0.0 < self.scheduler_factor < 1.0):
            raise ConfigError("scheduler needs patience >= 1 and factor in (0, 1)")
        if self.method.startswith("simclr"):
            if self.modality is None:
                raise ConfigError(f"{self.method} needs `modality` set")
            if self.modality not in self.encoder_configs:
                raise ConfigError(f"no encoder config for modality {self.modality!r}")
        else:
            if len(self.encoder_configs) != 2:
                raise ConfigError(
                    f"{self.method} needs encoder configs for exactly two modalities"
                )
        # debiased is defined as the beta = 0 case
        if self.method == "cmc_debiased" and self.hnl.beta != 0.0:
            object.__setattr__(self, "hnl", replace(self.hnl, beta=0.0))

    @property
    def trained_modalities(self) -> tuple[str, ...]:
        if self.method.startswith("simclr"):
            return (self.modality,)
        return tuple(sorted(self.encoder_configs))


@dataclass(frozen=True)
class FinetuneConfig:
    modalities: str = "both"  # a modality name, or "both" for fused probing
    fusion_width: int = 256
    epochs: int = 100
    learning_rate: float = 1e-3
    label_fraction: float = 1.0
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.fusion_width < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("fusion_width, epochs, and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if not (0.0 < self.label_fraction <= 1.0):
            raise ConfigError("label_fraction must be in (0, 1]")


@dataclass(frozen=True)
class SupervisedConfig:
    """From-scratch end-to-end baseline sharing the probe's head layout."""

    encoder_configs: dict[str, EncoderConfig]
    modalities: str = "both"
    fusion_width: int = 256
    epochs: int = 100
    learning_rate: float = 1e-3
    label_fraction: float = 1.0
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if not self.encoder_configs:
            raise ConfigError("need at least one encoder config")
        if not (0.0 < self.label_fraction <= 1.0):
            raise ConfigError("label_fraction must be in (0, 1]")
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("learning_rate > 0; epochs and batch_size >= 1")


@dataclass
class PretrainResult:
    encoder_configs: dict[str, EncoderConfig]
    encoder_params: dict[str, ParamSet]
    projection_params: dict[str, ParamSet]
    loss_history: list[float]
    lr_history: list[float]


@dataclass
class ProbeResult:
    accuracy: float
    macro_f1: float


@dataclass
class RunResult:
    """Per-seed metrics for one (method, label_fraction, beta) cell."""

    method: str
    modality: str
    beta: float | None
    tau_plus: float | None
    label_fraction: float
    seeds: list[int]
    accuracies: list[float]
    macro_f1s: list[float]

    @property
    def mean_accuracy(self) -> float:
        return mean_ci95(self.accuracies)[0]

    @property
    def ci95_accuracy(self) -> float | None:
        return mean_ci95(self.accuracies)[1]

    @property
    def mean_macro_f1(self) -> float:
        return mean_ci95(self.macro_f1s)[0]

    @property
    def ci95_macro_f1(self) -> float | None:
        return mean_ci95(self.macro_f1s)[1]


class PlateauScheduler:
    """Scale the learning rate by `factor` after `patience` consecutive
    non-improving epochs; strict improvement resets the count."""

    def __init__(self, initial_lr: float, patience: int, factor: float):
        self.lr = initial_lr
        self.patience = patience
        self.factor = factor
        self.best = np.inf
        self.bad_epochs = 0

    def step(self, metric: float) -> float:
        if metric < self.best:
            self.best = metric
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr *= self.factor
                self.bad_epochs = 0
        return self.lr


# --------------------------------------------------------------------------
# Pre-training
# --------------------------------------------------------------------------

def _flat(prefix: str, params: ParamSet) -> ParamSet:
    return {f"{prefix}/{k}": v for k, v in params.items()}


def _unflat(prefix: str, flat: ParamSet) -> ParamSet:
    tag = f"{prefix}/"
    return {k[len(tag):]: v for k, v in flat.items() if k.startswith(tag)}


def _augment_batch(
    spec: AugmentSpec,
    windows: np.ndarray,
    seed: int,
    epoch: int,
    window_ids: np.ndarray,
    stream: int,
) -> np.ndarray:
    out = np.empty_like(windows)
    for j, wid in enumerate(window_ids):
        rng = make_rng(seed, 3, epoch, int(wid), stream)
        out[j] = apply_pipeline(spec, windows[j], rng)
    return out


def _epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        if idx.size < 2:
            break  # the loss needs at least one negative per anchor
        yield idx


def pretrain(cfg: PretrainConfig, ds: CanonicalDataset, split: SplitSpec) -> PretrainResult:
    """Contrastive pre-training on the train split; returns trained encoders
    and the per-epoch mean loss / learning-rate history."""
    for mod in cfg.trained_modalities:
        if mod not in ds.modalities:
            raise DataError(f"dataset lacks modality {mod!r} required by {cfg.method}")
        if mod not in cfg.augment_specs:
            raise ConfigError(f"no augmentation spec for modality {mod!r}")

    ds_std, _ = standardize_split(ds, split)
    train_windows = {
        mod: ds_std.modalities[mod][split.train_indices] for mod in cfg.trained_modalities
    }
    n_train = split.train_indices.size
    if n_train < 2:
        raise DataError(f"train split has {n_train} windows; need at least 2")

    params: ParamSet = {}
    enc_cfgs: dict[str, EncoderConfig] = {}
    for j, mod in enumerate(cfg.trained_modalities):
        enc_cfg = cfg.encoder_configs[mod]
        enc_cfgs[mod] = enc_cfg
        params.update(_flat(f"enc:{mod}", init_encoder_params(enc_cfg, make_rng(cfg.seed, 1, j))))
        params.update(
            _flat(f"proj:{mod}", init_projection_params(enc_cfg, make_rng(cfg.seed, 2, j)))
        )

    state = AdamState(learning_rate=cfg.learning_rate)
    sched = PlateauScheduler(cfg.learning_rate, cfg.scheduler_patience, cfg.scheduler_factor)
    loss_history: list[float] = []
    lr_history: list[float] = []
    cross_modal = cfg.method in CROSS_MODAL_METHODS

    for epoch in range(cfg.epochs):
        batch_losses: list[float] = []
        for idx in _epoch_batches(n_train, cfg.batch_size, make_rng(cfg.seed, 4, epoch)):
            grads: ParamSet = {k: np.zeros_like(v) for k, v in params.items()}
            n = idx.size
            if cross_modal:
                mod_a, mod_b = cfg.trained_modalities
                zs, caches = {}, {}
                for stream, mod in enumerate(cfg.trained_modalities):
                    x = _augment_batch(
                        cfg.augment_specs[mod], train_windows[mod][idx],
                        cfg.seed, epoch, idx, stream,
                    )
                    h, ecache = encoder_forward_batch(
                        enc_cfgs[mod], _unflat(f"enc:{mod}", params), x
                    )
                    z, pcache = projection_forward_batch(_unflat(f"proj:{mod}", params), h)
                    zs[mod] = z
                    caches[mod] = (ecache, pcache)
                batch = EmbeddingBatch(z_s=zs[mod_a], z_i=zs[mod_b])
                if cfg.method == "cmc":
                    out = info_nce_bidirectional(batch, cfg.temperature, reduction="mean")
                elif cfg.method == "cmc_debiased":
                    out = debiased_loss_bidirectional(
                        batch, cfg.hnl.tau_plus, cfg.temperature, reduction="mean"
                    )
                else:
                    p = HnlParams(
                        beta=cfg.hnl.beta,
                        tau_plus=cfg.hnl.tau_plus,
                        temperature=cfg.temperature,
                        num_negatives=n - 1,
                    )
                    out = hnl_loss_bidirectional(batch, p, reduction="mean")
                grad_z = {mod_a: out.grad_z_s, mod_b: out.grad_z_i}
                for mod in cfg.trained_modalities:
                    ecache, pcache = caches[mod]
                    pgrads, dh = projection_backward_batch(
                        pcache, _unflat(f"proj:{mod}", params), grad_z[mod]
                    )
                    egrads, _ = encoder_backward_batch(ecache, _unflat(f"enc:{mod}", params), dh)
                    for k, v in _flat(f"proj:{mod}", pgrads).items():
                        grads[k] += v
                    for k, v in _flat(f"enc:{mod}", egrads).items():
                        grads[k] += v
            else:
                mod = cfg.modality
                enc_p = _unflat(f"enc:{mod}", params)
                proj_p = _unflat(f"proj:{mod}", params)
                views = []
                for view in range(2):
                    x = _augment_batch(
                        cfg.augment_specs[mod], train_windows[mod][idx],
                        cfg.seed, epoch, idx, 100 + view,
                    )
                    h, ecache = encoder_forward_batch(enc_cfgs[mod], enc_p, x)
                    z, pcache = projection_forward_batch(proj_p, h)
                    views.append((z, ecache, pcache))
                hnl_p = None
                if cfg.method == "simclr_hnl":
                    hnl_p = HnlParams(
                        beta=cfg.hnl.beta,
                        tau_plus=cfg.hnl.tau_plus,
                        temperature=cfg.temperature,
                        num_negatives=2 * n - 2,
                    )
                out = nt_xent_two_view(
                    views[0][0], views[1][0], cfg.temperature, hnl_p, reduction="mean"
                )
                for (z, ecache, pcache), gz in zip(views, (out.grad_z_s, out.grad_z_i)):
                    pgrads, dh = projection_backward_batch(pcache, proj_p, gz)
                    egrads, _ = encoder_backward_batch(ecache, enc_p, dh)
                    for k, v in _flat(f"proj:{mod}", pgrads).items():
                        grads[k] += v
                    for k, v in _flat(f"enc:{mod}", egrads).items():
                        grads[k] += v

            params, state = adam_step(params, grads, state)
            batch_losses.append(out.loss)

        epoch_loss = float(np.mean(batch_losses))
        loss_history.append(epoch_loss)
        lr_history.append(state.learning_rate)
        state.learning_rate = sched.step(epoch_loss)

    return PretrainResult(
        encoder_configs=enc_cfgs,
        encoder_params={m: _unflat(f"enc:{m}", params) for m in cfg.trained_modalities},
        projection_params={m: _unflat(f"proj:{m}", params) for m in cfg.trained_modalities},
        loss_history=loss_history,
        lr_history=lr_history,
    )


# --------------------------------------------------------------------------
# Classifier head shared by the probe and the supervised baseline
# --------------------------------------------------------------------------
#
# Fused ("both"): per modality, linear map to fusion_width + layer norm +
# ReLU, concatenated, then a linear softmax classifier. Single modality:
# the representation feeds the classifier directly.

def _init_head(
    mods: list[str],
    dims: dict[str, int],
    fused: bool,
    fusion_width: int,
    num_classes: int,
    rng: np.random.Generator,
) -> ParamSet:
    params: ParamSet = {}
    if fused:
        for m in mods:
            bound = 1.0 / np.sqrt(dims[m])
            params[f"{m}/w"] = rng.uniform(-bound, bound, size=(fusion_width, dims[m]))
            params[f"{m}/b"] = np.zeros(fusion_width)
            params[f"{m}/gamma"] = np.ones(fusion_width)
            params[f"{m}/beta"] = np.zeros(fusion_width)
        in_dim = fusion_width * len(mods)
    else:
        in_dim = dims[mods[0]]
    bound = 1.0 / np.sqrt(in_dim)
    params["cls/w"] = rng.uniform(-bound, bound, size=(num_classes, in_dim))
    params["cls/b"] = np.zeros(num_classes)
    return params


@dataclass
class _HeadCache:
    hs: dict[str, np.ndarray]
    feats: dict[str, tuple]
    concat: np.ndarray
    probs: np.ndarray


def _head_forward(
    params: ParamSet, hs: dict[str, np.ndarray], mods: list[str], fused: bool
) -> tuple[np.ndarray, _HeadCache]:
    feats: dict[str, tuple] = {}
    if fused:
        parts = []
        for m in mods:
            pre = hs[m] @ params[f"{m}/w"].T + params[f"{m}/b"]
            normed, xhat, inv = _layer_norm_forward(
                pre, params[f"{m}/gamma"], params[f"{m}/beta"]
            )
            feats[m] = (xhat, inv, normed)
            parts.append(np.maximum(normed, 0.0))
        concat = np.concatenate(parts, axis=1)
    else:
        concat = hs[mods[0]]
    logits = concat @ params["cls/w"].T + params["cls/b"]
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)
    return probs, _HeadCache(hs=hs, feats=feats, concat=concat, probs=probs)


def _head_backward(
    params: ParamSet, cache: _HeadCache, labels: np.ndarray, mods: list[str], fused: bool
) -> tuple[ParamSet, dict[str, np.ndarray], float]:
    """Mean cross-entropy gradients; returns (head grads, grad per h, loss)."""
    n = labels.size
    probs = cache.probs
    loss = -float(np.mean(np.log(probs[np.arange(n), labels] + 1e-12)))
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n

    grads: ParamSet = {
        "cls/w": dlogits.T @ cache.concat,
        "cls/b": dlogits.sum(axis=0),
    }
    dconcat = dlogits @ params["cls/w"]
    dh: dict[str, np.ndarray] = {}
    if fused:
        offset = 0
        for m in mods:
            width = params[f"{m}/b"].size
            dact = dconcat[:, offset : offset + width]
            offset += width
            xhat, inv, normed = cache.feats[m]
            dnormed = dact * (normed > 0.0)
            dpre, dgamma, dbeta = _layer_norm_backward(dnormed, xhat, inv, params[f"{m}/gamma"])
            grads[f"{m}/gamma"] = dgamma
            grads[f"{m}/beta"] = dbeta
            grads[f"{m}/w"] = dpre.T @ cache.hs[m]
            grads[f"{m}/b"] = dpre.sum(axis=0)
            dh[m] = dpre @ params[f"{m}/w"]
    else:
        dh[mods[0]] = dconcat
    return grads, dh, loss


def _predict_labels(params: ParamSet, hs: dict[str, np.ndarray], mods: list[str], fused: bool):
    probs, _ = _head_forward(params, hs, mods, fused)
    return np.argmax(probs, axis=1)


# --------------------------------------------------------------------------
# Frozen-encoder probing
# --------------------------------------------------------------------------

def compute_representations(
    config: EncoderConfig, params: ParamSet, windows: np.ndarray, chunk: int = 256
) -> np.ndarray:
    """Encoder outputs for many windows, in deterministic chunks."""
    outs = []
    for start in range(0, windows.shape[0], chunk):
        h, _ = encoder_forward_batch(config, params, windows[start : start + chunk])
        outs.append(h)
    return np.concatenate(outs, axis=0)


def _probe_modalities(cfg_modalities: str, available: list[str]) -> list[str]:
    if cfg_modalities == "both":
        if len(available) < 2:
            raise ConfigError("modalities='both' needs two pretrained encoders")
        return sorted(available)
    if cfg_modalities not in available:
        raise ConfigError(
            f"no pretrained encoder for modality {cfg_modalities!r}; have {sorted(available)}"
        )
    return [cfg_modalities]


def finetune_probe(
    cfg: FinetuneConfig,
    pretrained: PretrainResult,
    ds: CanonicalDataset,
    split: SplitSpec,
) -> ProbeResult:
    """Train the classifier head on frozen representations, evaluate on test.

    Encoders are only read; no augmentation is applied. Labels come from a
    stratified subset of the train split of size `label_fraction`.
    """
    mods = _probe_modalities(cfg.modalities, list(pretrained.encoder_params))
    for m in mods:
        if m not in ds.modalities:
            raise DataError(f"dataset lacks modality {m!r} needed for fine-tuning")

    ds_std, _ = standardize_split(ds, split)
    hs_all = {
        m: compute_representations(
            pretrained.encoder_configs[m], pretrained.encoder_params[m], ds_std.modalities[m]
        )
        for m in mods
    }

    labeled = stratified_label_subset(ds, split, cfg.label_fraction, make_rng(cfg.seed, 5))
    fused = len(mods) > 1
    dims = {m: hs_all[m].shape[1] for m in mods}
    head = _init_head(
        mods, dims, fused, cfg.fusion_width, ds.meta.num_classes, make_rng(cfg.seed, 6)
    )

    state = AdamState(learning_rate=cfg.learning_rate)
    y = ds.labels
    for epoch in range(cfg.epochs):
        order = make_rng(cfg.seed, 7, epoch).permutation(labeled.size)
        for start in range(0, labeled.size, cfg.batch_size):
            idx = labeled[order[start : start + cfg.batch_size]]
            if idx.size == 0:
                break
            hs = {m: hs_all[m][idx] for m in mods}
            _, cache = _head_forward(head, hs, mods, fused)
            grads, _, _ = _head_backward(head, cache, y[idx], mods, fused)
            head, state = adam_step(head, grads, state)

    test = split.test_indices
    preds = _predict_labels(head, {m: hs_all[m][test] for m in mods}, mods, fused)
    return ProbeResult(
        accuracy=accuracy(y[test], preds),
        macro_f1=macro_f1(y[test], preds, ds.meta.num_classes),
    )


# --------------------------------------------------------------------------
# Supervised-from-scratch baseline
# --------------------------------------------------------------------------

def supervised_train(
    cfg: SupervisedConfig, ds: CanonicalDataset, split: SplitSpec
) -> ProbeResult:
    """Train fresh encoders plus the classifier head end to end on the
    labeled subset; the representation never sees the unlabeled windows."""
    mods = _probe_modalities(cfg.modalities, list(cfg.encoder_configs))
    for m in mods:
        if m not in ds.modalities:
            raise DataError(f"dataset lacks modality {m!r}")

    ds_std, _ = standardize_split(ds, split)
    labeled = stratified_label_subset(ds, split, cfg.label_fraction, make_rng(cfg.seed, 5))
    fused = len(mods) > 1

    params: ParamSet = {}
    for j, m in enumerate(mods):
        params.update(_flat(f"enc:{m}", init_encoder_params(cfg.encoder_configs[m], make_rng(cfg.seed, 1, j))))
    dims = {m: cfg.encoder_configs[m].embedding_dim for m in mods}
    head = _init_head(
        mods, dims, fused, cfg.fusion_width, ds.meta.num_classes, make_rng(cfg.seed, 6)
    )
    params.update(_flat("head", head))

    state = AdamState(learning_rate=cfg.learning_rate)
    y = ds.labels
    for epoch in range(cfg.epochs):
        order = make_rng(cfg.seed, 7, epoch).permutation(labeled.size)
        for start in range(0, labeled.size, cfg.batch_size):
            idx = labeled[order[start : start + cfg.batch_size]]
            if idx.size == 0:
                break
            grads: ParamSet = {k: np.zeros_like(v) for k, v in params.items()}
            hs, ecaches = {}, {}
            for m in mods:
                h, ecache = encoder_forward_batch(
                    cfg.encoder_configs[m], _unflat(f"enc:{m}", params), ds_std.modalities[m][idx]
                )
                hs[m] = h
                ecaches[m] = ecache
            head_p = _unflat("head", params)
            _, cache = _head_forward(head_p, hs, mods, fused)
            head_grads, dh, _ = _head_backward(head_p, cache, y[idx], mods, fused)
            for k, v in _flat("head", head_grads).items():
                grads[k] += v
            for m in mods:
                egrads, _ = encoder_backward_batch(ecaches[m], _unflat(f"enc:{m}", params), dh[m])
                for k, v in _flat(f"enc:{m}", egrads).items():
                    grads[k] += v
            params, state = adam_step(params, grads, state)

    test = split.test_indices
    hs_test = {
        m: compute_representations(
            cfg.encoder_configs[m], _unflat(f"enc:{m}", params), ds_std.modalities[m][test]
        )
        for m in mods
    }
    preds = _predict_labels(_unflat("head", params), hs_test, mods, fused)
    return ProbeResult(
        accuracy=accuracy(y[test], preds),
        macro_f1=macro_f1(y[test], preds, ds.meta.num_classes),
    )


# --------------------------------------------------------------------------
# Multi-seed experiment drivers
# --------------------------------------------------------------------------

def _result_shell(method: str, modality: str, pre: PretrainConfig | None,
                  label_fraction: float) -> RunResult:
    beta = tau = None
    if pre is not None and (pre.method.endswith("_hnl") or pre.method == "cmc_debiased"):
        beta = pre.hnl.beta
        tau = pre.hnl.tau_plus
    return RunResult(
        method=method,
        modality=modality,
        beta=beta,
        tau_plus=tau,
        label_fraction=label_fraction,
        seeds=[],
        accuracies=[],
        macro_f1s=[],
    )


def multi_run(
    pre_cfg: PretrainConfig,
    ft_cfg: FinetuneConfig,
    ds: CanonicalDataset,
    split: SplitSpec,
    num_seeds: int,
) -> RunResult:
    """Pretrain + probe for seeds base..base+n-1 and aggregate the metrics."""
    if num_seeds < 1:
        raise ConfigError("num_seeds must be >= 1")
    result = _result_shell(pre_cfg.method, ft_cfg.modalities, pre_cfg, ft_cfg.label_fraction)
    for k in range(num_seeds):
        seed = pre_cfg.seed + k
        trained = pretrain(replace(pre_cfg, seed=seed), ds, split)
        probe = finetune_probe(replace(ft_cfg, seed=seed), trained, ds, split)
        result.seeds.append(seed)
        result.accuracies.append(probe.accuracy)
        result.macro_f1s.append(probe.macro_f1)
    return result


def multi_run_supervised(
    cfg: SupervisedConfig, ds: CanonicalDataset, split: SplitSpec, num_seeds: int
) -> RunResult:
    if num_seeds < 1:
        raise ConfigError("num_seeds must be >= 1")
    result = _result_shell("supervised", cfg.modalities, None, cfg.label_fraction)
    for k in range(num_seeds):
        seed = cfg.seed + k
        probe = supervised_train(replace(cfg, seed=seed), ds, split)
        result.seeds.append(seed)
        result.accuracies.append(probe.accuracy)
        result.macro_f1s.append(probe.macro_f1)
    return result


def beta_sweep(
    pre_cfg: PretrainConfig,
    ft_cfg: FinetuneConfig,
    ds: CanonicalDataset,
    split: SplitSpec,
    betas: list[float],
    num_seeds: int,
) -> list[tuple[float, RunResult]]:
    """One aggregated run per hardness value, everything else held fixed."""
    if not betas:
        raise ConfigError("betas must be non-empty")
    if not pre_cfg.method.endswith("_hnl"):
        raise ConfigError(f"beta sweeps need a *_hnl method, got {pre_cfg.method!r}")
    rows = []
    for beta in sorted(betas):
        cfg = replace(pre_cfg, hnl=replace(pre_cfg.hnl, beta=beta))
        rows.append((beta, multi_run(cfg, ft_cfg, ds, split, num_seeds)))
    return rows


def limited_label_study(
    pre_cfgs: dict[str, PretrainConfig],
    sup_cfg: SupervisedConfig | None,
    ft_cfg: FinetuneConfig,
    ds: CanonicalDataset,
    split: SplitSpec,
    fractions: list[float],
    num_seeds: int,
) -> list[RunResult]:
    """Per method and label fraction, aggregated probe metrics.

    SSL methods pretrain once per seed on the full unlabeled train split and
    re-probe per fraction; the supervised baseline retrains per fraction.
    """
    if not fractions:
        raise ConfigError("fractions must be non-empty")
    fractions = sorted(fractions)
    rows: list[RunResult] = []

    for name, pre_cfg in pre_cfgs.items():
        per_fraction = {
            f: _result_shell(name, ft_cfg.modalities, pre_cfg, f) for f in fractions
        }
        for k in range(num_seeds):
            seed = pre_cfg.seed + k
            trained = pretrain(replace(pre_cfg, seed=seed), ds, split)
            for f in fractions:
                probe = finetune_probe(
                    replace(ft_cfg, seed=seed, label_fraction=f), trained, ds, split
                )
                per_fraction[f].seeds.append(seed)
                per_fraction[f].accuracies.append(probe.accuracy)
                per_fraction[f].macro_f1s.append(probe.macro_f1)
        rows.extend(per_fraction[f] for f in fractions)

    if sup_cfg is not None:
        for f in fractions:
            rows.append(
                multi_run_supervised(
                    replace(sup_cfg, label_fraction=f), ds, split, num_seeds
                )
            )
    return rows


# --------------------------------------------------------------------------
# Metrics files
# --------------------------------------------------------------------------

CSV_COLUMNS = [
    "method", "modality", "beta", "tau_plus", "label_fraction",
    "seed", "accuracy", "macro_f1",
]


def write_metrics_csv(path: str | Path, results: list[RunResult]) -> None:
    """One row per (result, seed); deterministic float formatting via repr."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for r in results:
            for seed, acc, f1 in zip(r.seeds, r.accuracies, r.macro_f1s):
                writer.writerow([
                    r.method,
                    r.modality,
                    "" if r.beta is None else repr(float(r.beta)),
                    "" if r.tau_plus is None else repr(float(r.tau_plus)),
                    repr(float(r.label_fraction)),
                    seed,
                    repr(float(acc)),
                    repr(float(f1)),
                ])


def write_aggregate_json(path: str | Path, results: list[RunResult]) -> None:
    rows = []
    for r in results:
        rows.append({
            "method": r.method,
            "modality": r.modality,
            "beta": r.beta,
            "tau_plus": r.tau_plus,
            "label_fraction": r.label_fraction,
            "num_seeds": len(r.seeds),
            "mean_accuracy": r.mean_accuracy,
            "ci95_accuracy": r.ci95_accuracy,
            "mean_macro_f1": r.mean_macro_f1,
            "ci95_macro_f1": r.ci95_macro_f1,
        })
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"results": rows}, f, indent=2, sort_keys=True)
        f.write("\n")
