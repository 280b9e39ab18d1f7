"""Modality encoders and projection heads with hand-written backward passes.

An encoder is a stack of (1-D conv -> per-sample layer norm over channels ->
nonlinearity), global mean pooling over time, then a two-layer MLP producing
the representation ``h``. The projection head is another two-layer MLP whose
output is L2-normalized to give the contrastive projection ``z``.

Everything is expressed batched ([B, time, channels]); the single-window
entry points wrap a batch of one. Parameters live in plain name->array dicts
so the optimizer and the gradient oracle can treat them uniformly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import backend
from .errors import DegenerateEmbeddingError, SchemaError, ShapeError
from .numcore import ParamSet

LN_EPS = 1e-5
_MAGIC = b"HNCK"


@dataclass(frozen=True)
class EncoderConfig:
    input_channels: int
    conv_layers: tuple[tuple[int, int, int], ...]  # (out_channels, kernel, stride)
    activation: str = "relu"
    embedding_dim: int = 32
    projection_dim: int = 16

    def __post_init__(self):
        if self.input_channels < 1 or self.embedding_dim < 1 or self.projection_dim < 1:
            raise ValueError("channel and dimension extents must be >= 1")
        if len(self.conv_layers) < 1:
            raise ValueError("need at least one conv layer")
        for out, k, s in self.conv_layers:
            if out < 1 or k < 1 or s < 1:
                raise ValueError(f"bad conv layer spec ({out}, {k}, {s})")
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def min_input_length(self) -> int:
        """Shortest window the conv stack can reduce to one output step."""
        need = 1
        for out, k, s in reversed(self.conv_layers):
            need = k + s * (need - 1)
        return need

    def to_dict(self) -> dict:
        return {
            "input_channels": self.input_channels,
            "conv_layers": [list(layer) for layer in self.conv_layers],
            "activation": self.activation,
            "embedding_dim": self.embedding_dim,
            "projection_dim": self.projection_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        return cls(
            input_channels=int(d["input_channels"]),
            conv_layers=tuple(tuple(int(v) for v in layer) for layer in d["conv_layers"]),
            activation=str(d["activation"]),
            embedding_dim=int(d["embedding_dim"]),
            projection_dim=int(d["projection_dim"]),
        )


@dataclass
class ForwardCache:
    """Intermediates retained by the forward pass for the backward pass."""

    config: EncoderConfig
    layer_inputs: list[np.ndarray] = field(default_factory=list)  # conv inputs
    ln_xhat: list[np.ndarray] = field(default_factory=list)
    ln_inv_std: list[np.ndarray] = field(default_factory=list)
    act_pre: list[np.ndarray] = field(default_factory=list)  # layer-norm outputs
    conv_out_time: int = 0
    pooled: np.ndarray | None = None
    fc1_pre: np.ndarray | None = None
    fc1_act: np.ndarray | None = None


@dataclass
class ProjectionCache:
    h: np.ndarray
    g1_pre: np.ndarray
    g1_act: np.ndarray
    raw: np.ndarray        # pre-normalization projection
    inv_norm: np.ndarray   # 1 / ||raw|| per row
    z: np.ndarray


def _act(name: str, x: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(x, 0.0)
    return np.tanh(x)


def _act_grad(name: str, pre: np.ndarray, grad: np.ndarray) -> np.ndarray:
    if name == "relu":
        return grad * (pre > 0.0)
    y = np.tanh(pre)
    return grad * (1.0 - y * y)


def encoder_param_shapes(config: EncoderConfig) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    cin = config.input_channels
    for i, (out, k, _s) in enumerate(config.conv_layers):
        shapes[f"conv{i}_w"] = (out, cin, k)
        shapes[f"conv{i}_b"] = (out,)
        shapes[f"ln{i}_gamma"] = (out,)
        shapes[f"ln{i}_beta"] = (out,)
        cin = out
    e = config.embedding_dim
    shapes["fc1_w"] = (e, cin)
    shapes["fc1_b"] = (e,)
    shapes["fc2_w"] = (e, e)
    shapes["fc2_b"] = (e,)
    return shapes


def projection_param_shapes(config: EncoderConfig) -> dict[str, tuple[int, ...]]:
    e, p = config.embedding_dim, config.projection_dim
    return {"g1_w": (e, e), "g1_b": (e,), "g2_w": (p, e), "g2_b": (p,)}


def _fan_in_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_encoder_params(config: EncoderConfig, rng: np.random.Generator) -> ParamSet:
    """Fan-in-scaled uniform weights and biases, identity layer norms.

    Biases share the weight bound so a freshly initialized head never maps
    an input to exactly zero (which normalization downstream cannot handle).
    """
    params: ParamSet = {}
    cin = config.input_channels
    for i, (out, k, _s) in enumerate(config.conv_layers):
        params[f"conv{i}_w"] = _fan_in_uniform(rng, (out, cin, k), cin * k)
        params[f"conv{i}_b"] = _fan_in_uniform(rng, (out,), cin * k)
        params[f"ln{i}_gamma"] = np.ones(out)
        params[f"ln{i}_beta"] = np.zeros(out)
        cin = out
    e = config.embedding_dim
    params["fc1_w"] = _fan_in_uniform(rng, (e, cin), cin)
    params["fc1_b"] = _fan_in_uniform(rng, (e,), cin)
    params["fc2_w"] = _fan_in_uniform(rng, (e, e), e)
    params["fc2_b"] = _fan_in_uniform(rng, (e,), e)
    return params


def init_projection_params(config: EncoderConfig, rng: np.random.Generator) -> ParamSet:
    e, p = config.embedding_dim, config.projection_dim
    return {
        "g1_w": _fan_in_uniform(rng, (e, e), e),
        "g1_b": _fan_in_uniform(rng, (e,), e),
        "g2_w": _fan_in_uniform(rng, (p, e), e),
        "g2_b": _fan_in_uniform(rng, (p,), e),
    }


def _layer_norm_forward(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return gamma * xhat + beta, xhat, inv


def _layer_norm_backward(grad, xhat, inv, gamma):
    dgamma = np.sum(grad * xhat, axis=tuple(range(grad.ndim - 1)))
    dbeta = np.sum(grad, axis=tuple(range(grad.ndim - 1)))
    dxhat = grad * gamma
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * np.mean(dxhat * xhat, axis=-1, keepdims=True)
    )
    return dx, dgamma, dbeta


def encoder_forward_batch(
    config: EncoderConfig, params: ParamSet, x: np.ndarray
) -> tuple[np.ndarray, ForwardCache]:
    """Representations for a batch of windows [B, time, channels] -> [B, embedding_dim]."""
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    if x.ndim != 3:
        raise ShapeError(f"expected [batch, time, channels], got shape {x.shape}")
    if x.shape[2] != config.input_channels:
        raise ShapeError(
            f"window has {x.shape[2]} channels, config expects {config.input_channels}"
        )
    if x.shape[1] < config.min_input_length:
        raise ShapeError(
            f"window length {x.shape[1]} is shorter than the required minimum "
            f"{config.min_input_length} for this conv stack"
        )

    cache = ForwardCache(config=config)
    cur = x
    for i, (_out, _k, stride) in enumerate(config.conv_layers):
        cache.layer_inputs.append(cur)
        conv = backend.conv1d_forward(cur, params[f"conv{i}_w"], params[f"conv{i}_b"], stride)
        normed, xhat, inv = _layer_norm_forward(
            conv, params[f"ln{i}_gamma"], params[f"ln{i}_beta"]
        )
        cache.ln_xhat.append(xhat)
        cache.ln_inv_std.append(inv)
        cache.act_pre.append(normed)
        cur = _act(config.activation, normed)

    cache.conv_out_time = cur.shape[1]
    pooled = cur.mean(axis=1)
    cache.pooled = pooled
    fc1 = pooled @ params["fc1_w"].T + params["fc1_b"]
    cache.fc1_pre = fc1
    a1 = _act(config.activation, fc1)
    cache.fc1_act = a1
    h = a1 @ params["fc2_w"].T + params["fc2_b"]
    return h, cache


def encoder_forward(
    config: EncoderConfig, params: ParamSet, window: np.ndarray
) -> tuple[np.ndarray, ForwardCache]:
    """Single-window entry point; see :func:`encoder_forward_batch`."""
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2:
        raise ShapeError(f"expected [time, channels], got shape {window.shape}")
    h, cache = encoder_forward_batch(config, params, window[None])
    return h[0], cache


def encoder_backward_batch(
    cache: ForwardCache, params: ParamSet, grad_h: np.ndarray
) -> tuple[ParamSet, np.ndarray]:
    """Gradients of the encoder map for a batch; returns (param grads, input grad)."""
    config = cache.config
    grad_h = np.asarray(grad_h, dtype=np.float64)
    if cache.fc1_act is None or grad_h.shape != (cache.fc1_act.shape[0], config.embedding_dim):
        raise ShapeError("grad_h does not match the cached forward pass")

    grads: ParamSet = {}
    grads["fc2_w"] = grad_h.T @ cache.fc1_act
    grads["fc2_b"] = grad_h.sum(axis=0)
    da1 = grad_h @ params["fc2_w"]
    dfc1 = _act_grad(config.activation, cache.fc1_pre, da1)
    grads["fc1_w"] = dfc1.T @ cache.pooled
    grads["fc1_b"] = dfc1.sum(axis=0)
    dpooled = dfc1 @ params["fc1_w"]

    t_out = cache.conv_out_time
    dcur = np.repeat(dpooled[:, None, :], t_out, axis=1) / t_out

    for i in reversed(range(len(config.conv_layers))):
        stride = config.conv_layers[i][2]
        dnormed = _act_grad(config.activation, cache.act_pre[i], dcur)
        dconv, dgamma, dbeta = _layer_norm_backward(
            dnormed, cache.ln_xhat[i], cache.ln_inv_std[i], params[f"ln{i}_gamma"]
        )
        grads[f"ln{i}_gamma"] = dgamma
        grads[f"ln{i}_beta"] = dbeta
        dcur, dw, db = backend.conv1d_backward(
            cache.layer_inputs[i], params[f"conv{i}_w"], np.ascontiguousarray(dconv), stride
        )
        grads[f"conv{i}_w"] = dw
        grads[f"conv{i}_b"] = db
    return grads, dcur


def encoder_backward(
    cache: ForwardCache, params: ParamSet, grad_output: np.ndarray
) -> tuple[ParamSet, np.ndarray]:
    """Single-window backward; grad_output has embedding_dim entries."""
    grads, dx = encoder_backward_batch(cache, params, np.asarray(grad_output)[None])
    return grads, dx[0]


def projection_forward_batch(
    params: ParamSet, h: np.ndarray
) -> tuple[np.ndarray, ProjectionCache]:
    """Project representations to unit-norm vectors [B, projection_dim]."""
    h = np.asarray(h, dtype=np.float64)
    pre = h @ params["g1_w"].T + params["g1_b"]
    a = np.maximum(pre, 0.0)
    raw = a @ params["g2_w"].T + params["g2_b"]
    norms = np.linalg.norm(raw, axis=1)
    bad = np.where(norms <= 1e-12)[0]
    if bad.size:
        raise DegenerateEmbeddingError(int(bad[0]), float(norms[bad[0]]))
    inv = 1.0 / norms
    z = raw * inv[:, None]
    return z, ProjectionCache(h=h, g1_pre=pre, g1_act=a, raw=raw, inv_norm=inv, z=z)


def projection_forward(params: ParamSet, h: np.ndarray) -> tuple[np.ndarray, ProjectionCache]:
    z, cache = projection_forward_batch(params, np.asarray(h)[None])
    return z[0], cache


def projection_backward_batch(
    cache: ProjectionCache, params: ParamSet, grad_z: np.ndarray
) -> tuple[ParamSet, np.ndarray]:
    """Gradients of the projection map; returns (param grads, grad wrt h)."""
    grad_z = np.asarray(grad_z, dtype=np.float64)
    z = cache.z
    # d(v/||v||) pushes grad onto the tangent plane and rescales by 1/||v||
    draw = (grad_z - z * np.sum(grad_z * z, axis=1, keepdims=True)) * cache.inv_norm[:, None]
    grads: ParamSet = {
        "g2_w": draw.T @ cache.g1_act,
        "g2_b": draw.sum(axis=0),
    }
    da = draw @ params["g2_w"]
    dpre = da * (cache.g1_pre > 0.0)
    grads["g1_w"] = dpre.T @ cache.h
    grads["g1_b"] = dpre.sum(axis=0)
    dh = dpre @ params["g1_w"]
    return grads, dh


def save_checkpoint(
    path: str | Path,
    config: EncoderConfig,
    encoder_params: ParamSet,
    projection_params: ParamSet,
) -> None:
    """Write config + parameters as header JSON followed by float64 LE payloads."""
    named = [(f"enc/{k}", v) for k, v in encoder_params.items()]
    named += [(f"proj/{k}", v) for k, v in projection_params.items()]
    tensors = []
    offset = 0
    for name, arr in named:
        nbytes = arr.size * 8
        tensors.append(
            {"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": nbytes}
        )
        offset += nbytes
    header = json.dumps(
        {"format": "hncl-checkpoint", "version": 1, "config": config.to_dict(), "tensors": tensors},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for _name, arr in named:
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(
    path: str | Path, expected_config: EncoderConfig | None = None
) -> tuple[EncoderConfig, ParamSet, ParamSet]:
    """Read a checkpoint, validating every tensor shape against the config."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != _MAGIC:
        raise SchemaError(f"{path}: not a checkpoint file (bad magic)")
    (header_len,) = struct.unpack("<I", blob[4:8])
    try:
        header = json.loads(blob[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: malformed checkpoint header: {exc}") from exc
    if header.get("format") != "hncl-checkpoint":
        raise SchemaError(f"{path}: unknown checkpoint format tag")
    config = EncoderConfig.from_dict(header["config"])
    if expected_config is not None and config != expected_config:
        raise SchemaError(f"{path}: checkpoint config does not match the expected config")

    expected = {f"enc/{k}": s for k, s in encoder_param_shapes(config).items()}
    expected.update({f"proj/{k}": s for k, s in projection_param_shapes(config).items()})
    payload = blob[8 + header_len :]
    enc: ParamSet = {}
    proj: ParamSet = {}
    seen = set()
    for tensor in header["tensors"]:
        name = tensor["name"]
        shape = tuple(int(v) for v in tensor["shape"])
        if name not in expected:
            raise SchemaError(f"{path}: unexpected tensor {name!r}")
        if shape != expected[name]:
            raise SchemaError(
                f"{path}: tensor {name!r} has shape {shape}, config implies {expected[name]}"
            )
        start, nbytes = int(tensor["offset"]), int(tensor["nbytes"])
        if start + nbytes > len(payload):
            raise SchemaError(f"{path}: payload truncated reading {name!r}")
        arr = np.frombuffer(payload[start : start + nbytes], dtype="<f8").reshape(shape).copy()
        seen.add(name)
        if name.startswith("enc/"):
            enc[name[4:]] = arr
        else:
            proj[name[5:]] = arr
    missing = set(expected) - seen
    if missing:
        raise SchemaError(f"{path}: checkpoint is missing tensors {sorted(missing)}")
    return config, enc, proj
