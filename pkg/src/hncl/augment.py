"""Stochastic window augmentations for pre-training.

Each transform maps a [time, channels] window to a window of the same shape.
Kinds: jitter (additive Gaussian noise), scale (per-channel factors), rotate
(one random 3-D rotation applied to every consecutive channel triplet),
permute_segments (shuffle contiguous time segments), channel_shuffle, shear
(random affine shear on channel triplets), and resized_crop (random crop
resampled back to full length).

An AugmentSpec is an ordered pipeline of steps, each gated independently by
its probability; given the same generator state the output is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

KINDS = (
    "jitter",
    "scale",
    "rotate",
    "permute_segments",
    "channel_shuffle",
    "shear",
    "resized_crop",
)

# Defaults assume channels standardized to roughly unit variance.
DEFAULT_PARAMS: dict[str, dict] = {
    "jitter": {"sigma": 0.05},
    "scale": {"low": 0.9, "high": 1.1},
    "rotate": {},
    "permute_segments": {"min_segments": 2, "max_segments": 5},
    "channel_shuffle": {},
    "shear": {"magnitude": 0.2},
    "resized_crop": {"min_fraction": 0.6, "max_fraction": 1.0},
}


@dataclass(frozen=True)
class AugmentStep:
    kind: str
    probability: float = 1.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown augmentation kind {self.kind!r}")
        if not (0.0 <= self.probability <= 1.0):
            raise ConfigError(f"probability must be in [0, 1], got {self.probability}")
        unknown = set(self.params) - set(DEFAULT_PARAMS[self.kind])
        if unknown:
            raise ConfigError(f"{self.kind}: unknown params {sorted(unknown)}")

    def resolved_params(self) -> dict:
        merged = dict(DEFAULT_PARAMS[self.kind])
        merged.update(self.params)
        return merged

    def to_dict(self) -> dict:
        return {"kind": self.kind, "probability": self.probability, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentStep":
        return cls(
            kind=str(d["kind"]),
            probability=float(d.get("probability", 1.0)),
            params=dict(d.get("params", {})),
        )


@dataclass(frozen=True)
class AugmentSpec:
    pipeline: tuple[AugmentStep, ...] = ()

    def to_list(self) -> list[dict]:
        return [step.to_dict() for step in self.pipeline]

    @classmethod
    def from_list(cls, items: list[dict]) -> "AugmentSpec":
        return cls(pipeline=tuple(AugmentStep.from_dict(d) for d in items))


def _require_triplets(kind: str, channels: int) -> int:
    if channels % 3 != 0:
        raise ConfigError(
            f"{kind} needs the channel count divisible by 3 (got {channels}); "
            "channels are interpreted as consecutive 3-D point triplets"
        )
    return channels // 3


def _random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Rotation about a uniformly random axis by a uniform angle (Rodrigues)."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, 2.0 * np.pi)
    kx, ky, kz = axis
    k_cross = np.array([[0.0, -kz, ky], [kz, 0.0, -kx], [-ky, kx, 0.0]])
    return np.eye(3) + np.sin(angle) * k_cross + (1.0 - np.cos(angle)) * (k_cross @ k_cross)


def _apply_per_triplet(window: np.ndarray, mat: np.ndarray) -> np.ndarray:
    t, c = window.shape
    pts = window.reshape(t, c // 3, 3)
    return (pts @ mat.T).reshape(t, c)


def apply_augmentation(
    kind: str, params: dict, window: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Apply a single transform; output shape always equals input shape."""
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2 or window.size == 0:
        raise ValueError(f"window must be non-empty [time, channels], got {window.shape}")
    t, c = window.shape
    p = dict(DEFAULT_PARAMS.get(kind, {}))
    p.update(params)

    if kind == "jitter":
        sigma = float(p["sigma"])
        if sigma < 0:
            raise ConfigError(f"jitter sigma must be >= 0, got {sigma}")
        return window + rng.normal(0.0, sigma, size=window.shape)

    if kind == "scale":
        low, high = float(p["low"]), float(p["high"])
        if low <= 0 or high < low:
            raise ConfigError(f"scale range must satisfy 0 < low <= high, got [{low}, {high}]")
        return window * rng.uniform(low, high, size=c)[None, :]

    if kind == "rotate":
        _require_triplets(kind, c)
        return _apply_per_triplet(window, _random_rotation(rng))

    if kind == "permute_segments":
        lo, hi = int(p["min_segments"]), int(p["max_segments"])
        if lo < 1 or hi < lo:
            raise ConfigError(f"segment count range [{lo}, {hi}] is invalid")
        k = int(rng.integers(lo, hi + 1))
        k = min(k, t)
        if k == 1:
            return window.copy()
        parts = np.array_split(np.arange(t), k)
        order = rng.permutation(k)
        return window[np.concatenate([parts[j] for j in order])]

    if kind == "channel_shuffle":
        return window[:, rng.permutation(c)]

    if kind == "shear":
        _require_triplets(kind, c)
        mag = float(p["magnitude"])
        mat = np.eye(3)
        off = ~np.eye(3, dtype=bool)
        mat[off] += rng.uniform(-mag, mag, size=6)
        return _apply_per_triplet(window, mat)

    if kind == "resized_crop":
        lo, hi = float(p["min_fraction"]), float(p["max_fraction"])
        if not (0.0 < lo <= hi <= 1.0):
            raise ConfigError(f"crop fractions must satisfy 0 < lo <= hi <= 1, got [{lo}, {hi}]")
        frac = rng.uniform(lo, hi)
        length = max(2, int(round(frac * t)))
        start = int(rng.integers(0, t - length + 1))
        grid = np.linspace(start, start + length - 1, t)
        src = np.arange(t, dtype=np.float64)
        out = np.empty_like(window)
        for ch in range(c):
            out[:, ch] = np.interp(grid, src, window[:, ch])
        return out

    raise ConfigError(f"unknown augmentation kind {kind!r}")


def apply_pipeline(
    spec: AugmentSpec, window: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Run the pipeline in order, gating each step by its probability."""
    out = np.asarray(window, dtype=np.float64)
    for step in spec.pipeline:
        gate = rng.random()
        if gate < step.probability:
            out = apply_augmentation(step.kind, step.params, out, rng)
    return out
