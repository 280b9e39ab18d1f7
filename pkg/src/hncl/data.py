"""Windowed multimodal datasets: the on-disk canonical format, a synthetic
two-modality generator, split protocols, and label subsampling.

Canonical directory layout (the cross-tool interchange format):

* ``meta.json``   - UTF-8 JSON: format version, endianness tag, dtype,
  window count, class names, per-modality name/time/channels (optional
  sampling-rate descriptor), and optional sha256 checksums per payload.
* ``<modality>.bin`` - row-major [windows, time, channels] little-endian
  IEEE-754 32-bit floats, one file per modality.
* ``labels.csv``  - header ``window_index,label,subject_id,session_id``,
  one row per window, ordered by window index.

In memory everything is float64; the float32 payload is widened on load and
narrowed on save, so a dataset produced by :func:`generate_synthetic`
round-trips bitwise.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (
    ChecksumError,
    DataError,
    SchemaError,
    ShapeError,
    StratificationError,
    TruncationError,
)
from .numcore import make_rng

FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModalityMeta:
    name: str
    time: int
    channels: int
    sampling_rate_hz: float | None = None


@dataclass(frozen=True)
class DatasetMeta:
    class_names: tuple[str, ...]
    modalities: tuple[ModalityMeta, ...]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)


@dataclass
class CanonicalDataset:
    """Index-aligned windows for one or more modalities plus per-window ids."""

    modalities: dict[str, np.ndarray]  # name -> [windows, time, channels] float64
    labels: np.ndarray                 # int64 [windows]
    subject_ids: np.ndarray            # int64 [windows]
    session_ids: np.ndarray            # int64 [windows]
    meta: DatasetMeta

    @property
    def num_windows(self) -> int:
        return int(self.labels.shape[0])

    def validate(self) -> None:
        w = self.num_windows
        names = [m.name for m in self.meta.modalities]
        if sorted(names) != sorted(self.modalities):
            raise SchemaError(f"meta lists modalities {names}, arrays hold {sorted(self.modalities)}")
        for m in self.meta.modalities:
            arr = self.modalities[m.name]
            if arr.shape != (w, m.time, m.channels):
                raise SchemaError(
                    f"modality {m.name!r} has shape {arr.shape}, meta implies {(w, m.time, m.channels)}"
                )
            if not np.all(np.isfinite(arr)):
                raise SchemaError(f"modality {m.name!r} contains non-finite values")
        for name, ids in (("labels", self.labels), ("subject_ids", self.subject_ids),
                          ("session_ids", self.session_ids)):
            if ids.shape != (w,):
                raise SchemaError(f"{name} has shape {ids.shape}, expected ({w},)")
        if w:
            if self.labels.min() < 0 or self.labels.max() >= self.meta.num_classes:
                raise SchemaError(
                    f"labels must lie in [0, {self.meta.num_classes}), "
                    f"found range [{self.labels.min()}, {self.labels.max()}]"
                )
            if int(self.labels.max()) + 1 != self.meta.num_classes:
                raise SchemaError(
                    f"meta declares {self.meta.num_classes} classes but max label is "
                    f"{int(self.labels.max())}"
                )


@dataclass(frozen=True)
class SynthConfig:
    """Desk-scale synthetic two-modality task.

    Each class owns a latent prototype and a distinct temporal frequency;
    a window draws a latent near its class prototype, both modalities render
    that latent through fixed random channel maps as phase-shifted sinusoids
    plus a class DC offset, and Gaussian noise is added. With probability
    ``corruption_rate`` the second modality re-draws its latent (same class),
    weakening instance-level cross-modal correspondence.
    """

    num_classes: int = 10
    samples_per_class: int = 60
    time_len: int = 64
    channels: tuple[int, int] = (6, 9)
    latent_dim: int = 8
    latent_sigma: float = 0.3
    noise_sigma: float = 0.5
    corruption_rate: float = 0.2
    offset_scale: float = 0.6
    seed: int = 0
    modality_names: tuple[str, str] = ("inertial", "skeleton")
    num_subjects: int = 8
    num_sessions: int = 5

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        if min(self.samples_per_class, self.time_len, self.latent_dim, *self.channels) < 1:
            raise ValueError("all extents must be >= 1")
        if self.noise_sigma < 0 or self.latent_sigma < 0:
            raise ValueError("noise levels must be >= 0")
        if not (0.0 <= self.corruption_rate <= 1.0):
            raise ValueError("corruption_rate must be in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "samples_per_class": self.samples_per_class,
            "time_len": self.time_len,
            "channels": list(self.channels),
            "latent_dim": self.latent_dim,
            "latent_sigma": self.latent_sigma,
            "noise_sigma": self.noise_sigma,
            "corruption_rate": self.corruption_rate,
            "offset_scale": self.offset_scale,
            "seed": self.seed,
            "modality_names": list(self.modality_names),
            "num_subjects": self.num_subjects,
            "num_sessions": self.num_sessions,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        if "channels" in d:
            d["channels"] = tuple(d["channels"])
        if "modality_names" in d:
            d["modality_names"] = tuple(d["modality_names"])
        return cls(**d)


def generate_synthetic(cfg: SynthConfig) -> CanonicalDataset:
    """Render a balanced synthetic dataset; deterministic for a given seed."""
    struct_rng = make_rng(cfg.seed, 0)
    c, t = cfg.num_classes, cfg.time_len
    w = c * cfg.samples_per_class

    prototypes = struct_rng.normal(size=(c, cfg.latent_dim))
    freqs = 1.0 + np.arange(c, dtype=np.float64)
    maps = []
    offsets = []
    phases = []
    for ch in cfg.channels:
        maps.append(struct_rng.normal(size=(ch, cfg.latent_dim)) / np.sqrt(cfg.latent_dim))
        offsets.append(struct_rng.normal(size=(c, ch)) * cfg.offset_scale)
        phases.append(struct_rng.uniform(0.0, 2.0 * np.pi, size=ch))

    grid = np.arange(t, dtype=np.float64) / t
    arrays = [np.empty((w, t, ch)) for ch in cfg.channels]
    labels = np.empty(w, dtype=np.int64)

    idx = 0
    for cls in range(c):
        for _ in range(cfg.samples_per_class):
            rng = make_rng(cfg.seed, 1, idx)
            latent = prototypes[cls] + cfg.latent_sigma * rng.normal(size=cfg.latent_dim)
            corrupted = rng.random() < cfg.corruption_rate
            for m in range(2):
                if m == 1 and corrupted:
                    z = prototypes[cls] + cfg.latent_sigma * rng.normal(size=cfg.latent_dim)
                else:
                    z = latent
                # sign-varying amplitudes: at high noise the class is carried by
                # carrier-frequency energy (nonlinear), not by raw channel means
                amp = maps[m] @ z
                carrier = np.sin(2.0 * np.pi * freqs[cls] * grid[:, None] + phases[m][None, :])
                sig = offsets[m][cls][None, :] + amp[None, :] * carrier
                sig = sig + cfg.noise_sigma * rng.normal(size=sig.shape)
                arrays[m][idx] = sig
            labels[idx] = cls
            idx += 1

    window_idx = np.arange(w)
    subject_ids = (window_idx % cfg.num_subjects) + 1
    session_ids = ((window_idx // cfg.num_subjects) % cfg.num_sessions) + 1

    meta = DatasetMeta(
        class_names=tuple(f"class_{k}" for k in range(c)),
        modalities=tuple(
            ModalityMeta(name=cfg.modality_names[m], time=t, channels=cfg.channels[m])
            for m in range(2)
        ),
    )
    modalities = {
        cfg.modality_names[m]: arrays[m].astype(np.float32).astype(np.float64)
        for m in range(2)
    }
    ds = CanonicalDataset(
        modalities=modalities,
        labels=labels,
        subject_ids=subject_ids.astype(np.int64),
        session_ids=session_ids.astype(np.int64),
        meta=meta,
    )
    ds.validate()
    return ds


# --------------------------------------------------------------------------
# Split protocols
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    protocol: str
    params: dict
    train_indices: np.ndarray
    test_indices: np.ndarray


def make_split(
    ds: CanonicalDataset,
    protocol: str,
    *,
    k: int | None = None,
    fraction: float | None = None,
) -> SplitSpec:
    """Deterministic train/test index split by subject or session ids.

    * ``cross_subject_odd_even``: odd subject ids train, even test.
    * ``cross_subject_first_k``: the k smallest distinct subject ids train.
    * ``cross_session_top_fraction``: per subject, sessions sorted ascending;
      the first ceil(fraction * count) session ids train, the rest test.
    """
    subjects = ds.subject_ids
    sessions = ds.session_ids
    if subjects.size == 0:
        raise SchemaError("dataset has no windows to split")

    if protocol == "cross_subject_odd_even":
        train_mask = subjects % 2 == 1
        params: dict = {}
    elif protocol == "cross_subject_first_k":
        if k is None or k < 1:
            raise ValueError("cross_subject_first_k requires k >= 1")
        distinct = np.unique(subjects)
        train_subjects = set(distinct[:k].tolist())
        train_mask = np.isin(subjects, list(train_subjects))
        params = {"k": int(k)}
    elif protocol == "cross_session_top_fraction":
        if fraction is None or not (0.0 < fraction <= 1.0):
            raise ValueError("cross_session_top_fraction requires fraction in (0, 1]")
        train_mask = np.zeros(subjects.shape, dtype=bool)
        for subj in np.unique(subjects):
            subj_mask = subjects == subj
            subj_sessions = np.unique(sessions[subj_mask])
            n_train = int(np.ceil(fraction * subj_sessions.size))
            train_sessions = set(subj_sessions[:n_train].tolist())
            train_mask |= subj_mask & np.isin(sessions, list(train_sessions))
        params = {"fraction": float(fraction)}
    else:
        raise ValueError(f"unknown split protocol {protocol!r}")

    idx = np.arange(subjects.size)
    return SplitSpec(
        protocol=protocol,
        params=params,
        train_indices=idx[train_mask],
        test_indices=idx[~train_mask],
    )


def stratified_label_subset(
    ds: CanonicalDataset,
    train_split: SplitSpec,
    fraction: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Per-class proportional subsample of the train indices, >= 1 per class."""
    if not (0.0 < fraction <= 1.0):
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    train_idx = train_split.train_indices
    labels = ds.labels[train_idx]
    chosen: list[np.ndarray] = []
    for cls in range(ds.meta.num_classes):
        members = train_idx[labels == cls]
        if members.size == 0:
            raise StratificationError(f"class {cls} has no samples in the train split")
        n = max(1, int(round(fraction * members.size)))
        take = rng.choice(members, size=min(n, members.size), replace=False)
        chosen.append(np.sort(take))
    return np.sort(np.concatenate(chosen))


# --------------------------------------------------------------------------
# Canonical directory IO
# --------------------------------------------------------------------------

def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def save_canonical(ds: CanonicalDataset, path: str | Path) -> None:
    """Write the canonical directory; float64 arrays are narrowed to float32."""
    ds.validate()
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)

    payload_names = {}
    for m in ds.meta.modalities:
        fname = f"{m.name}.bin"
        arr = np.ascontiguousarray(ds.modalities[m.name], dtype="<f4")
        (out / fname).write_bytes(arr.tobytes())
        payload_names[m.name] = fname

    with open(out / "labels.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["window_index", "label", "subject_id", "session_id"])
        for i in range(ds.num_windows):
            writer.writerow(
                [i, int(ds.labels[i]), int(ds.subject_ids[i]), int(ds.session_ids[i])]
            )

    meta = {
        "format_version": FORMAT_VERSION,
        "endianness": "little",
        "dtype": "float32",
        "num_windows": ds.num_windows,
        "class_names": list(ds.meta.class_names),
        "modalities": [
            {
                "name": m.name,
                "file": payload_names[m.name],
                "time": m.time,
                "channels": m.channels,
                "sampling_rate_hz": m.sampling_rate_hz,
            }
            for m in ds.meta.modalities
        ],
        "checksums": {fname: _sha256(out / fname) for fname in payload_names.values()},
    }
    with open(out / "meta.json", "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


def load_canonical(path: str | Path) -> CanonicalDataset:
    """Read a canonical directory, validating schema, sizes, and checksums."""
    root = Path(path)
    meta_path = root / "meta.json"
    if not meta_path.is_file():
        raise DataError(f"{root}: missing meta.json")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{meta_path}: malformed JSON: {exc}") from exc

    for key in ("format_version", "endianness", "dtype", "num_windows", "class_names", "modalities"):
        if key not in meta:
            raise SchemaError(f"{meta_path}: missing required key {key!r}")
    if meta["endianness"] != "little" or meta["dtype"] != "float32":
        raise SchemaError(
            f"{meta_path}: unsupported payload encoding "
            f"({meta['endianness']}, {meta['dtype']})"
        )
    w = int(meta["num_windows"])
    checksums = meta.get("checksums", {})

    modalities: dict[str, np.ndarray] = {}
    modality_meta = []
    for m in meta["modalities"]:
        name, fname = str(m["name"]), str(m["file"])
        t, ch = int(m["time"]), int(m["channels"])
        fpath = root / fname
        if not fpath.is_file():
            raise DataError(f"{root}: missing payload {fname}")
        if fname in checksums and _sha256(fpath) != checksums[fname]:
            raise ChecksumError(f"{fpath}: payload does not match its recorded checksum")
        blob = fpath.read_bytes()
        expected = w * t * ch * 4
        if len(blob) < expected:
            raise TruncationError(
                f"{fpath}: payload has {len(blob)} bytes, shape requires {expected}"
            )
        if len(blob) > expected:
            raise SchemaError(
                f"{fpath}: payload has {len(blob)} bytes, shape requires {expected}"
            )
        arr = np.frombuffer(blob, dtype="<f4").reshape(w, t, ch).astype(np.float64)
        modalities[name] = arr
        modality_meta.append(
            ModalityMeta(
                name=name,
                time=t,
                channels=ch,
                sampling_rate_hz=m.get("sampling_rate_hz"),
            )
        )

    labels_path = root / "labels.csv"
    if not labels_path.is_file():
        raise DataError(f"{root}: missing labels.csv")
    labels = np.empty(w, dtype=np.int64)
    subject_ids = np.empty(w, dtype=np.int64)
    session_ids = np.empty(w, dtype=np.int64)
    with open(labels_path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["window_index", "label", "subject_id", "session_id"]:
            raise SchemaError(f"{labels_path}: unexpected header {header}")
        count = 0
        for row in reader:
            if len(row) != 4:
                raise SchemaError(f"{labels_path}: malformed row {row}")
            i = int(row[0])
            if i != count:
                raise SchemaError(f"{labels_path}: window indices must be 0..N-1 in order")
            if count >= w:
                raise SchemaError(f"{labels_path}: more rows than num_windows={w}")
            labels[i], subject_ids[i], session_ids[i] = int(row[1]), int(row[2]), int(row[3])
            count += 1
        if count != w:
            raise SchemaError(f"{labels_path}: {count} rows but num_windows={w}")

    ds = CanonicalDataset(
        modalities=modalities,
        labels=labels,
        subject_ids=subject_ids,
        session_ids=session_ids,
        meta=DatasetMeta(
            class_names=tuple(str(c) for c in meta["class_names"]),
            modalities=tuple(modality_meta),
        ),
    )
    ds.validate()
    return ds


# --------------------------------------------------------------------------
# Standardization
# --------------------------------------------------------------------------

def standardize_split(
    ds: CanonicalDataset, split: SplitSpec
) -> tuple[CanonicalDataset, dict[str, tuple[np.ndarray, np.ndarray]]]:
    """Per-channel zero-mean unit-variance transform fit on the train split only.

    Applied to every window so train statistics never leak from test data.
    Returns the transformed dataset and the per-modality (mean, std) used.
    """
    if split.train_indices.size == 0:
        raise ShapeError("cannot standardize with an empty train split")
    stats: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    new_modalities: dict[str, np.ndarray] = {}
    for name, arr in ds.modalities.items():
        train = arr[split.train_indices]
        mean = train.mean(axis=(0, 1))
        std = train.std(axis=(0, 1))
        std = np.where(std < 1e-8, 1.0, std)
        stats[name] = (mean, std)
        new_modalities[name] = (arr - mean) / std
    return (
        CanonicalDataset(
            modalities=new_modalities,
            labels=ds.labels,
            subject_ids=ds.subject_ids,
            session_ids=ds.session_ids,
            meta=ds.meta,
        ),
        stats,
    )


def drop_modality(ds: CanonicalDataset, name: str) -> CanonicalDataset:
    """Copy of the dataset without one modality (e.g. sensor-only deployment)."""
    if name not in ds.modalities:
        raise DataError(f"dataset has no modality {name!r}")
    return CanonicalDataset(
        modalities={k: v for k, v in ds.modalities.items() if k != name},
        labels=ds.labels,
        subject_ids=ds.subject_ids,
        session_ids=ds.session_ids,
        meta=replace(
            ds.meta,
            modalities=tuple(m for m in ds.meta.modalities if m.name != name),
        ),
    )
