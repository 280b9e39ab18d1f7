"""Convert source archives into the canonical dataset directory.

The canonical format (shared with the training engine, but written here from
scratch so the two implementations check each other):

* meta.json    - format_version, endianness ("little"), dtype ("float32"),
  num_windows, class_names, modalities [{name, file, time, channels,
  sampling_rate_hz}], checksums {file: sha256-hex}
* <name>.bin   - row-major [windows, time, channels] little-endian float32
* labels.csv   - window_index,label,subject_id,session_id rows in order

Trials missing any modality, or whose files fail to parse, are dropped and
itemized in the conversion report; nothing is skipped silently.
"""

from __future__ import annotations

import csv
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import loadmat

from .manifest import SourceManifest

FORMAT_VERSION = 1


class ConversionError(Exception):
    """The archive cannot be converted at all (nothing usable found)."""


@dataclass
class ConversionReport:
    dataset: str
    source_root: str
    samples_kept: int = 0
    dropped: list[dict] = field(default_factory=list)
    unparseable_files: list[dict] = field(default_factory=list)
    per_class_counts: dict[str, int] = field(default_factory=dict)
    checksums: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "source_root": self.source_root,
            "samples_kept": self.samples_kept,
            "samples_dropped": len(self.dropped),
            "dropped": self.dropped,
            "unparseable_files": self.unparseable_files,
            "per_class_counts": self.per_class_counts,
            "checksums": self.checksums,
        }


# --------------------------------------------------------------------------
# Per-format trial loaders -> float array [frames, channels]
# --------------------------------------------------------------------------

def _load_utd_mat(path: Path, key: str) -> np.ndarray:
    data = loadmat(path)
    if key not in data:
        raise ValueError(f"missing variable {key!r}")
    return np.asarray(data[key], dtype=np.float64)


def load_utd_mat_inertial(path: Path) -> np.ndarray:
    arr = _load_utd_mat(path, "d_iner")
    if arr.ndim != 2 or arr.shape[1] != 6:
        raise ValueError(f"d_iner should be [frames, 6], got {arr.shape}")
    return arr


def load_utd_mat_skeleton(path: Path) -> np.ndarray:
    arr = _load_utd_mat(path, "d_skel")  # [20 joints, 3, frames]
    if arr.ndim != 3 or arr.shape[0] != 20 or arr.shape[1] != 3:
        raise ValueError(f"d_skel should be [20, 3, frames], got {arr.shape}")
    return arr.transpose(2, 0, 1).reshape(arr.shape[2], 60)


def load_csv_channels(path: Path) -> np.ndarray:
    rows = []
    with open(path, newline="") as f:
        for row in csv.reader(f):
            if not row:
                continue
            rows.append([float(v) for v in row])
    arr = np.asarray(rows, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise ValueError(f"csv should hold at least 2 rows of channels, got shape {arr.shape}")
    if arr.shape[1] == 4:  # leading timestamp column
        arr = arr[:, 1:]
    return arr


def load_npy_keypoints(path: Path) -> np.ndarray:
    arr = np.load(path)
    if arr.ndim == 3:  # [frames, joints, dims]
        arr = arr.reshape(arr.shape[0], -1)
    if arr.ndim != 2:
        raise ValueError(f"keypoints should be [frames, features], got shape {arr.shape}")
    return np.asarray(arr, dtype=np.float64)


LOADERS = {
    "utd_mat_inertial": load_utd_mat_inertial,
    "utd_mat_skeleton": load_utd_mat_skeleton,
    "csv_channels": load_csv_channels,
    "npy_keypoints": load_npy_keypoints,
}


# --------------------------------------------------------------------------
# Discovery and windowing
# --------------------------------------------------------------------------

def discover(manifest: SourceManifest, src_root: Path, report: ConversionReport):
    """Map (action, subject, session) -> file path per modality; files whose
    names do not parse are reported, never silently ignored."""
    found: dict[str, dict[tuple, Path]] = {}
    for rule in manifest.modalities:
        regex = re.compile(rule.filename_regex)
        trials: dict[tuple, Path] = {}
        for path in sorted(src_root.glob(rule.pattern)):
            match = regex.search(path.as_posix())
            if not match:
                report.unparseable_files.append(
                    {"file": str(path), "reason": "filename does not match the manifest rule"}
                )
                continue
            action = match.group("action")
            key = (
                int(action) if action.isdigit() else action,  # numeric ids sort numerically
                int(match.group("subject")),
                int(match.group("session")),
            )
            trials[key] = path
        found[rule.name] = trials
    return found


def _resample(arr: np.ndarray, length: int) -> np.ndarray:
    src = np.linspace(0.0, 1.0, arr.shape[0])
    dst = np.linspace(0.0, 1.0, length)
    out = np.empty((length, arr.shape[1]))
    for ch in range(arr.shape[1]):
        out[:, ch] = np.interp(dst, src, arr[:, ch])
    return out


def _windows(arr: np.ndarray, manifest: SourceManifest) -> np.ndarray:
    """[frames, channels] -> [k, window_len, channels] per the window scheme."""
    t = manifest.window_len
    if manifest.window_mode == "resample":
        return _resample(arr, t)[None]
    if arr.shape[0] < t:
        return _resample(arr, t)[None]  # short trial: stretch rather than pad
    stride = max(1, int(round(t * (1.0 - manifest.overlap))))
    starts = list(range(0, arr.shape[0] - t + 1, stride))
    return np.stack([arr[s : s + t] for s in starts])


# --------------------------------------------------------------------------
# Canonical writer (independent of the training engine)
# --------------------------------------------------------------------------

def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_canonical(
    out_dir: Path,
    modality_windows: dict[str, np.ndarray],
    labels: np.ndarray,
    subjects: np.ndarray,
    sessions: np.ndarray,
    class_names: list[str],
) -> dict[str, str]:
    out_dir.mkdir(parents=True, exist_ok=True)
    num_windows = labels.shape[0]

    modalities_meta = []
    for name in modality_windows:
        arr = np.ascontiguousarray(modality_windows[name], dtype="<f4")
        fname = f"{name}.bin"
        (out_dir / fname).write_bytes(arr.tobytes())
        modalities_meta.append(
            {
                "name": name,
                "file": fname,
                "time": int(arr.shape[1]),
                "channels": int(arr.shape[2]),
                "sampling_rate_hz": None,
            }
        )

    with open(out_dir / "labels.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["window_index", "label", "subject_id", "session_id"])
        for i in range(num_windows):
            writer.writerow([i, int(labels[i]), int(subjects[i]), int(sessions[i])])

    checksums = {m["file"]: _sha256(out_dir / m["file"]) for m in modalities_meta}
    meta = {
        "format_version": FORMAT_VERSION,
        "endianness": "little",
        "dtype": "float32",
        "num_windows": int(num_windows),
        "class_names": class_names,
        "modalities": modalities_meta,
        "checksums": checksums,
    }
    with open(out_dir / "meta.json", "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    return checksums


# --------------------------------------------------------------------------
# Conversion driver
# --------------------------------------------------------------------------

def convert(manifest: SourceManifest, src_root: str | Path, out_dir: str | Path) -> ConversionReport:
    src_root = Path(src_root)
    out_dir = Path(out_dir)
    if not src_root.is_dir():
        raise ConversionError(f"source root not found: {src_root}")

    report = ConversionReport(dataset=manifest.dataset, source_root=str(src_root))
    found = discover(manifest, src_root, report)
    mod_names = [rule.name for rule in manifest.modalities]
    loaders = {rule.name: LOADERS[rule.loader] for rule in manifest.modalities}

    all_keys = sorted(set().union(*[set(found[m]) for m in mod_names]))
    if not all_keys:
        raise ConversionError(f"{src_root}: no trials discovered for {manifest.dataset}")

    per_mod_windows: dict[str, list[np.ndarray]] = {m: [] for m in mod_names}
    labels, subjects, sessions = [], [], []
    for key in all_keys:
        missing = [m for m in mod_names if key not in found[m]]
        if missing:
            report.dropped.append(
                {"trial": list(key), "reason": f"missing modality {missing[0]!r}"}
            )
            continue
        arrays = {}
        failed = False
        for m in mod_names:
            try:
                arrays[m] = loaders[m](found[m][key])
            except Exception as exc:
                report.dropped.append(
                    {"trial": list(key), "reason": f"{m}: parse error: {exc}"}
                )
                failed = True
                break
        if failed:
            continue
        windowed = {m: _windows(arrays[m], manifest) for m in mod_names}
        k = min(w.shape[0] for w in windowed.values())
        action, subject, session = key
        for j in range(k):
            for m in mod_names:
                per_mod_windows[m].append(windowed[m][j])
            labels.append(action)
            subjects.append(subject)
            sessions.append(session)
        report.samples_kept += 1

    if not labels:
        raise ConversionError(
            f"{src_root}: every discovered trial was dropped "
            f"({len(report.dropped)} drops); see the conversion report"
        )

    # compact observed action ids into dense labels
    observed = sorted(set(labels))
    class_names = []
    for action in observed:
        try:
            class_names.append(manifest.action_names.get(int(action), f"a{action}"))
        except (TypeError, ValueError):
            class_names.append(str(action))
    remap = {action: i for i, action in enumerate(observed)}
    dense = np.array([remap[a] for a in labels], dtype=np.int64)

    modality_windows = {m: np.stack(per_mod_windows[m]) for m in mod_names}
    report.checksums = _write_canonical(
        out_dir,
        modality_windows,
        dense,
        np.array(subjects, dtype=np.int64),
        np.array(sessions, dtype=np.int64),
        class_names,
    )
    counts = np.bincount(dense, minlength=len(class_names))
    report.per_class_counts = {class_names[i]: int(counts[i]) for i in range(len(class_names))}

    with open(out_dir / "conversion_report.json", "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    return report
