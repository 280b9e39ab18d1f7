"""Independent validation of a canonical dataset directory.

Re-checks every invariant from the on-disk format documentation without
importing the training engine, so converter bugs and loader bugs cannot
mask each other: schema keys, payload sizes, checksums, finite values,
label/id alignment, and the class-count contract.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

REQUIRED_META_KEYS = (
    "format_version",
    "endianness",
    "dtype",
    "num_windows",
    "class_names",
    "modalities",
)
LABEL_HEADER = ["window_index", "label", "subject_id", "session_id"]


@dataclass
class VerifyReport:
    path: str
    violations: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"path": self.path, "passed": self.passed, "violations": self.violations}


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def verify(path: str | Path) -> VerifyReport:
    root = Path(path)
    report = VerifyReport(path=str(root))
    bad = report.violations.append

    if not root.is_dir():
        bad(f"not a directory: {root}")
        return report
    meta_path = root / "meta.json"
    if not meta_path.is_file():
        bad("missing meta.json")
        return report
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        bad(f"meta.json is not valid JSON: {exc}")
        return report

    for key in REQUIRED_META_KEYS:
        if key not in meta:
            bad(f"meta.json missing key {key!r}")
    if report.violations:
        return report

    if meta["endianness"] != "little":
        bad(f"unsupported endianness {meta['endianness']!r}")
    if meta["dtype"] != "float32":
        bad(f"unsupported dtype {meta['dtype']!r}")
    num_windows = int(meta["num_windows"])
    num_classes = len(meta["class_names"])
    if num_classes < 1:
        bad("class_names is empty")
    checksums = meta.get("checksums", {})

    for m in meta["modalities"]:
        for key in ("name", "file", "time", "channels"):
            if key not in m:
                bad(f"modality entry missing {key!r}: {m}")
                continue
        fname = m.get("file")
        if not fname:
            continue
        fpath = root / fname
        if not fpath.is_file():
            bad(f"missing payload file {fname}")
            continue
        expected = num_windows * int(m["time"]) * int(m["channels"]) * 4
        actual = fpath.stat().st_size
        if actual != expected:
            bad(f"{fname}: payload is {actual} bytes, shape implies {expected}")
            continue
        if fname in checksums and _sha256(fpath) != checksums[fname]:
            bad(f"{fname}: checksum mismatch")
            continue
        values = np.frombuffer(fpath.read_bytes(), dtype="<f4")
        if not np.all(np.isfinite(values)):
            bad(f"{fname}: payload contains non-finite values")

    labels_path = root / "labels.csv"
    if not labels_path.is_file():
        bad("missing labels.csv")
        return report
    with open(labels_path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != LABEL_HEADER:
            bad(f"labels.csv header is {header}, expected {LABEL_HEADER}")
            return report
        labels = []
        for i, row in enumerate(reader):
            if len(row) != 4:
                bad(f"labels.csv row {i} is malformed: {row}")
                return report
            if int(row[0]) != i:
                bad(f"labels.csv row {i} has window_index {row[0]}; rows must be in order")
                return report
            labels.append(int(row[1]))
    if len(labels) != num_windows:
        bad(f"labels.csv has {len(labels)} rows, meta says num_windows={num_windows}")
    if labels:
        lo, hi = min(labels), max(labels)
        if lo < 0 or hi >= num_classes:
            bad(f"labels outside [0, {num_classes}): range [{lo}, {hi}]")
        elif hi + 1 != num_classes:
            bad(f"meta declares {num_classes} classes but max label is {hi}")
    return report
