import json
from pathlib import Path

import numpy as np

from hncl_prep.convert import convert
from hncl_prep.manifest import utd_mhad_manifest
from hncl_prep.verify import verify

from test_convert import make_utd_fixture


def fresh_canonical(tmp_path) -> Path:
    src = make_utd_fixture(tmp_path / "src")
    out = tmp_path / "canonical"
    convert(utd_mhad_manifest(window_len=32), src, out)
    return out


class TestVerify:
    def test_fresh_conversion_passes(self, tmp_path):
        assert verify(fresh_canonical(tmp_path)).passed

    def test_missing_directory_fails(self, tmp_path):
        report = verify(tmp_path / "missing")
        assert not report.passed

    def test_deleted_labels_row_fails(self, tmp_path):
        out = fresh_canonical(tmp_path)
        lines = (out / "labels.csv").read_text().splitlines()
        (out / "labels.csv").write_text("\n".join(lines[:-1]) + "\n")
        report = verify(out)
        assert not report.passed
        assert any("num_windows" in v for v in report.violations)

    def test_byte_flip_fails_checksum(self, tmp_path):
        out = fresh_canonical(tmp_path)
        payload = out / "inertial.bin"
        blob = bytearray(payload.read_bytes())
        blob[7] ^= 0xFF
        payload.write_bytes(bytes(blob))
        report = verify(out)
        assert not report.passed
        assert any("checksum" in v for v in report.violations)

    def test_wrong_payload_size_fails(self, tmp_path):
        out = fresh_canonical(tmp_path)
        meta = json.loads((out / "meta.json").read_text())
        del meta["checksums"]  # reach the size check directly
        (out / "meta.json").write_text(json.dumps(meta))
        payload = out / "inertial.bin"
        payload.write_bytes(payload.read_bytes()[:-4])
        report = verify(out)
        assert not report.passed
        assert any("bytes" in v for v in report.violations)

    def test_class_count_mismatch_fails(self, tmp_path):
        out = fresh_canonical(tmp_path)
        meta = json.loads((out / "meta.json").read_text())
        meta["class_names"].append("ghost")
        (out / "meta.json").write_text(json.dumps(meta))
        report = verify(out)
        assert not report.passed
        assert any("max label" in v for v in report.violations)

    def test_non_finite_payload_fails(self, tmp_path):
        out = fresh_canonical(tmp_path)
        meta = json.loads((out / "meta.json").read_text())
        del meta["checksums"]
        (out / "meta.json").write_text(json.dumps(meta))
        payload = out / "inertial.bin"
        arr = np.frombuffer(payload.read_bytes(), dtype="<f4").copy()
        arr[3] = np.nan
        payload.write_bytes(arr.tobytes())
        report = verify(out)
        assert not report.passed
        assert any("non-finite" in v for v in report.violations)
