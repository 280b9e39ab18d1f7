import json
import os
from pathlib import Path

import numpy as np
import pytest
from scipy.io import savemat

from hncl_prep.convert import ConversionError, convert
from hncl_prep.manifest import mmact_manifest, utd_mhad_manifest
from hncl_prep.verify import verify


def make_utd_fixture(root: Path, trials=((1, 1, 1), (2, 1, 1)), frames=97):
    """Tiny fake UTD-MHAD tree: (action, subject, trial) tuples."""
    (root / "Inertial").mkdir(parents=True, exist_ok=True)
    (root / "Skeleton").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(0)
    for a, s, t in trials:
        savemat(
            root / "Inertial" / f"a{a}_s{s}_t{t}_inertial.mat",
            {"d_iner": rng.normal(size=(frames, 6))},
        )
        savemat(
            root / "Skeleton" / f"a{a}_s{s}_t{t}_skeleton.mat",
            {"d_skel": rng.normal(size=(20, 3, frames + 11))},
        )
    return root


def make_mmact_fixture(root: Path):
    rng = np.random.default_rng(1)
    for subject, session, action in ((1, 1, "walking"), (1, 2, "jumping"), (2, 1, "walking")):
        acc = root / "acc_phone_clip" / f"subject{subject}" / "scene1" / f"session{session}"
        kp = root / "keypoints" / f"subject{subject}" / "scene1" / f"session{session}"
        acc.mkdir(parents=True, exist_ok=True)
        kp.mkdir(parents=True, exist_ok=True)
        frames = int(rng.integers(80, 140))
        rows = np.column_stack([np.arange(frames), rng.normal(size=(frames, 3))])
        np.savetxt(acc / f"{action}.csv", rows, delimiter=",")
        np.save(kp / f"{action}.npy", rng.normal(size=(frames // 2, 17, 2)))
    return root


class TestUtdConversion:
    def test_fixture_round_trip_through_primary_loader(self, tmp_path):
        src = make_utd_fixture(tmp_path / "src")
        out = tmp_path / "canonical"
        report = convert(utd_mhad_manifest(window_len=32), src, out)
        assert report.samples_kept == 2
        assert not report.dropped

        # independent verification passes
        assert verify(out).passed

        # the training engine ingests it with zero errors and the same bytes
        from hncl.data import load_canonical

        ds = load_canonical(out)
        assert ds.num_windows == 2
        assert sorted(ds.modalities) == ["inertial", "skeleton"]
        assert ds.modalities["inertial"].shape == (2, 32, 6)
        assert ds.modalities["skeleton"].shape == (2, 32, 60)
        meta = json.loads((out / "meta.json").read_text())
        assert meta["checksums"] == report.checksums

    def test_missing_modality_is_dropped_and_reported(self, tmp_path):
        src = make_utd_fixture(tmp_path / "src", trials=((1, 1, 1), (2, 1, 1), (3, 1, 1)))
        (src / "Skeleton" / "a3_s1_t1_skeleton.mat").unlink()
        out = tmp_path / "canonical"
        report = convert(utd_mhad_manifest(window_len=32), src, out)
        assert report.samples_kept == 2
        assert len(report.dropped) == 1
        assert report.dropped[0]["trial"] == [3, 1, 1]
        assert "missing modality" in report.dropped[0]["reason"]

    def test_corrupt_source_file_is_itemized(self, tmp_path):
        src = make_utd_fixture(tmp_path / "src")
        (src / "Inertial" / "a1_s1_t1_inertial.mat").write_bytes(b"not a mat file")
        report = convert(utd_mhad_manifest(window_len=32), src, tmp_path / "c")
        assert report.samples_kept == 1
        assert any("parse error" in d["reason"] for d in report.dropped)

    def test_unparseable_filename_is_reported(self, tmp_path):
        src = make_utd_fixture(tmp_path / "src")
        savemat(src / "Inertial" / "weird_name.mat", {"d_iner": np.zeros((10, 6))})
        report = convert(utd_mhad_manifest(window_len=32), src, tmp_path / "c")
        assert any("weird_name" in u["file"] for u in report.unparseable_files)

    def test_empty_archive_raises(self, tmp_path):
        (tmp_path / "src").mkdir()
        with pytest.raises(ConversionError):
            convert(utd_mhad_manifest(), tmp_path / "src", tmp_path / "c")

    def test_conversion_is_deterministic(self, tmp_path):
        src = make_utd_fixture(tmp_path / "src")
        r1 = convert(utd_mhad_manifest(window_len=32), src, tmp_path / "c1")
        r2 = convert(utd_mhad_manifest(window_len=32), src, tmp_path / "c2")
        assert r1.checksums == r2.checksums

    def test_labels_are_compacted_to_observed_classes(self, tmp_path):
        src = make_utd_fixture(tmp_path / "src", trials=((5, 1, 1), (20, 1, 1)))
        out = tmp_path / "c"
        convert(utd_mhad_manifest(window_len=32), src, out)
        meta = json.loads((out / "meta.json").read_text())
        assert meta["class_names"] == ["throw", "catch"]


class TestMmactConversion:
    def test_fixture_round_trip(self, tmp_path):
        src = make_mmact_fixture(tmp_path / "src")
        out = tmp_path / "canonical"
        report = convert(mmact_manifest(window_len=32, window_mode="resample"), src, out)
        assert report.samples_kept == 3
        assert verify(out).passed

        from hncl.data import load_canonical

        ds = load_canonical(out)
        assert ds.modalities["inertial"].shape[2] == 3
        assert ds.modalities["skeleton"].shape[2] == 34
        assert set(ds.meta.class_names) == {"walking", "jumping"}

    def test_sliding_windows_align_modalities(self, tmp_path):
        src = make_mmact_fixture(tmp_path / "src")
        out = tmp_path / "canonical"
        convert(mmact_manifest(window_len=16, window_mode="sliding", overlap=0.5), src, out)
        from hncl.data import load_canonical

        ds = load_canonical(out)
        assert ds.num_windows >= 3
        assert ds.modalities["inertial"].shape[0] == ds.modalities["skeleton"].shape[0]


@pytest.mark.skipif(
    not os.environ.get("UTD_MHAD_ROOT"),
    reason="set UTD_MHAD_ROOT to the extracted public archive to run",
)
class TestRealArchive:
    def test_full_archive_has_27_classes(self, tmp_path):
        out = tmp_path / "utd"
        report = convert(utd_mhad_manifest(), os.environ["UTD_MHAD_ROOT"], out)
        meta = json.loads((out / "meta.json").read_text())
        assert len(meta["class_names"]) == 27
        assert verify(out).passed
        # 8 subjects x 4 trials per action, with a handful of known-corrupt
        # trials absent from the public release
        assert report.samples_kept >= 860
