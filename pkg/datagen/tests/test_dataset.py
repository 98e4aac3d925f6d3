# datagen/tests/test_dataset.py
from __future__ import annotations

import json

import numpy as np
import pytest

from core.constants import DATASET_FORMAT_VERSION
from core.errors import DatasetHashError, DatasetTruncatedError, DatasetVersionError, MissingDatasetError
from datagen.services.dataset import EPISODES_NAME, MANIFEST_NAME, read_dataset, read_manifest, write_dataset
from datagen.services.generator import summarize_dataset
from datagen.tests.factories import fake_record


@pytest.fixture
def records():
    rng = np.random.default_rng(8)
    return [fake_record(rng, 0, length=3), fake_record(rng, 1, length=5, success=False), fake_record(rng, 2, length=1)]


def test_round_trip_preserves_every_field(tmp_path, records):
    manifest = write_dataset(records, tmp_path, spec={"note": "x"}, extra={"seed": 4})
    assert manifest["count"] == 3 and manifest["successes"] == 2
    assert manifest["format_version"] == DATASET_FORMAT_VERSION
    assert manifest["seed"] == 4

    ds = read_dataset(tmp_path)
    assert len(ds) == 3
    for a, b in zip(records, ds.records):
        assert a.meta == b.meta
        np.testing.assert_array_equal(a.depth, b.depth)
        assert b.depth.dtype == np.float32
        np.testing.assert_array_equal(a.contacts, b.contacts)
        np.testing.assert_array_equal(a.proprio, b.proprio)
        np.testing.assert_array_equal(a.actions, b.actions)


def test_one_line_per_episode(tmp_path, records):
    write_dataset(records, tmp_path)
    lines = (tmp_path / EPISODES_NAME).read_text().splitlines()
    assert len(lines) == 3
    first = json.loads(lines[0])
    assert set(first) == {"meta", "steps"}
    assert set(first["steps"][0]) == {"depth", "contacts", "proprio", "action"}


def test_output_is_byte_identical(tmp_path, records):
    write_dataset(records, tmp_path / "a", spec={"k": 1})
    write_dataset(records, tmp_path / "b", spec={"k": 1})
    for name in (EPISODES_NAME, MANIFEST_NAME):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_output_does_not_depend_on_the_host(tmp_path, records, monkeypatch):
    write_dataset(records, tmp_path / "a", spec={"k": 1})
    monkeypatch.setattr("platform.machine", lambda: "other-arch")
    write_dataset(records, tmp_path / "b", spec={"k": 1})
    assert (tmp_path / "a" / MANIFEST_NAME).read_bytes() == (tmp_path / "b" / MANIFEST_NAME).read_bytes()
    manifest = json.loads((tmp_path / "b" / MANIFEST_NAME).read_text())
    assert manifest["build_id"].startswith("graspforge-")
    assert "other-arch" not in manifest["build_id"]


def test_empty_dataset(tmp_path):
    manifest = write_dataset([], tmp_path)
    assert manifest["count"] == 0
    assert (tmp_path / EPISODES_NAME).read_bytes() == b""
    assert len(read_dataset(tmp_path)) == 0


def test_missing_dataset(tmp_path):
    with pytest.raises(MissingDatasetError):
        read_manifest(tmp_path / "nowhere")


def test_version_mismatch(tmp_path, records):
    write_dataset(records, tmp_path)
    manifest = json.loads((tmp_path / MANIFEST_NAME).read_text())
    manifest["format_version"] = DATASET_FORMAT_VERSION + 1
    (tmp_path / MANIFEST_NAME).write_text(json.dumps(manifest))
    with pytest.raises(DatasetVersionError):
        read_dataset(tmp_path)


def test_tampered_content(tmp_path, records):
    write_dataset(records, tmp_path)
    path = tmp_path / EPISODES_NAME
    path.write_text(path.read_text().replace('"slip":0.002', '"slip":0.003', 1))
    with pytest.raises(DatasetHashError):
        read_dataset(tmp_path)


def test_truncated_content(tmp_path, records):
    write_dataset(records, tmp_path)
    path = tmp_path / EPISODES_NAME
    data = path.read_bytes()
    path.write_bytes(data[: len(data) - 40])
    with pytest.raises(DatasetTruncatedError):
        read_dataset(tmp_path)


def test_missing_line(tmp_path, records):
    write_dataset(records, tmp_path)
    path = tmp_path / EPISODES_NAME
    lines = path.read_text().splitlines(keepends=True)
    path.write_text("".join(lines[:-1]))
    with pytest.raises(DatasetTruncatedError):
        read_dataset(tmp_path)


def test_summary(tmp_path, records):
    write_dataset(records, tmp_path, extra={"attempts": 5, "skipped": 1})
    summary = summarize_dataset(read_dataset(tmp_path))
    assert summary["count"] == 3
    assert summary["successes"] == 2
    assert summary["success_rate"] == pytest.approx(2 / 3)
    assert summary["outcomes"] == {"success": 2, "failure": 1}
    assert summary["mean_length"] == pytest.approx(3.0)
    assert summary["elevation_deg"] == pytest.approx([80.0, 80.0])
    assert summary["distinct_phi"] == 3
    assert summary["attempts"] == 5 and summary["skipped"] == 1
    a1_lo, a1_hi = summary["phi_ranges"]["a1"]
    assert 0.02 <= a1_lo <= a1_hi <= 0.05
