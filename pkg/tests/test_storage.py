"""
Tests de escritura atómica, manifiesto de corrida, semillas derivadas y
Settings.
"""

import json

from emovar.config import get_settings
from emovar.core.seeding import derive_seed
from emovar.services.storage_service import (
    RUN_MANIFEST_NAME,
    atomic_write_bytes,
    atomic_write_json,
    sha256_json,
    write_run_manifest,
)


def test_atomic_write_creates_parents_and_leaves_no_temp(tmp_path):
    path = atomic_write_bytes(tmp_path / "a" / "b" / "data.bin", b"\x00\x01")
    assert path.read_bytes() == b"\x00\x01"
    assert [p.name for p in path.parent.iterdir()] == ["data.bin"]


def test_atomic_write_replaces_existing(tmp_path):
    path = tmp_path / "x.txt"
    path.write_text("viejo")
    atomic_write_bytes(path, b"nuevo")
    assert path.read_text() == "nuevo"


def test_json_is_canonical(tmp_path):
    atomic_write_json(tmp_path / "a.json", {"b": 1, "a": [1, 2]})
    atomic_write_json(tmp_path / "b.json", {"a": [1, 2], "b": 1})
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert (tmp_path / "a.json").read_text().endswith("}\n")


def test_sha256_ignores_key_order():
    assert sha256_json({"x": 1, "y": 2}) == sha256_json({"y": 2, "x": 1})
    assert sha256_json({"x": 1}) != sha256_json({"x": 2})


def test_run_manifest_is_reproducible(tmp_path):
    for name in ("a", "b"):
        write_run_manifest(tmp_path / name, command="experiment", fingerprint="f" * 64, seed=3, extra={"reports": ["r"]})
    first = (tmp_path / "a" / RUN_MANIFEST_NAME).read_bytes()
    assert first == (tmp_path / "b" / RUN_MANIFEST_NAME).read_bytes()
    manifest = json.loads(first)
    assert set(manifest["versions"]) == {"emovar", "numpy", "scipy", "python"}
    assert manifest["seed"] == 3
    assert manifest["reports"] == ["r"]


def test_derive_seed_is_stable_and_key_sensitive():
    assert derive_seed(5, "crop", "DE-DE01-sad-000") == derive_seed(5, "crop", "DE-DE01-sad-000")
    assert derive_seed(5, "crop", "a") != derive_seed(5, "crop", "b")
    assert derive_seed(5, "x") != derive_seed(6, "x")
    assert 0 <= derive_seed(123, "k") < 2**63


def test_settings_read_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("EMOVAR_OUT", str(tmp_path))
    monkeypatch.setenv("LOG_LEVEL", "debug")
    get_settings.cache_clear()
    settings = get_settings()
    assert settings.output_override == tmp_path
    assert settings.LOG_LEVEL == "DEBUG"
    assert settings.celery_eager
