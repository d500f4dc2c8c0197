"""
Servicio de almacenamiento local de resultados.

Toda salida se escribe de forma atómica: archivo temporal en el mismo
directorio y luego `os.replace`, así un lector nunca ve un archivo a medias
aunque varios workers escriban en paralelo.
"""

import hashlib
import json
import logging
import os
import platform
import tempfile
from pathlib import Path

from emovar.config import get_settings

logger = logging.getLogger(__name__)

RUN_MANIFEST_NAME = "run-manifest.json"


def atomic_write_bytes(path: Path, data: bytes) -> Path:
    """Escribe `data` en `path` vía archivo temporal + rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    logger.debug(f"Escrito {path} ({len(data)} bytes)")
    return path


def atomic_write_text(path: Path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_json(path: Path, payload) -> Path:
    """JSON canónico (claves ordenadas, indentado) con salto de línea final."""
    text = json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False)
    return atomic_write_text(path, text + "\n")


# ── Manifiesto de corrida ────────────────────────────

def sha256_json(payload) -> str:
    """SHA-256 del JSON canónico (claves ordenadas, sin espacios)."""
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def versions() -> dict[str, str]:
    """Versiones de emovar, numpy, scipy y Python."""
    import numpy
    import scipy

    from emovar import __version__

    return {
        "emovar": __version__,
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def write_run_manifest(
    out_dir: Path,
    *,
    command: str,
    fingerprint: str,
    seed: int,
    extra: dict | None = None,
) -> Path:
    """run-manifest.json sin marcas de tiempo: re-ejecutar produce los mismos bytes."""
    settings = get_settings()
    payload = {
        "app": settings.APP_NAME,
        "command": command,
        "config_sha256": fingerprint,
        "seed": seed,
        "versions": versions(),
    }
    if extra:
        payload.update(extra)
    return atomic_write_json(Path(out_dir) / RUN_MANIFEST_NAME, payload)
