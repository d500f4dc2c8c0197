"""
Servicio de corpus de embeddings.

Lectura y escritura del formato manifiesto JSON-lines + payloads float32,
generación sintética, normalización de largo en frames, combinación de dos
idiomas con balanceo por repetición e inyección de datos del idioma
objetivo.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
from collections.abc import Iterable, Sequence
from dataclasses import replace
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from emovar.core.exceptions import (
    DuplicateIdError,
    EmptyDatasetError,
    InvalidLabelError,
    InvalidSpecError,
    MalformedManifestError,
    NotEnoughTargetDataError,
    PayloadSizeMismatchError,
)
from emovar.core.seeding import derive_seed
from emovar.schemas.corpus import (
    EMOTIONS,
    N_CLASSES,
    Corpus,
    Emotion,
    ManifestEntry,
    SslTensors,
    SynthSpec,
    UtteranceRecord,
    is_safe_record_id,
)
from emovar.services.storage_service import atomic_write_bytes, atomic_write_text

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"
PAYLOAD_DIR = "payload"
# ~2 s de audio con el paso de 20 ms del extractor.
DEFAULT_TARGET_FRAMES = 99
# Tensores SSL sintéticos.
SSL_DIM = 16
SSL_GROUPS = 2
SSL_ENTRIES = 8
SSL_MASK_FRACTION = 0.5


# ── Escritura / lectura ──────────────────────────────

def _payload_bytes(embedding: np.ndarray) -> bytes:
    return np.ascontiguousarray(embedding, dtype="<f4").tobytes(order="C")


def write_corpus(corpus: Corpus | Iterable[UtteranceRecord], out_dir: str | Path) -> Path:
    """
    Escribe manifest.jsonl y payload/<id>.f32 (y <id>.npz si hay tensores
    SSL). Devuelve la ruta del manifiesto.
    """
    out_dir = Path(out_dir)
    records = list(corpus)
    seen: set[str] = set()
    lines = []
    for record in records:
        if not is_safe_record_id(record.id):
            raise MalformedManifestError(
                f"id inválido para nombre de archivo: {record.id!r}", path=str(out_dir), field="id"
            )
        if record.id in seen:
            raise DuplicateIdError(record.id)
        seen.add(record.id)
        rel_path = f"{PAYLOAD_DIR}/{record.id}.f32"
        atomic_write_bytes(out_dir / rel_path, _payload_bytes(record.embedding))
        entry = {
            "id": record.id,
            "language": record.language,
            "corpus": record.corpus_name,
            "speaker": record.speaker,
            "label": record.label.value,
            "path": rel_path,
            "frames": record.frames,
            "dim": record.dim,
        }
        if record.ssl is not None:
            ssl_path = f"{PAYLOAD_DIR}/{record.id}.npz"
            buffer = io.BytesIO()
            np.savez(
                buffer,
                context=record.ssl.context,
                quantized=record.ssl.quantized,
                masked=record.ssl.masked,
                probs=record.ssl.probs,
            )
            atomic_write_bytes(out_dir / ssl_path, buffer.getvalue())
            entry["ssl"] = ssl_path
        lines.append(json.dumps(entry, ensure_ascii=False))

    manifest = out_dir / MANIFEST_NAME
    atomic_write_text(manifest, "\n".join(lines) + ("\n" if lines else ""))
    logger.info(f"Corpus escrito: {len(records)} registros en {out_dir}")
    return manifest


def _manifest_path(path: str | Path) -> Path:
    path = Path(path)
    return path / MANIFEST_NAME if path.is_dir() else path


def _parse_entry(raw: str, line_no: int, manifest: Path) -> ManifestEntry:
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedManifestError(f"JSON inválido ({exc.msg})", line=line_no, path=str(manifest)) from exc
    if not isinstance(data, dict):
        raise MalformedManifestError("se esperaba un objeto JSON", line=line_no, path=str(manifest))
    label = data.get("label")
    if isinstance(label, str) and label not in {e.value for e in Emotion}:
        raise InvalidLabelError(label, path=f"{manifest}:{line_no}", field="label")
    try:
        return ManifestEntry.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        field = ".".join(str(p) for p in first["loc"]) or None
        raise MalformedManifestError(
            f"campo '{field}': {first['msg']}", line=line_no, path=str(manifest), field=field
        ) from exc


def _read_ssl(path: Path, frames: int, line_no: int, manifest: Path) -> SslTensors:
    """Tensores SSL de un enunciado; los pasos enmascarados deben caer en [0, frames)."""

    def malformed(message: str) -> MalformedManifestError:
        return MalformedManifestError(message, line=line_no, path=str(manifest), field="ssl")

    if not path.is_file():
        raise malformed(f"no existe el archivo SSL {path.name}")
    with np.load(path) as data:
        tensors = SslTensors(
            context=np.array(data["context"], dtype=np.float64),
            quantized=np.array(data["quantized"], dtype=np.float64),
            masked=np.array(data["masked"], dtype=np.int64),
            probs=np.array(data["probs"], dtype=np.float64),
        )
    for name in ("context", "quantized"):
        shape = getattr(tensors, name).shape
        if len(shape) != 2 or shape[0] != frames:
            raise malformed(f"{name} con forma {shape}, se esperaban {frames} frames")
    masked = tensors.masked
    if masked.ndim != 1:
        raise malformed(f"masked con forma {masked.shape}, se esperaba un vector")
    if masked.size and (masked.min() < 0 or masked.max() >= frames):
        raise malformed(f"índices enmascarados fuera de [0, {frames})")
    return tensors


def read_corpus(path: str | Path) -> Corpus:
    """
    Lee un corpus a partir del manifiesto (o de su directorio). Las rutas
    de payload son relativas al manifiesto.
    """
    manifest = _manifest_path(path)
    if not manifest.is_file():
        raise FileNotFoundError(f"no existe el manifiesto: {manifest}")
    root = manifest.parent
    records: list[UtteranceRecord] = []
    seen: set[str] = set()
    dims: set[int] = set()

    with open(manifest, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            entry = _parse_entry(raw, line_no, manifest)
            if entry.id in seen:
                raise DuplicateIdError(entry.id, path=f"{manifest}:{line_no}")
            seen.add(entry.id)

            payload = root / entry.path
            if not payload.is_file():
                raise MalformedManifestError(
                    f"no existe el payload {entry.path}", line=line_no, path=str(manifest), field="path"
                )
            expected = entry.frames * entry.dim * 4
            actual = payload.stat().st_size
            if actual != expected:
                raise PayloadSizeMismatchError(
                    f"{entry.path}: {actual} bytes, se esperaban {expected} "
                    f"({entry.frames}×{entry.dim}×4)",
                    path=str(payload),
                )
            embedding = np.fromfile(payload, dtype="<f4").reshape(entry.frames, entry.dim)
            dims.add(entry.dim)
            if len(dims) > 1:
                raise MalformedManifestError(
                    f"dimensión {entry.dim} distinta del resto del corpus",
                    line=line_no,
                    path=str(manifest),
                    field="dim",
                )
            ssl = _read_ssl(root / entry.ssl, entry.frames, line_no, manifest) if entry.ssl else None
            records.append(
                UtteranceRecord(
                    id=entry.id,
                    language=entry.language,
                    corpus_name=entry.corpus,
                    speaker=entry.speaker,
                    label=entry.label,
                    embedding=embedding.astype(np.float32, copy=False),
                    ssl=ssl,
                )
            )
    logger.info(f"Corpus leído: {len(records)} registros desde {manifest}")
    return Corpus(tuple(records))


# ── Normalización de frames ──────────────────────────

def normalize_frames(
    record: UtteranceRecord,
    target_frames: int = DEFAULT_TARGET_FRAMES,
    seed: int = 0,
) -> UtteranceRecord:
    """
    Recorta en una ventana aleatoria (semilla por enunciado) las secuencias
    largas y rellena con ceros al final las cortas.
    """
    if target_frames < 1:
        raise ValueError(f"target_frames={target_frames} debe ser >= 1")
    frames = record.frames
    if frames == target_frames:
        return record
    if frames > target_frames:
        rng = np.random.default_rng(derive_seed(seed, "crop", record.id))
        start = int(rng.integers(0, frames - target_frames + 1))
        embedding = record.embedding[start : start + target_frames]
    else:
        padding = np.zeros((target_frames - frames, record.dim), dtype=record.embedding.dtype)
        embedding = np.concatenate([record.embedding, padding])
    return replace(record, embedding=embedding)


# ── Generador sintético ──────────────────────────────

def _class_means(spec: SynthSpec) -> np.ndarray:
    if spec.class_means is not None:
        return np.asarray(spec.class_means, dtype=np.float64)
    rng = np.random.default_rng(derive_seed(spec.seed, "class-means"))
    return rng.normal(0.0, spec.class_scale, size=(N_CLASSES, spec.dim))


def _offset(spec: SynthSpec, scale: float, *keys) -> np.ndarray:
    if scale == 0.0:
        return np.zeros(spec.dim)
    rng = np.random.default_rng(derive_seed(spec.seed, *keys))
    return rng.normal(0.0, scale, size=spec.dim)


def _synth_ssl(frames: int, seed: int) -> SslTensors:
    """Contexto, cuantizados correlacionados y distribuciones de codebook."""
    rng = np.random.default_rng(seed)
    quantized = rng.normal(size=(frames, SSL_DIM))
    context = quantized + 0.5 * rng.normal(size=(frames, SSL_DIM))
    n_masked = max(2, int(round(frames * SSL_MASK_FRACTION)))
    masked = np.sort(rng.choice(frames, size=min(n_masked, frames), replace=False))
    probs = rng.dirichlet(np.ones(SSL_ENTRIES), size=SSL_GROUPS)
    return SslTensors(context=context, quantized=quantized, masked=masked, probs=probs)


def synthesize_corpus(spec: SynthSpec | dict) -> Corpus:
    """
    Frame t de un enunciado (idioma l, hablante s, clase c):
    μ_c + λ_l + σ_s + canal_s + ruido_t.

    Cada componente sale de una sub-semilla derivada de (seed, clave), por
    lo que el orden de generación no importa.
    """
    if isinstance(spec, dict):
        try:
            spec = SynthSpec.model_validate(spec)
        except ValidationError as exc:
            first = exc.errors()[0]
            raise InvalidSpecError(
                first["msg"], field=".".join(str(p) for p in first["loc"]) or None
            ) from exc
    if spec.with_ssl and spec.frames_min < 2:
        raise InvalidSpecError("with_ssl requiere frames_min >= 2", field="frames_min")

    means = _class_means(spec)
    records = []
    for language, n_speakers in spec.languages.items():
        corpus_name = spec.corpus_name(language)
        lang_offset = _offset(spec, spec.language_scale, "language", language)
        n_utts = spec.utterances_for(language)
        for k in range(1, n_speakers + 1):
            speaker = f"{language}{k:02d}"
            speaker_offset = _offset(spec, spec.speaker_scale, "speaker", speaker)
            channel_offset = _offset(spec, spec.channel_scale, "channel", speaker)
            for emotion in EMOTIONS:
                base = means[emotion.class_index] + lang_offset + speaker_offset + channel_offset
                for j in range(n_utts):
                    utt_id = f"{language}-{speaker}-{emotion.value}-{j:03d}"
                    rng = np.random.default_rng(derive_seed(spec.seed, "utt", utt_id))
                    frames = int(rng.integers(spec.frames_min, spec.frames_max + 1))
                    noise = rng.normal(0.0, 1.0, size=(frames, spec.dim)) * spec.noise_scale
                    embedding = (base + noise).astype(np.float32)
                    ssl = None
                    if spec.with_ssl:
                        ssl = _synth_ssl(frames, derive_seed(spec.seed, "ssl", utt_id))
                    records.append(
                        UtteranceRecord(
                            id=utt_id,
                            language=language,
                            corpus_name=corpus_name,
                            speaker=speaker,
                            label=emotion,
                            embedding=embedding,
                            ssl=ssl,
                        )
                    )
    logger.info(
        f"Corpus sintético: {len(records)} enunciados, d_z={spec.dim}, "
        f"idiomas={','.join(spec.languages)}"
    )
    return Corpus(tuple(records))


def nearest_mean_accuracy(train: Sequence[UtteranceRecord], test: Sequence[UtteranceRecord]) -> float:
    """
    Oráculo de media de clase más cercana sobre las medias temporales.
    Calibra los presets sintéticos.
    """
    if not train or not test:
        raise EmptyDatasetError("el oráculo necesita train y test no vacíos")
    train_x = np.stack([r.embedding.mean(axis=0, dtype=np.float64) for r in train])
    train_y = np.array([r.label_index for r in train])
    present = np.unique(train_y)
    centroids = np.stack([train_x[train_y == c].mean(axis=0) for c in present])
    test_x = np.stack([r.embedding.mean(axis=0, dtype=np.float64) for r in test])
    test_y = np.array([r.label_index for r in test])
    distances = ((test_x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    predicted = present[np.argmin(distances, axis=1)]
    return float(np.mean(predicted == test_y))


# ── Combinación y balanceo ───────────────────────────

def repetition_factor(n_large: int, n_small: int) -> int:
    """round(N_grande / N_chico) con redondeo half-up, mínimo 1."""
    if n_small <= 0:
        raise EmptyDatasetError("no se puede balancear contra un conjunto vacío")
    return max(1, int(np.floor(n_large / n_small + 0.5)))


def _repeat(records: Sequence[UtteranceRecord], times: int) -> list[UtteranceRecord]:
    """Repite referencias (no bytes) con instance_id distinto por copia."""
    out = list(records)
    for k in range(1, times):
        out.extend(replace(r, instance_id=f"{r.instance_id}#rep{k}") for r in records)
    return out


def balance_merge(
    corpus_a: Sequence[UtteranceRecord],
    corpus_b: Sequence[UtteranceRecord],
) -> list[UtteranceRecord]:
    """Repite el conjunto más chico r = round(N_grande/N_chico) veces y concatena."""
    a, b = list(corpus_a), list(corpus_b)
    if not a or not b:
        raise EmptyDatasetError("balance_merge necesita dos conjuntos no vacíos")
    if len(a) >= len(b):
        factor = repetition_factor(len(a), len(b))
        merged = a + _repeat(b, factor)
    else:
        factor = repetition_factor(len(b), len(a))
        merged = _repeat(a, factor) + b
    logger.debug(f"balance_merge: {len(a)} + {len(b)}, factor {factor}, total {len(merged)}")
    return merged


def inject_target(
    train: Sequence[UtteranceRecord],
    target_pool: Sequence[UtteranceRecord],
    n_utts: int,
    seed: int,
    *,
    excluded_speakers: Iterable[str] = (),
) -> list[UtteranceRecord]:
    """
    Agrega n_utts enunciados del idioma objetivo, muestreados solo de sus
    hablantes de entrenamiento y repetidos hasta aproximar el tamaño del
    conjunto de entrenamiento actual.
    """
    train = list(train)
    if n_utts == 0:
        return train
    excluded = set(excluded_speakers)
    pool = sorted(
        (r for r in target_pool if r.speaker not in excluded),
        key=lambda r: r.instance_id,
    )
    if n_utts > len(pool):
        raise NotEnoughTargetDataError(n_utts, len(pool))
    rng = np.random.default_rng(derive_seed(seed, "inject", n_utts))
    picks = rng.choice(len(pool), size=n_utts, replace=False)
    sampled = [
        replace(pool[i], instance_id=f"{pool[i].instance_id}#inj") for i in sorted(picks)
    ]
    factor = repetition_factor(len(train), n_utts) if train else 1
    logger.debug(f"Inyección: {n_utts} enunciados objetivo, factor {factor}")
    return train + _repeat(sampled, factor)


# ── Utilidades ───────────────────────────────────────

def corpora_digest(corpora) -> str:
    """sha256 del contenido de los corpus por idioma (metadatos, embeddings y tensores SSL)."""
    digest = hashlib.sha256()
    for language in sorted(corpora):
        digest.update(language.encode())
        for record in corpora[language]:
            meta = [record.id, record.language, record.corpus_name, record.speaker, record.label.value]
            digest.update(json.dumps(meta).encode())
            digest.update(repr(record.embedding.shape).encode())
            digest.update(_payload_bytes(record.embedding))
            if record.ssl is not None:
                for name in ("context", "quantized", "masked", "probs"):
                    digest.update(np.ascontiguousarray(getattr(record.ssl, name)).tobytes())
    return digest.hexdigest()


def split_by_language(corpus: Iterable[UtteranceRecord]) -> dict[str, Corpus]:
    grouped: dict[str, list[UtteranceRecord]] = {}
    for record in corpus:
        grouped.setdefault(record.language, []).append(record)
    return {lang: Corpus(tuple(recs)) for lang, recs in sorted(grouped.items())}


def merge_corpora(corpora: Iterable[Corpus]) -> Corpus:
    records: list[UtteranceRecord] = []
    seen: set[str] = set()
    for corpus in corpora:
        for record in corpus:
            if record.id in seen:
                raise DuplicateIdError(record.id)
            seen.add(record.id)
            records.append(record)
    return Corpus(tuple(records))


def resolve_synth_spec(source: SynthSpec | str, base_dir: Path | None = None) -> SynthSpec:
    """Una SynthSpec, el nombre de un preset o la ruta a un JSON."""
    if isinstance(source, SynthSpec):
        return source
    path = Path(source)
    if base_dir is not None and not path.is_absolute():
        path = base_dir / path
    if path.suffix == ".json" or path.is_file():
        if not path.is_file():
            raise FileNotFoundError(f"no existe la SynthSpec: {path}")
        try:
            return SynthSpec.model_validate_json(path.read_text(encoding="utf-8"))
        except ValidationError as exc:
            first = exc.errors()[0]
            raise InvalidSpecError(
                first["msg"], path=str(path), field=".".join(str(p) for p in first["loc"]) or None
            ) from exc
    try:
        return SynthSpec.preset(str(source))
    except ValueError as exc:
        raise InvalidSpecError(str(exc)) from exc


def load_corpora(config, base_dir: Path | None = None) -> dict[str, Corpus]:
    """Corpus por idioma a partir de `corpus_paths` o `synth_spec` de un ExperimentConfig."""
    if config.synth_spec is not None:
        corpus = synthesize_corpus(resolve_synth_spec(config.synth_spec, base_dir))
    else:
        parts = []
        for raw in config.corpus_paths:
            path = Path(raw)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            parts.append(read_corpus(path))
        corpus = merge_corpora(parts)
    return split_by_language(corpus)
