"""
Schemas del corpus de embeddings: catálogo de emociones, líneas del
manifiesto, registros en memoria, especificación del generador sintético
y plan de folds por hablante.
"""

from __future__ import annotations

from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from enum import Enum
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


# ── Catálogo de emociones ────────────────────────────

class Emotion(str, Enum):
    """Las 4 emociones compartidas por los corpus."""
    ANGRY = "angry"
    HAPPY = "happy"
    NEUTRAL = "neutral"
    SAD = "sad"

    @property
    def class_index(self) -> int:
        return EMOTIONS.index(self)

    @classmethod
    def from_index(cls, index: int) -> "Emotion":
        return EMOTIONS[index]


EMOTIONS: tuple[Emotion, ...] = tuple(Emotion)
N_CLASSES = len(EMOTIONS)


# ── Manifiesto ───────────────────────────────────────

def is_safe_record_id(value: str) -> bool:
    """El id nombra archivos en payload/: sin separadores, sin NUL y sin empezar con punto."""
    return bool(value) and not value.startswith(".") and not any(c in value for c in "/\\\0")


class ManifestEntry(BaseModel):
    """Una línea del manifiesto JSON-lines."""
    model_config = ConfigDict(extra="ignore")

    id: str = Field(..., min_length=1)
    language: str = Field(..., min_length=1)
    corpus: str = Field(..., min_length=1)
    speaker: str = Field(..., min_length=1)
    label: Emotion
    path: str = Field(..., min_length=1, description="Ruta relativa al manifiesto")
    frames: int = Field(..., ge=1)
    dim: int = Field(..., ge=1)
    ssl: str | None = Field(None, description="Archivo .npz opcional con tensores SSL")

    @field_validator("id")
    @classmethod
    def _safe_id(cls, value: str) -> str:
        if not is_safe_record_id(value):
            raise ValueError(f"id inválido para nombre de archivo: {value!r}")
        return value


# ── Registros en memoria ─────────────────────────────

@dataclass(frozen=True, eq=False)
class SslTensors:
    """Tensores SSL de un enunciado: contexto, cuantizados, pasos enmascarados, codebooks."""
    context: np.ndarray      # (T, d)
    quantized: np.ndarray    # (T, d)
    masked: np.ndarray       # (M,) índices de tiempo
    probs: np.ndarray        # (G, V)


@dataclass(frozen=True, eq=False)
class UtteranceRecord:
    """
    Un enunciado: secuencia de embeddings más etiqueta, hablante, idioma y
    corpus. `instance_id` distingue las repeticiones del mismo enunciado;
    las repeticiones comparten el arreglo `embedding`.
    """
    id: str
    language: str
    corpus_name: str
    speaker: str
    label: Emotion
    embedding: np.ndarray    # (T, d_z), float32
    instance_id: str = ""
    ssl: SslTensors | None = None

    def __post_init__(self):
        if self.embedding.ndim != 2 or self.embedding.shape[0] < 1:
            raise ValueError(
                f"{self.id}: embedding debe ser (T>=1, d_z), forma {self.embedding.shape}"
            )
        if not self.instance_id:
            object.__setattr__(self, "instance_id", self.id)

    @property
    def frames(self) -> int:
        return self.embedding.shape[0]

    @property
    def dim(self) -> int:
        return self.embedding.shape[1]

    @property
    def label_index(self) -> int:
        return self.label.class_index


@dataclass(frozen=True)
class Corpus:
    """Colección inmutable de registros que comparten d_z."""
    records: tuple[UtteranceRecord, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        dims = {r.dim for r in self.records}
        if len(dims) > 1:
            raise ValueError(f"registros con distintas dimensiones: {sorted(dims)}")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[UtteranceRecord]:
        return iter(self.records)

    @property
    def dim(self) -> int:
        return self.records[0].dim if self.records else 0

    @property
    def languages(self) -> list[str]:
        return sorted({r.language for r in self.records})

    def speakers(self) -> list[str]:
        return sorted({r.speaker for r in self.records})

    def with_speakers(self, speakers: Iterable[str]) -> list[UtteranceRecord]:
        wanted = set(speakers)
        return [r for r in self.records if r.speaker in wanted]


# ── Generador sintético ──────────────────────────────

class SynthSpec(BaseModel):
    """
    Parámetros del generador: cada frame es
    μ_clase + λ_idioma + σ_hablante + canal_hablante + ruido_t.
    """
    languages: dict[str, int] = Field(
        default_factory=lambda: {"DE": 10, "EN": 10, "CH": 10},
        description="Hablantes por idioma",
    )
    corpus_names: dict[str, str] = Field(default_factory=dict)
    dim: int = Field(64, ge=1)
    class_scale: float = Field(1.0, ge=0, description="Desvío de las medias de clase")
    class_means: list[list[float]] | None = None
    language_scale: float = Field(0.1, ge=0)
    speaker_scale: float = Field(0.1, ge=0)
    channel_scale: float = Field(0.05, ge=0)
    noise_scale: float = Field(0.5, ge=0)
    frames_min: int = Field(80, ge=1)
    frames_max: int = Field(120, ge=1)
    utterances_per_class: int = Field(25, ge=1)
    utterances_per_class_by_language: dict[str, int] = Field(default_factory=dict)
    with_ssl: bool = False
    seed: int = 0

    @field_validator("languages")
    @classmethod
    def _speakers_per_language(cls, value: dict[str, int]) -> dict[str, int]:
        if not value:
            raise ValueError("se necesita al menos un idioma")
        for lang, n in value.items():
            if n < 2:
                raise ValueError(f"{lang}: se necesitan al menos 2 hablantes, hay {n}")
        return value

    @model_validator(mode="after")
    def _consistency(self) -> "SynthSpec":
        if self.frames_min > self.frames_max:
            raise ValueError("frames_min no puede superar frames_max")
        if self.class_means is not None:
            shape = np.asarray(self.class_means, dtype=float).shape
            if shape != (N_CLASSES, self.dim):
                raise ValueError(f"class_means debe ser {N_CLASSES}×{self.dim}, es {shape}")
        unknown = set(self.utterances_per_class_by_language) - set(self.languages)
        if unknown:
            raise ValueError(f"idiomas desconocidos en utterances_per_class_by_language: {sorted(unknown)}")
        return self

    def corpus_name(self, language: str) -> str:
        return self.corpus_names.get(language, f"synth-{language.lower()}")

    def utterances_for(self, language: str) -> int:
        return self.utterances_per_class_by_language.get(language, self.utterances_per_class)

    @classmethod
    def preset(cls, name: str, **overrides) -> "SynthSpec":
        """Presets: default, high_nuisance, full_scale."""
        try:
            base = SYNTH_PRESETS[name]
        except KeyError:
            raise ValueError(
                f"preset sintético desconocido: {name} (opciones: {', '.join(SYNTH_PRESETS)})"
            ) from None
        return cls.model_validate({**base, **overrides})


SYNTH_PRESETS: dict[str, dict] = {
    # Baja variabilidad de idioma/hablante/canal: separable por medias de clase.
    "default": {},
    # Variabilidades grandes frente a la separación entre clases.
    "high_nuisance": {
        "class_scale": 0.6,
        "language_scale": 1.0,
        "speaker_scale": 0.6,
        "channel_scale": 0.4,
        "noise_scale": 1.0,
        "utterances_per_class": 12,
    },
    # Hablantes como Emo-DB / RAVDESS / ESD; conteos que reproducen los
    # factores de repetición al combinar dos idiomas.
    "full_scale": {
        "languages": {"DE": 10, "EN": 24, "CH": 10},
        "corpus_names": {"DE": "emodb-synth", "EN": "ravdess-synth", "CH": "esd-synth"},
        "utterances_per_class_by_language": {"DE": 9, "EN": 7, "CH": 300},
        "frames_min": 20,
        "frames_max": 30,
        "language_scale": 0.5,
        "speaker_scale": 0.3,
        "channel_scale": 0.2,
    },
}


# ── Plan de folds ────────────────────────────────────

class FoldAssignment(BaseModel):
    fold: int = Field(..., ge=1)
    train: list[str]
    valid: list[str]
    test: list[str]


class CorpusFolds(BaseModel):
    language: str
    corpus: str
    groups: list[list[str]]
    folds: list[FoldAssignment]

    @model_validator(mode="after")
    def _disjoint(self) -> "CorpusFolds":
        everyone = {s for g in self.groups for s in g}
        for f in self.folds:
            train, valid, test = set(f.train), set(f.valid), set(f.test)
            if train & valid or train & test or valid & test:
                raise ValueError(f"{self.language} fold {f.fold}: hablantes solapados")
            if train | valid | test != everyone:
                raise ValueError(f"{self.language} fold {f.fold}: la unión no cubre todos los hablantes")
        return self


class FoldPlan(BaseModel):
    """Asignación de grupos de hablantes a train/valid/test por fold y corpus."""
    n_folds: int = Field(5, ge=3)
    grouping: Literal["sorted", "seeded"] = "sorted"
    seed: int | None = None
    corpora: dict[str, CorpusFolds]

    def fold(self, language: str, fold: int) -> FoldAssignment:
        if language not in self.corpora:
            raise KeyError(f"el plan no incluye el idioma {language}")
        if not 1 <= fold <= self.n_folds:
            raise ValueError(f"fold {fold} fuera de 1..{self.n_folds}")
        return self.corpora[language].folds[fold - 1]
