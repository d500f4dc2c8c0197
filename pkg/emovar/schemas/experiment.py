"""
Configuración de experimentos (documento JSON de la CLI).

Resuelve el preset de hiper-parámetros del par de idiomas, aplica los
overrides explícitos y produce las configuraciones de entrenamiento y de
la cabeza para cada fold.
"""

from __future__ import annotations

import hashlib
import json
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from emovar.core.seeding import derive_seed
from emovar.schemas.corpus import SynthSpec
from emovar.schemas.training import (
    HYPER_PRESETS,
    HeadConfig,
    HyperPreset,
    PresetName,
    TrainingConfig,
    preset_for_pair,
)

# Valores usados cuando el par no tiene preset y no hay overrides.
DEFAULT_HYPER = {
    "learning_rate": 3e-4,
    "weight_decay": 0.0,
    "dropout": 0.0,
    "beta": 0.2,
    "gamma": 0.0,
    "batch_size": 14,
}


class HyperOverrides(BaseModel):
    model_config = ConfigDict(extra="forbid")

    learning_rate: float | None = Field(None, gt=0)
    weight_decay: float | None = Field(None, ge=0)
    dropout: float | None = Field(None, ge=0, lt=1)
    beta: float | None = Field(None, ge=0, le=1)
    gamma: float | None = Field(None, ge=0)
    batch_size: int | None = Field(None, ge=2)


class SslSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kappa: float = Field(0.1, gt=0)
    alpha: float = Field(0.1, ge=0)
    n_distractors: int = Field(10, ge=1)


class ExperimentConfig(BaseModel):
    """
    Una corrida reproducible. `synth_spec` acepta una SynthSpec en línea,
    el nombre de un preset sintético o la ruta a un JSON.
    """
    model_config = ConfigDict(extra="forbid")

    name: str = "experiment"

    # ── Datos ────────────────────────────────────────
    corpus_paths: list[str] | None = None
    synth_spec: SynthSpec | str | None = None
    target_frames: int | None = Field(None, ge=1)

    # ── Protocolo ────────────────────────────────────
    protocol: Literal["within", "cross"] = "cross"
    train_languages: list[str] = Field(default_factory=lambda: ["DE", "CH"], min_length=2, max_length=2)
    test_language: str = "EN"
    n_folds: int = Field(5, ge=3)
    fold: int = Field(1, ge=1, description="Fold usado por `train`")
    grouping: Literal["sorted", "seeded"] = "sorted"
    plan_path: str | None = None

    # ── Modelo ───────────────────────────────────────
    preset: PresetName | None = None
    overrides: HyperOverrides = Field(default_factory=HyperOverrides)
    hidden_dim: int | None = Field(None, ge=1)
    use_wccn: bool = True
    wccn_update: Literal["cumulative", "moving_average"] = "cumulative"
    wccn_momentum: float = Field(0.9, ge=0, lt=1)
    ssl: SslSettings = Field(default_factory=SslSettings)

    # ── Entrenamiento ────────────────────────────────
    max_epochs: int = Field(30, ge=1)
    patience: int = Field(10, ge=0)
    seed: int = 0

    # ── Barridos ─────────────────────────────────────
    ablation: bool = False
    inject: int = Field(0, ge=0)
    injection_levels: list[int] = Field(default_factory=list)

    output_dir: str = "runs"

    @model_validator(mode="after")
    def _consistency(self) -> "ExperimentConfig":
        if (self.corpus_paths is None) == (self.synth_spec is None):
            raise ValueError("indique exactamente uno de corpus_paths o synth_spec")
        if self.corpus_paths is not None and not self.corpus_paths:
            raise ValueError("corpus_paths está vacío")
        a, b = self.train_languages
        if a == b:
            raise ValueError("los dos idiomas de entrenamiento deben ser distintos")
        if self.protocol == "within" and self.test_language not in self.train_languages:
            raise ValueError(
                f"protocolo within: {self.test_language} debe estar en {a}+{b}"
            )
        if self.protocol == "cross" and self.test_language in self.train_languages:
            raise ValueError(
                f"protocolo cross: {self.test_language} no puede estar en {a}+{b}"
            )
        if self.fold > self.n_folds:
            raise ValueError(f"fold {self.fold} fuera de 1..{self.n_folds}")
        if self.protocol == "within" and (self.inject or any(self.injection_levels)):
            raise ValueError("la inyección de idioma objetivo requiere protocolo cross")
        if any(level < 0 for level in self.injection_levels):
            raise ValueError("injection_levels debe ser >= 0")
        return self

    # ── Hiper-parámetros resueltos ───────────────────

    def resolved_preset(self) -> HyperPreset | None:
        name = self.preset or preset_for_pair(self.train_languages)
        return HYPER_PRESETS.get(name) if name else None

    def hyper(self) -> dict:
        values = dict(DEFAULT_HYPER)
        preset = self.resolved_preset()
        if preset is not None:
            values.update(preset.model_dump(exclude={"name"}))
        values.update(self.overrides.model_dump(exclude_none=True))
        return values

    def training_config(self, fold: int | None = None) -> TrainingConfig:
        hyper = self.hyper()
        return TrainingConfig(
            learning_rate=hyper["learning_rate"],
            weight_decay=hyper["weight_decay"],
            batch_size=hyper["batch_size"],
            max_epochs=self.max_epochs,
            patience=self.patience,
            seed=derive_seed(self.seed, "train", fold or self.fold),
        )

    def head_config(self, fold: int | None = None) -> HeadConfig:
        hyper = self.hyper()
        return HeadConfig(
            dropout_rate=hyper["dropout"],
            gamma=hyper["gamma"],
            beta=hyper["beta"],
            hidden_dim=self.hidden_dim,
            use_wccn=self.use_wccn,
            wccn_update=self.wccn_update,
            wccn_momentum=self.wccn_momentum,
            rng_seed=derive_seed(self.seed, "init", fold or self.fold),
        )

    # ── Identidad ────────────────────────────────────

    def fingerprint(self) -> str:
        """SHA-256 del JSON canónico (sin output_dir)."""
        payload = self.model_dump(mode="json", exclude={"output_dir"})
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def with_updates(self, **changes) -> "ExperimentConfig":
        """Copia validada con campos reemplazados."""
        data = self.model_dump(mode="json")
        data.update(changes)
        return ExperimentConfig.model_validate(data)


def config_diff(a: ExperimentConfig, b: ExperimentConfig) -> set[str]:
    """Campos de primer nivel que difieren entre dos configuraciones."""
    left = a.model_dump(mode="json")
    right = b.model_dump(mode="json")
    return {key for key in left if left[key] != right.get(key)}
