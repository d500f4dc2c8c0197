"""
Schemas de entrenamiento: configuración del optimizador y de la cabeza,
presets de hiper-parámetros por par de idiomas y log por época.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field


# ── Presets por par de idiomas ───────────────────────

class HyperPreset(BaseModel):
    """Una fila de la tabla de hiper-parámetros (tasa fija, batch 14)."""
    name: str
    learning_rate: float = 3e-4
    weight_decay: float
    dropout: float
    beta: float
    gamma: float
    batch_size: int = 14


HYPER_PRESETS: dict[str, HyperPreset] = {
    "DECH": HyperPreset(name="DECH", weight_decay=4e-4, dropout=0.45, beta=0.2, gamma=8e-4),
    "DEEN": HyperPreset(name="DEEN", weight_decay=5e-4, dropout=0.05, beta=0.5, gamma=1.2e-3),
    "ENCH": HyperPreset(name="ENCH", weight_decay=5e-4, dropout=0.3, beta=0.4, gamma=1.7e-3),
}

PresetName = Literal["DECH", "DEEN", "ENCH"]


def preset_for_pair(languages) -> str | None:
    """Nombre del preset para un par de idiomas (en cualquier orden)."""
    wanted = frozenset(lang.upper() for lang in languages)
    for name in HYPER_PRESETS:
        if frozenset((name[:2], name[2:])) == wanted:
            return name
    return None


# ── Configuración ────────────────────────────────────

class TrainingConfig(BaseModel):
    learning_rate: float = Field(3e-4, gt=0)
    weight_decay: float = Field(0.0, ge=0)
    batch_size: int = Field(14, ge=2)
    max_epochs: int = Field(30, ge=1)
    patience: int = Field(10, ge=0, description="Épocas sin mejora antes de detener")
    seed: int = 0


class HeadConfig(BaseModel):
    dropout_rate: float = Field(0.0, ge=0, lt=1)
    gamma: float = Field(0.0, ge=0, description="Peso de la pérdida SSL")
    beta: float = Field(0.2, ge=0, le=1, description="Suavizado espectral de Deep-WCCN")
    hidden_dim: int | None = Field(None, ge=1, description="d_h; por defecto d_z/4")
    use_wccn: bool = True
    wccn_update: Literal["cumulative", "moving_average"] = "cumulative"
    wccn_momentum: float = Field(0.9, ge=0, lt=1)
    rng_seed: int = 0

    def resolve_hidden_dim(self, d_z: int) -> int:
        return self.hidden_dim or max(1, d_z // 4)


# ── Log de entrenamiento ─────────────────────────────

class EpochLog(BaseModel):
    epoch: int
    train_loss: float
    valid_ua: float
    valid_wa: float
    n_tot: int


class TrainingLog(BaseModel):
    epochs: list[EpochLog] = []
    best_epoch: int = 0
    best_valid_ua: float = 0.0
    stopped_early: bool = False
