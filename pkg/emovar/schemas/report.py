"""
Schemas de resultados: métricas por fold y reporte agregado de un protocolo.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field


class FoldResult(BaseModel):
    """Resultado de un fold sobre la partición de prueba."""
    fold: int = Field(..., ge=1)
    ua: float = Field(..., ge=0, le=1)
    wa: float = Field(..., ge=0, le=1)
    confusion: list[list[int]]
    best_epoch: int = 0
    n_tot: int = 0
    n_train: int = 0
    n_test: int = 0


class EvaluationReport(BaseModel):
    """UA/WA por fold, media y desvío muestral, descriptor del protocolo."""
    protocol: Literal["within", "cross"]
    train_languages: list[str]
    test_language: str
    use_wccn: bool = True
    inject: int = 0
    folds: list[FoldResult]
    ua_mean: float
    ua_std: float
    wa_mean: float
    wa_std: float
    fingerprint: str = ""

    @property
    def variant(self) -> str:
        name = "wccn" if self.use_wccn else "nowccn"
        if self.inject:
            name += f"+inject{self.inject}"
        return name

    @property
    def stem(self) -> str:
        pair = "".join(self.train_languages)
        return f"{self.protocol}_{pair}_to_{self.test_language}_{self.variant.replace('+', '_')}"
