"""
Configuración central del toolkit.
Usa Pydantic BaseSettings para validar variables de entorno.
"""

from functools import lru_cache
from pathlib import Path

from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # ── App ──────────────────────────────────────────
    APP_NAME: str = "emovar"
    APP_ENV: str = "development"
    LOG_LEVEL: str = "INFO"

    # ── Salidas ──────────────────────────────────────
    # Si está definida, reemplaza el --out de la CLI.
    EMOVAR_OUT: str | None = None
    EMOVAR_JOBS: int = 1

    # ── Celery (folds en paralelo) ───────────────────
    # Broker vacío => ejecución local y síncrona (eager).
    CELERY_BROKER_URL: str = ""
    CELERY_RESULT_BACKEND: str = ""

    @field_validator("LOG_LEVEL")
    @classmethod
    def _upper_level(cls, value: str) -> str:
        return value.upper()

    @property
    def output_override(self) -> Path | None:
        if self.EMOVAR_OUT:
            return Path(self.EMOVAR_OUT)
        return None

    @property
    def celery_eager(self) -> bool:
        return not self.CELERY_BROKER_URL


@lru_cache
def get_settings() -> Settings:
    return Settings()
