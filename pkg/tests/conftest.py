"""
Fixtures compartidas para Pytest.
Corpus sintéticos chicos, generadores con semilla y directorios temporales.
"""

import numpy as np
import pytest

from emovar.config import get_settings
from emovar.schemas.corpus import Emotion, SynthSpec, UtteranceRecord
from emovar.schemas.experiment import ExperimentConfig
from emovar.services.corpus_service import split_by_language, synthesize_corpus, write_corpus


@pytest.fixture(autouse=True)
def clean_settings(monkeypatch):
    """Cada test ve Settings recién leídas del entorno, sin EMOVAR_OUT ni broker."""
    monkeypatch.delenv("EMOVAR_OUT", raising=False)
    monkeypatch.delenv("CELERY_BROKER_URL", raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def make_record():
    """Fábrica de UtteranceRecord con embedding aleatorio o explícito."""

    def _make(
        utt_id: str = "u1",
        *,
        language: str = "DE",
        speaker: str = "DE01",
        label: Emotion = Emotion.ANGRY,
        embedding=None,
        frames: int = 4,
        dim: int = 3,
        corpus_name: str = "synth-de",
        seed: int = 0,
    ) -> UtteranceRecord:
        if embedding is None:
            embedding = np.random.default_rng(seed).normal(size=(frames, dim))
        return UtteranceRecord(
            id=utt_id,
            language=language,
            corpus_name=corpus_name,
            speaker=speaker,
            label=label,
            embedding=np.asarray(embedding, dtype=np.float32),
        )

    return _make


@pytest.fixture
def small_spec() -> SynthSpec:
    """3 idiomas × 5 hablantes × 4 clases × 3 enunciados, d_z = 8."""
    return SynthSpec(
        languages={"DE": 5, "EN": 5, "CH": 5},
        dim=8,
        utterances_per_class=3,
        frames_min=5,
        frames_max=8,
        seed=7,
    )


@pytest.fixture
def small_corpus(small_spec):
    return synthesize_corpus(small_spec)


@pytest.fixture
def small_corpora(small_corpus):
    return split_by_language(small_corpus)


@pytest.fixture
def corpus_dir(tmp_path, small_corpus):
    out = tmp_path / "corpus"
    write_corpus(small_corpus, out)
    return out


@pytest.fixture
def separable_spec() -> SynthSpec:
    """Mismas escalas que el preset `default`, en tamaño de test."""
    return SynthSpec(
        languages={"DE": 10, "EN": 10, "CH": 10},
        dim=16,
        utterances_per_class=10,
        frames_min=20,
        frames_max=30,
        seed=11,
    )


@pytest.fixture
def fast_config(small_spec) -> ExperimentConfig:
    """Configuración de experimento chica para tests de protocolo y CLI."""
    return ExperimentConfig(
        name="test",
        synth_spec=small_spec,
        protocol="cross",
        train_languages=["DE", "CH"],
        test_language="EN",
        hidden_dim=6,
        overrides={"learning_rate": 0.05, "dropout": 0.0, "batch_size": 8},
        max_epochs=3,
        patience=2,
        seed=5,
    )
