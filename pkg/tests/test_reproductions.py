"""
Reproducciones a escala sintética: separabilidad con el preset `default`,
dirección de la ablación y tendencia de la inyección con `high_nuisance`.

Son corridas largas; se ejecutan con `pytest -m slow`.
"""

import numpy as np
import pytest

from emovar.schemas.corpus import SynthSpec
from emovar.schemas.experiment import ExperimentConfig
from emovar.services.corpus_service import split_by_language, synthesize_corpus
from emovar.services.evaluation_service import (
    ablation_sweep,
    injection_sweep,
    run_cross_language,
    run_within_language,
)
from emovar.services.fold_service import plan_folds

pytestmark = pytest.mark.slow

SEEDS = range(5)
INJECTION_LEVELS = (0, 30, 80, 150)


def experiment(spec: SynthSpec, seed: int) -> ExperimentConfig:
    return ExperimentConfig(
        synth_spec=spec,
        protocol="cross",
        train_languages=["DE", "CH"],
        test_language="EN",
        overrides={"learning_rate": 0.05, "dropout": 0.0},
        max_epochs=30,
        patience=10,
        seed=seed,
    )


def corpora_and_plan(spec: SynthSpec):
    corpora = split_by_language(synthesize_corpus(spec))
    return corpora, plan_folds(corpora, n_folds=5)


def test_default_preset_is_separable():
    spec = SynthSpec.preset("default")
    corpora, plan = corpora_and_plan(spec)
    config = experiment(spec, seed=0)
    cross = run_cross_language(corpora, "EN", plan, config)
    within = run_within_language(corpora, "DE", plan, config)
    assert cross.ua_mean >= 0.90
    assert within.ua_mean >= 0.95


def test_deep_wccn_does_not_hurt_under_nuisance():
    with_layer, without = [], []
    for seed in SEEDS:
        spec = SynthSpec.preset("high_nuisance", seed=seed)
        corpora, plan = corpora_and_plan(spec)
        enabled, disabled = ablation_sweep(experiment(spec, seed), corpora, plan)
        with_layer.append(enabled.ua_mean)
        without.append(disabled.ua_mean)
    assert np.mean(with_layer) >= np.mean(without)


def test_more_target_data_does_not_lower_ua():
    per_level = {level: [] for level in INJECTION_LEVELS}
    for seed in SEEDS:
        spec = SynthSpec.preset("high_nuisance", seed=seed)
        corpora, plan = corpora_and_plan(spec)
        for report in injection_sweep(INJECTION_LEVELS, experiment(spec, seed), corpora, plan):
            per_level[report.inject].append(report.ua_mean)
    means = [np.mean(per_level[level]) for level in INJECTION_LEVELS]
    drops = [b - a for a, b in zip(means, means[1:]) if b < a]
    assert len(drops) <= 1
    assert all(drop >= -0.01 for drop in drops)
