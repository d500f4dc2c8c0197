"""
Servicio de evaluación: predicción, métricas y protocolos experimentales.

Protocolos:
  - within: entrenamiento con dos idiomas, prueba en uno de ellos con
    hablantes no vistos.
  - cross: entrenamiento con dos idiomas, prueba en el tercero (idioma,
    corpus y hablantes no vistos).
Más el barrido de ablación (Deep-WCCN sí/no) y el de inyección de datos
del idioma objetivo.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from emovar.core.exceptions import (
    ConfigError,
    LanguageNotInTrainingPairError,
    LanguageOverlapError,
    ProtocolViolationError,
)
from emovar.core.metrics import confusion, ua, wa
from emovar.core.ssl import SslConfig
from emovar.models.emotion_head import EmotionModel, stat_pool_batch
from emovar.schemas.corpus import Corpus, FoldPlan, UtteranceRecord
from emovar.schemas.experiment import ExperimentConfig
from emovar.schemas.report import EvaluationReport, FoldResult
from emovar.schemas.training import TrainingLog
from emovar.services.corpus_service import (
    balance_merge,
    corpora_digest,
    inject_target,
    normalize_frames,
)
from emovar.services.fold_service import fold_split
from emovar.services.training_service import train

logger = logging.getLogger(__name__)

__all__ = [
    "confusion",
    "ua",
    "wa",
    "predict",
    "evaluate_model",
    "fold_datasets",
    "run_fold",
    "run_protocol",
    "run_within_language",
    "run_cross_language",
    "ablation_sweep",
    "injection_sweep",
    "aggregate_report",
    "run_experiment",
]


# ── Predicción ───────────────────────────────────────

def predict(model: EmotionModel, records: Sequence[UtteranceRecord]) -> np.ndarray:
    """Índice de clase predicho por enunciado."""
    if not records:
        return np.zeros(0, dtype=np.int64)
    return model.predict(stat_pool_batch([r.embedding for r in records]))


def evaluate_model(model: EmotionModel, records: Sequence[UtteranceRecord]) -> np.ndarray:
    """Matriz de confusión del modelo sobre los registros."""
    return confusion([r.label_index for r in records], predict(model, records))


# ── Datos de un fold ─────────────────────────────────

@dataclass(frozen=True)
class FoldData:
    train: list[UtteranceRecord]
    valid: list[UtteranceRecord]
    test: list[UtteranceRecord]


def _speaker_keys(records: Iterable[UtteranceRecord]) -> set[tuple[str, str]]:
    return {(r.corpus_name, r.speaker) for r in records}


def check_speaker_disjoint(data: FoldData) -> None:
    """Ningún hablante de validación o prueba puede aparecer en entrenamiento."""
    train_speakers = _speaker_keys(data.train)
    leaked = train_speakers & (_speaker_keys(data.valid) | _speaker_keys(data.test))
    if leaked:
        sample = ", ".join(f"{c}/{s}" for c, s in sorted(leaked)[:5])
        raise ProtocolViolationError(f"hablantes en entrenamiento y en valid/test: {sample}")


def fold_datasets(
    config: ExperimentConfig,
    corpora: Mapping[str, Corpus],
    plan: FoldPlan,
    fold: int,
) -> FoldData:
    """
    Train = combinación balanceada de los dos idiomas (más la inyección
    opcional); valid = validación de ambos; test = prueba del idioma de
    prueba.
    """
    missing = [
        lang for lang in (*config.train_languages, config.test_language) if lang not in corpora
    ]
    if missing:
        raise ConfigError(
            f"no hay corpus para los idiomas: {', '.join(missing)}", field="train_languages"
        )

    splits = {}
    for language in {*config.train_languages, config.test_language}:
        splits[language] = fold_split(corpora[language].records, plan.fold(language, fold))

    lang_a, lang_b = config.train_languages
    train_set = balance_merge(splits[lang_a][0], splits[lang_b][0])
    valid_set = splits[lang_a][1] + splits[lang_b][1]
    test_set = splits[config.test_language][2]

    if config.inject:
        target_train, target_valid, target_test = splits[config.test_language]
        train_set = inject_target(
            train_set,
            target_train,
            config.inject,
            config.seed,
            excluded_speakers={r.speaker for r in target_valid + target_test},
        )

    if config.target_frames:
        train_set, valid_set, test_set = (
            [normalize_frames(r, config.target_frames, config.seed) for r in part]
            for part in (train_set, valid_set, test_set)
        )

    data = FoldData(list(train_set), list(valid_set), list(test_set))
    check_speaker_disjoint(data)
    return data


# ── Un fold ──────────────────────────────────────────

def run_fold(
    config: ExperimentConfig,
    corpora: Mapping[str, Corpus],
    plan: FoldPlan,
    fold: int,
) -> tuple[FoldResult, EmotionModel, TrainingLog]:
    """Entrena y evalúa un fold; devuelve métricas, modelo y log."""
    data = fold_datasets(config, corpora, plan, fold)
    d_z = data.train[0].dim
    head_config = config.head_config(fold)
    model = EmotionModel.create(d_z, head_config)
    ssl_config = SslConfig(**config.ssl.model_dump())

    best, log = train(
        model,
        data.train,
        data.valid,
        config.training_config(fold),
        head_config,
        ssl_config,
    )
    cm = evaluate_model(best, data.test)
    result = FoldResult(
        fold=fold,
        ua=ua(cm),
        wa=wa(cm),
        confusion=cm.tolist(),
        best_epoch=log.best_epoch,
        n_tot=best.wccn.n_tot if best.wccn is not None else 0,
        n_train=len(data.train),
        n_test=len(data.test),
    )
    logger.info(
        f"Fold {fold} {config.protocol} {'+'.join(config.train_languages)}→{config.test_language}: "
        f"UA={result.ua:.4f} WA={result.wa:.4f} (época {log.best_epoch})"
    )
    return result, best, log


# ── Agregado ─────────────────────────────────────────

def aggregate_report(config: ExperimentConfig, results: Sequence[FoldResult]) -> EvaluationReport:
    """Media y desvío muestral (ddof=1) de UA/WA sobre los folds."""
    ordered = sorted(results, key=lambda r: r.fold)
    uas = np.array([r.ua for r in ordered])
    was = np.array([r.wa for r in ordered])
    ddof = 1 if len(ordered) > 1 else 0
    return EvaluationReport(
        protocol=config.protocol,
        train_languages=list(config.train_languages),
        test_language=config.test_language,
        use_wccn=config.use_wccn,
        inject=config.inject,
        folds=list(ordered),
        ua_mean=float(uas.mean()),
        ua_std=float(uas.std(ddof=ddof)),
        wa_mean=float(was.mean()),
        wa_std=float(was.std(ddof=ddof)),
        fingerprint=config.fingerprint(),
    )


# ── Protocolos ───────────────────────────────────────

def run_protocol(
    config: ExperimentConfig,
    corpora: Mapping[str, Corpus],
    plan: FoldPlan,
    *,
    jobs: int = 1,
    base_dir: Path | None = None,
) -> EvaluationReport:
    """
    Todos los folds del plan. Con jobs > 1 y broker configurado los folds
    se despachan como tareas Celery; si no, corren en este proceso.

    Los workers reconstruyen los corpus desde `config` y `base_dir`, así que
    con jobs > 1 `corpora` debe tener ese mismo contenido.
    """
    folds = range(1, plan.n_folds + 1)
    if jobs > 1:
        from emovar.tasks.experiment_tasks import corpora_for, dispatch_folds

        if corpora_digest(corpora) != corpora_digest(corpora_for(config, base_dir)):
            raise ConfigError(
                "con jobs > 1 los folds se entrenan con los corpus de la configuración; "
                "los corpus recibidos son distintos (use jobs=1 para corpus en memoria)",
                field="jobs",
            )
        results = dispatch_folds(config, list(folds), base_dir=base_dir, plan=plan)
    else:
        results = [run_fold(config, corpora, plan, f)[0] for f in folds]
    report = aggregate_report(config, results)
    logger.info(
        f"{config.protocol} {'+'.join(config.train_languages)}→{config.test_language} "
        f"[{report.variant}]: UA={report.ua_mean:.4f}±{report.ua_std:.4f} "
        f"WA={report.wa_mean:.4f}±{report.wa_std:.4f}"
    )
    return report


def run_within_language(
    corpora: Mapping[str, Corpus],
    test_language: str,
    plan: FoldPlan,
    config: ExperimentConfig,
    **kwargs,
) -> EvaluationReport:
    pair = tuple(config.train_languages)
    if test_language not in pair:
        raise LanguageNotInTrainingPairError(test_language, pair)
    config = config.with_updates(protocol="within", test_language=test_language, inject=0)
    return run_protocol(config, corpora, plan, **kwargs)


def run_cross_language(
    corpora: Mapping[str, Corpus],
    held_out_language: str,
    plan: FoldPlan,
    config: ExperimentConfig,
    **kwargs,
) -> EvaluationReport:
    pair = tuple(config.train_languages)
    if held_out_language in pair:
        raise LanguageOverlapError(held_out_language, pair)
    config = config.with_updates(protocol="cross", test_language=held_out_language)
    return run_protocol(config, corpora, plan, **kwargs)


def _dispatch(config: ExperimentConfig, corpora, plan, **kwargs) -> EvaluationReport:
    if config.protocol == "within":
        return run_within_language(corpora, config.test_language, plan, config, **kwargs)
    return run_cross_language(corpora, config.test_language, plan, config, **kwargs)


def ablation_sweep(
    config: ExperimentConfig,
    corpora: Mapping[str, Corpus],
    plan: FoldPlan,
    **kwargs,
) -> list[EvaluationReport]:
    """El mismo protocolo con Deep-WCCN y con la capa reemplazada por la identidad."""
    return [
        _dispatch(config.with_updates(use_wccn=use_wccn), corpora, plan, **kwargs)
        for use_wccn in (True, False)
    ]


def injection_sweep(
    levels: Iterable[int],
    config: ExperimentConfig,
    corpora: Mapping[str, Corpus],
    plan: FoldPlan,
    **kwargs,
) -> list[EvaluationReport]:
    """Un reporte por nivel de inyección, siempre incluido el nivel 0."""
    ordered = sorted({0, *levels})
    return [
        _dispatch(config.with_updates(inject=level), corpora, plan, **kwargs)
        for level in ordered
    ]


def run_experiment(
    config: ExperimentConfig,
    corpora: Mapping[str, Corpus],
    plan: FoldPlan,
    **kwargs,
) -> list[EvaluationReport]:
    """
    Corrida completa de una configuración: el protocolo base, la ablación
    si `ablation` y los niveles de `injection_levels`. Sin duplicados.
    """
    variants: list[ExperimentConfig] = [config]
    if config.ablation:
        variants.append(config.with_updates(use_wccn=not config.use_wccn))
    for level in config.injection_levels:
        variants.append(config.with_updates(inject=level))

    reports: list[EvaluationReport] = []
    seen: set[str] = set()
    for variant in variants:
        key = variant.fingerprint()
        if key in seen:
            continue
        seen.add(key)
        reports.append(_dispatch(variant, corpora, plan, **kwargs))
    return reports
