"""
Tareas Celery de experimentos: un fold por tarea.

El payload es JSON (configuración resuelta, fold, plan y directorio base);
el worker re-lee o re-sintetiza los corpus de forma determinista, así que
el resultado no depende de dónde corra la tarea.
"""

import json
import logging
from pathlib import Path

from celery import group

from emovar.schemas.corpus import Corpus, FoldPlan
from emovar.schemas.experiment import ExperimentConfig
from emovar.schemas.report import FoldResult
from emovar.tasks.celery_app import celery_app

logger = logging.getLogger(__name__)

# Corpus cargados por proceso worker, por origen de datos.
_corpora_cache: dict[str, dict[str, Corpus]] = {}


def corpora_for(config: ExperimentConfig, base_dir: Path | None) -> dict[str, Corpus]:
    from emovar.services.corpus_service import load_corpora

    key = json.dumps(
        {
            "corpus_paths": config.corpus_paths,
            "synth_spec": config.model_dump(mode="json")["synth_spec"],
            "base_dir": str(base_dir) if base_dir else None,
        },
        sort_keys=True,
    )
    if key not in _corpora_cache:
        _corpora_cache[key] = load_corpora(config, base_dir)
    return _corpora_cache[key]


def build_payload(
    config: ExperimentConfig,
    fold: int,
    plan: FoldPlan,
    base_dir: Path | None = None,
) -> dict:
    return {
        "config": config.model_dump(mode="json"),
        "fold": fold,
        "plan": plan.model_dump(mode="json"),
        "base_dir": str(base_dir) if base_dir else None,
    }


@celery_app.task(name="experiment.run_fold")
def run_fold_task(payload: dict) -> dict:
    """Entrena y evalúa un fold; devuelve el FoldResult como dict."""
    from emovar.services.evaluation_service import run_fold

    config = ExperimentConfig.model_validate(payload["config"])
    plan = FoldPlan.model_validate(payload["plan"])
    base_dir = Path(payload["base_dir"]) if payload.get("base_dir") else None
    corpora = corpora_for(config, base_dir)
    result, _, _ = run_fold(config, corpora, plan, int(payload["fold"]))
    return result.model_dump(mode="json")


def dispatch_folds(
    config: ExperimentConfig,
    folds: list[int],
    *,
    plan: FoldPlan,
    base_dir: Path | None = None,
) -> list[FoldResult]:
    """
    Despacha los folds como un grupo Celery y espera los resultados.
    En modo eager corren uno tras otro en este proceso.
    """
    payloads = [build_payload(config, f, plan, base_dir) for f in folds]
    if celery_app.conf.task_always_eager:
        logger.debug("Celery sin broker: folds en el proceso actual")
        raw = [run_fold_task.apply(args=[p]).get() for p in payloads]
    else:
        logger.info(f"Despachando {len(payloads)} folds a los workers")
        raw = group(run_fold_task.s(p) for p in payloads).apply_async().get()
    return sorted((FoldResult.model_validate(r) for r in raw), key=lambda r: r.fold)
