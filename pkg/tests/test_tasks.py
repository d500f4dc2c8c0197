"""
Tests de las tareas Celery de folds, ejecutadas en el proceso (sin broker).
"""

from dataclasses import replace

import pytest

from emovar.core.exceptions import ConfigError
from emovar.schemas.corpus import Corpus
from emovar.schemas.report import FoldResult
from emovar.services.corpus_service import load_corpora
from emovar.services.evaluation_service import run_fold, run_protocol
from emovar.services.fold_service import plan_folds
from emovar.tasks.celery_app import celery_app
from emovar.tasks.experiment_tasks import build_payload, dispatch_folds, run_fold_task


@pytest.fixture(autouse=True)
def eager_celery(monkeypatch):
    monkeypatch.setitem(celery_app.conf, "task_always_eager", True)


@pytest.fixture
def setup(fast_config):
    corpora = load_corpora(fast_config)
    return fast_config, corpora, plan_folds(corpora, n_folds=5)


def test_app_configuration():
    assert celery_app.main == "emovar"
    assert celery_app.conf.task_serializer == "json"
    assert celery_app.conf.task_acks_late is True
    assert celery_app.conf.worker_prefetch_multiplier == 1
    assert "experiment.run_fold" in celery_app.tasks


def test_payload_is_plain_json(setup):
    config, _, plan = setup
    payload = build_payload(config, 3, plan)
    assert payload["fold"] == 3
    assert payload["base_dir"] is None
    assert payload["config"]["train_languages"] == ["DE", "CH"]


def test_task_matches_in_process_fold(setup):
    config, corpora, plan = setup
    raw = run_fold_task.apply(args=[build_payload(config, 2, plan)]).get()
    expected, _, _ = run_fold(config, corpora, plan, 2)
    assert FoldResult.model_validate(raw) == expected


def test_dispatch_orders_results_by_fold(setup):
    config, corpora, plan = setup
    results = dispatch_folds(config, [3, 1, 2], plan=plan)
    assert [r.fold for r in results] == [1, 2, 3]
    assert results[0] == run_fold(config, corpora, plan, 1)[0]


def test_parallel_and_sequential_reports_match(setup):
    config, corpora, plan = setup
    sequential = run_protocol(config, corpora, plan, jobs=1)
    parallel = run_protocol(config, corpora, plan, jobs=2)
    assert parallel.model_dump() == sequential.model_dump()


def test_parallel_run_rejects_other_corpora(setup):
    config, corpora, plan = setup
    first, *rest = corpora["EN"].records
    changed = dict(corpora)
    changed["EN"] = Corpus((replace(first, embedding=first.embedding + 1.0), *rest))
    with pytest.raises(ConfigError) as exc:
        run_protocol(config, changed, plan, jobs=2)
    assert exc.value.field == "jobs"
    assert len(run_protocol(config, changed, plan, jobs=1).folds) == plan.n_folds
