"""
Servicio de particiones por hablante.

Los hablantes de cada corpus se dividen en n grupos; el fold f usa un
grupo para prueba, el anterior en la rotación para validación y el resto
para entrenamiento, de modo que test(f) = valid(f − 1).
"""

from __future__ import annotations

import logging
import re
from collections.abc import Mapping, Sequence
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from emovar.core.exceptions import ConfigError, TooFewSpeakersError
from emovar.schemas.corpus import Corpus, CorpusFolds, FoldAssignment, FoldPlan, UtteranceRecord
from emovar.services.storage_service import atomic_write_text

logger = logging.getLogger(__name__)

_DIGITS = re.compile(r"(\d+)")


def natural_key(speaker: str) -> tuple:
    """'DE2' < 'DE10'; los IDs numéricos se comparan como números."""
    return tuple(int(part) if part.isdigit() else part for part in _DIGITS.split(speaker))


def group_speakers(
    speakers: Sequence[str],
    n_folds: int = 5,
    grouping: str = "sorted",
    seed: int | None = None,
    corpus_name: str = "",
) -> list[list[str]]:
    """
    Reparte los hablantes en n_folds grupos contiguos (los primeros grupos
    reciben el sobrante, p. ej. 5,5,5,5,4 para 24 hablantes).
    """
    unique = sorted(set(speakers), key=natural_key)
    if len(unique) < n_folds:
        raise TooFewSpeakersError(corpus_name, len(unique), n_folds)
    if grouping == "seeded":
        rng = np.random.default_rng(seed if seed is not None else 0)
        unique = [unique[i] for i in rng.permutation(len(unique))]
    elif grouping != "sorted":
        raise ValueError(f"agrupamiento desconocido: {grouping}")
    return [list(chunk) for chunk in np.array_split(np.array(unique, dtype=object), n_folds)]


def rotate(groups: Sequence[Sequence[str]], fold: int) -> FoldAssignment:
    """Asignación del fold (1..n) según la rotación de grupos."""
    n = len(groups)
    test_idx = (n - fold) % n
    valid_idx = (n - 1 - fold) % n
    train = [s for i, g in enumerate(groups) if i not in (test_idx, valid_idx) for s in g]
    return FoldAssignment(
        fold=fold,
        train=train,
        valid=list(groups[valid_idx]),
        test=list(groups[test_idx]),
    )


def plan_folds(
    corpora: Mapping[str, Corpus],
    n_folds: int = 5,
    grouping: str = "sorted",
    seed: int | None = None,
) -> FoldPlan:
    """FoldPlan con los folds de cada corpus (clave: idioma)."""
    entries = {}
    for language, corpus in sorted(corpora.items()):
        names = {r.corpus_name for r in corpus}
        corpus_name = ",".join(sorted(names)) or language
        groups = group_speakers(corpus.speakers(), n_folds, grouping, seed, corpus_name)
        entries[language] = CorpusFolds(
            language=language,
            corpus=corpus_name,
            groups=groups,
            folds=[rotate(groups, f) for f in range(1, n_folds + 1)],
        )
        logger.debug(
            f"{language}: {len(corpus.speakers())} hablantes en grupos "
            f"{[len(g) for g in groups]}"
        )
    return FoldPlan(n_folds=n_folds, grouping=grouping, seed=seed, corpora=entries)


def fold_split(
    records: Sequence[UtteranceRecord],
    assignment: FoldAssignment,
) -> tuple[list[UtteranceRecord], list[UtteranceRecord], list[UtteranceRecord]]:
    """(train, valid, test) de una lista de registros según la asignación."""
    train_s, valid_s, test_s = set(assignment.train), set(assignment.valid), set(assignment.test)
    train = [r for r in records if r.speaker in train_s]
    valid = [r for r in records if r.speaker in valid_s]
    test = [r for r in records if r.speaker in test_s]
    return train, valid, test


# ── Persistencia ─────────────────────────────────────

def write_plan(plan: FoldPlan, path: str | Path) -> Path:
    return atomic_write_text(Path(path), plan.model_dump_json(indent=2) + "\n")


def read_plan(path: str | Path) -> FoldPlan:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no existe el plan de folds: {path}")
    try:
        return FoldPlan.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigError(
            first["msg"], path=str(path), field=".".join(str(p) for p in first["loc"]) or None
        ) from exc


def plan_for_config(config, corpora: Mapping[str, Corpus], base_dir: Path | None = None) -> FoldPlan:
    """El plan de `plan_path` si existe en la configuración; si no, uno nuevo."""
    if config.plan_path:
        path = Path(config.plan_path)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        plan = read_plan(path)
        if plan.n_folds != config.n_folds:
            raise ConfigError(
                f"el plan tiene {plan.n_folds} folds y la configuración {config.n_folds}",
                path=str(path),
                field="n_folds",
            )
        return plan
    return plan_folds(corpora, config.n_folds, config.grouping, config.seed)
