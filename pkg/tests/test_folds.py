"""
Tests de las particiones por hablante: agrupamiento, rotación de folds y
persistencia del plan.
"""

import json

import pytest

from emovar.core.exceptions import ConfigError, TooFewSpeakersError
from emovar.services.fold_service import (
    fold_split,
    group_speakers,
    natural_key,
    plan_folds,
    read_plan,
    rotate,
    write_plan,
)

EMODB_SPEAKERS = ["03", "08", "09", "10", "11", "12", "13", "14", "15", "16"]


def test_natural_order():
    assert sorted(["DE10", "DE2", "DE1"], key=natural_key) == ["DE1", "DE2", "DE10"]


def test_emodb_style_fold_one():
    groups = group_speakers(EMODB_SPEAKERS, 5)
    assert groups == [["03", "08"], ["09", "10"], ["11", "12"], ["13", "14"], ["15", "16"]]
    fold = rotate(groups, 1)
    assert fold.test == ["15", "16"]
    assert fold.valid == ["13", "14"]
    assert fold.train == ["03", "08", "09", "10", "11", "12"]


def test_test_of_fold_is_valid_of_previous():
    groups = group_speakers(EMODB_SPEAKERS, 5)
    for f in range(2, 6):
        assert rotate(groups, f).test == rotate(groups, f - 1).valid


def test_every_speaker_is_tested_once():
    groups = group_speakers(EMODB_SPEAKERS, 5)
    tested = [s for f in range(1, 6) for s in rotate(groups, f).test]
    assert sorted(tested) == EMODB_SPEAKERS


def test_partitions_are_disjoint_and_cover():
    speakers = [f"EN{k:02d}" for k in range(1, 25)]
    groups = group_speakers(speakers, 5)
    for f in range(1, 6):
        fold = rotate(groups, f)
        train, valid, test = set(fold.train), set(fold.valid), set(fold.test)
        assert not (train & valid or train & test or valid & test)
        assert train | valid | test == set(speakers)


def test_uneven_group_sizes():
    speakers = [f"EN{k:02d}" for k in range(1, 25)]
    assert [len(g) for g in group_speakers(speakers, 5)] == [5, 5, 5, 5, 4]


def test_too_few_speakers():
    with pytest.raises(TooFewSpeakersError):
        group_speakers(["a", "b", "c"], 5, corpus_name="tiny")


def test_seeded_grouping_is_reproducible():
    first = group_speakers(EMODB_SPEAKERS, 5, grouping="seeded", seed=4)
    second = group_speakers(EMODB_SPEAKERS, 5, grouping="seeded", seed=4)
    assert first == second
    assert sorted(s for g in first for s in g) == EMODB_SPEAKERS


def test_unknown_grouping():
    with pytest.raises(ValueError):
        group_speakers(EMODB_SPEAKERS, 5, grouping="random")


# ── Plan ─────────────────────────────────────────────

def test_plan_covers_each_language(small_corpora):
    plan = plan_folds(small_corpora, n_folds=5)
    assert set(plan.corpora) == {"CH", "DE", "EN"}
    assert plan.fold("DE", 1).test == ["DE05"]
    assert plan.fold("DE", 1).valid == ["DE04"]


def test_fold_split_filters_records(small_corpora):
    plan = plan_folds(small_corpora, n_folds=5)
    train, valid, test = fold_split(small_corpora["EN"].records, plan.fold("EN", 2))
    assert {r.speaker for r in test} == {"EN04"}
    assert {r.speaker for r in valid} == {"EN03"}
    assert len(train) + len(valid) + len(test) == len(small_corpora["EN"])


def test_fold_out_of_range(small_corpora):
    plan = plan_folds(small_corpora, n_folds=5)
    with pytest.raises(ValueError):
        plan.fold("DE", 6)
    with pytest.raises(KeyError):
        plan.fold("FR", 1)


def test_plan_round_trip(small_corpora, tmp_path):
    plan = plan_folds(small_corpora, n_folds=5)
    path = write_plan(plan, tmp_path / "fold-plan.json")
    assert read_plan(path) == plan


def test_plan_with_overlap_is_rejected(small_corpora, tmp_path):
    plan = plan_folds(small_corpora, n_folds=5)
    data = plan.model_dump()
    data["corpora"]["DE"]["folds"][0]["train"].append("DE05")
    path = tmp_path / "bad-plan.json"
    path.write_text(json.dumps(data))
    with pytest.raises(ConfigError):
        read_plan(path)
