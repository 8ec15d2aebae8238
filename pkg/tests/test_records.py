import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crs.records import (
    EvaluationUnit,
    LogFormatError,
    PredictionRecord,
    build_manifest,
    group_records,
    ingest_log,
    merge_logs,
    primary_records,
    write_log,
)


def line(**kw):
    base = {"item_id": "q1", "dataset_id": "d", "model_id": "m", "condition": "clean", "confidence": 0.7, "correct": True}
    base.update(kw)
    return json.dumps(base)


def write_lines(tmp_path, lines, name="log.jsonl"):
    p = tmp_path / name
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return p


def test_three_valid_lines(tmp_path):
    p = write_lines(tmp_path, [line(item_id="a"), line(item_id="b", correct=False), line(item_id="c", split="validation")])
    recs = ingest_log(p)
    assert [r.item_id for r in recs] == ["a", "b", "c"]
    assert recs[0].split == "eval"
    assert recs[2].split == "validation"


def test_out_of_range_confidence_names_line_and_field(tmp_path):
    p = write_lines(tmp_path, [line(item_id="a"), line(item_id="b", confidence=1.2)])
    with pytest.raises(LogFormatError) as exc:
        ingest_log(p)
    assert exc.value.line == 2
    assert "confidence" in str(exc.value)
    assert ":2:" in str(exc.value)


def test_duplicate_key_rejected(tmp_path):
    p = write_lines(tmp_path, [line(confidence=0.2), line(confidence=0.9)])
    with pytest.raises(LogFormatError, match="duplicate"):
        ingest_log(p)


def test_same_item_different_condition_is_fine(tmp_path):
    p = write_lines(tmp_path, [line(), line(condition="typo")])
    assert len(ingest_log(p)) == 2


@pytest.mark.parametrize(
    "bad, reason",
    [
        ('{"item_id": "q1"', "invalid JSON"),
        (line(extra=1), "unknown field"),
        (json.dumps({"item_id": "q1", "dataset_id": "d", "model_id": "m", "condition": "clean", "correct": True}), "missing"),
        (line(condition="noisy"), "condition"),
        (line(correct=1), "correct"),
        (line(confidence=True), "confidence"),
        (line(samples=[0.1, 0.2]), "sample_source"),
        (line(samples=[0.1, 1.5], sample_source="ensemble"), "samples"),
        (line(samples=[0.1], sample_source="bagging"), "sample_source"),
        (line(split="test"), "split"),
        (line(item_id=""), "item_id"),
    ],
)
def test_malformed_line_rejects_whole_file(tmp_path, bad, reason):
    p = write_lines(tmp_path, [line(item_id="ok"), bad])
    with pytest.raises(LogFormatError, match=reason) as exc:
        ingest_log(p)
    assert exc.value.line == 2


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        ingest_log(tmp_path / "nope.jsonl")


def test_blank_lines_skipped(tmp_path):
    p = tmp_path / "log.jsonl"
    p.write_text(line(item_id="a") + "\n\n" + line(item_id="b") + "\n")
    assert len(ingest_log(p)) == 2


def _recs(n_models=2, n_items=3, conditions=("clean",)):
    return [
        PredictionRecord(f"q{i}", "d", f"m{m}", c, 0.5, bool(i % 2))
        for m in range(n_models)
        for c in conditions
        for i in range(n_items)
    ]


def test_group_two_models():
    units = group_records(_recs())
    assert [u.model_id for u in units] == ["m0", "m1"]
    assert all(len(u) == 3 for u in units)


def test_group_empty():
    assert group_records([]) == []


def test_group_shuffled_by_condition():
    recs = _recs(n_models=1, n_items=5, conditions=("clean", "typo"))
    shuffled = recs[:]
    random.Random(3).shuffle(shuffled)
    units = group_records(shuffled)
    assert [u.condition for u in units] == ["clean", "typo"]
    assert units == group_records(recs)
    for u in units:
        assert [r.item_id for r in u.records] == sorted(r.item_id for r in u.records)


def test_unit_rejects_mixed_records():
    a = PredictionRecord("a", "d", "m", "clean", 0.5, True)
    b = PredictionRecord("b", "d", "other", "clean", 0.5, True)
    with pytest.raises(ValueError):
        EvaluationUnit("m", "d", "clean", (a, b))
    with pytest.raises(ValueError):
        EvaluationUnit("m", "d", "clean", ())


def test_manifest_counts():
    recs = _recs(n_models=2, n_items=5)
    man = build_manifest(recs)
    assert man.models == ("m0", "m1")
    assert man.counts[("m0", "d", "clean")] == 5
    assert man.total == 10


def test_manifest_marks_absent_condition():
    recs = _recs(n_models=1, conditions=("clean", "typo")) + [
        PredictionRecord("q0", "d", "m9", "clean", 0.5, True)
    ]
    man = build_manifest(recs)
    assert man.has("m0", "d", "typo")
    assert not man.has("m9", "d", "adversarial")
    assert not man.has("m0", "d", "adversarial")


def test_manifest_round_trip(tmp_path):
    recs = _recs(n_models=2, n_items=4, conditions=("clean", "adversarial"))
    write_log(recs, tmp_path / "a.jsonl")
    again = ingest_log(tmp_path / "a.jsonl")
    assert build_manifest(again) == build_manifest(recs)


def test_merge_logs_across_sources():
    a = PredictionRecord("q", "d", "m", "clean", 0.6, True, samples=(0.5, 0.7, 0.6), sample_source="ensemble")
    b = PredictionRecord("q", "d", "m", "clean", 0.6, True, samples=(0.5, 0.7), sample_source="mc_dropout")
    merged = merge_logs([[a], [b]])
    assert merged == [a, b]
    assert primary_records(merged) == [a]
    c = PredictionRecord("q", "d", "m", "clean", 0.9, True, samples=(0.5, 0.7), sample_source="mc_dropout")
    with pytest.raises(LogFormatError, match="disagree"):
        merge_logs([[a], [c]])
    with pytest.raises(LogFormatError, match="duplicate"):
        merge_logs([[a], [a]])


ids = st.text(alphabet="abcxyz019-_", min_size=1, max_size=6)
records = st.builds(
    PredictionRecord,
    item_id=ids,
    dataset_id=st.sampled_from(["d1", "d2"]),
    model_id=st.sampled_from(["m1", "m2", "m3"]),
    condition=st.sampled_from(["clean", "typo", "paraphrase", "adversarial"]),
    confidence=st.floats(0, 1),
    correct=st.booleans(),
    split=st.sampled_from(["eval", "validation"]),
    samples=st.none() | st.lists(st.floats(0, 1), min_size=2, max_size=5).map(tuple),
    sample_source=st.sampled_from(["mc_dropout", "ensemble"]),
)
record_sets = st.lists(records, max_size=30, unique_by=lambda r: r.key)


@settings(max_examples=50, deadline=None)
@given(record_sets)
def test_serialization_round_trip(tmp_path_factory, recs):
    path = tmp_path_factory.mktemp("rt") / "log.jsonl"
    write_log(recs, path)
    assert ingest_log(path) == recs


@settings(max_examples=50, deadline=None)
@given(record_sets, st.randoms())
def test_grouping_is_permutation_invariant(recs, rnd):
    shuffled = recs[:]
    rnd.shuffle(shuffled)
    units = group_records(shuffled)
    assert units == group_records(recs)
    assert sum(len(u) for u in units) == len(recs)
