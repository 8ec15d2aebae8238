import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import accuracy_unit
from crs import robustness as rb
from crs.records import InsufficientDataError


def pair(clean_correct, pert_correct, n=100, dataset="d", condition="typo", model="m"):
    return (
        accuracy_unit(clean_correct, n, dataset_id=dataset, model_id=model),
        accuracy_unit(pert_correct, n, dataset_id=dataset, condition=condition, model_id=model),
    )


def test_accuracy_examples():
    assert rb.accuracy(accuracy_unit(3, 4)) == 0.75
    assert rb.accuracy(accuracy_unit(4, 4)) == 1.0
    assert rb.accuracy(accuracy_unit(0, 4)) == 0.0


def test_accuracy_drop_examples():
    assert rb.accuracy_drop(*pair(80, 72)) == pytest.approx(0.08, abs=1e-12)
    assert rb.accuracy_drop(*pair(80, 80)) == 0.0
    assert rb.accuracy_drop(*pair(80, 85)) == pytest.approx(-0.05, abs=1e-12)


def test_drop_rejects_mismatched_units():
    with pytest.raises(ValueError):
        rb.accuracy_drop(accuracy_unit(1, 2, dataset_id="a"), accuracy_unit(1, 2, dataset_id="b", condition="typo"))


def test_retention_examples():
    br = rb.robustness_score([pair(80, 72)])
    assert br.avg_clean_accuracy == pytest.approx(0.80)
    assert br.avg_drop == pytest.approx(0.08)
    assert br.r_score == pytest.approx(0.90, abs=1e-12)
    assert rb.robustness_score([pair(80, 80)]).r_score == 1.0
    gain = rb.robustness_score([pair(80, 85)])
    assert gain.r_score == 1.0 and gain.raw_r > 1.0


def test_retention_needs_nonzero_clean_accuracy():
    with pytest.raises(InsufficientDataError):
        rb.robustness_score([pair(0, 0)])


def test_worst_condition_dominates_drop():
    cells = [pair(80, 78, condition="typo"), pair(80, 76, condition="paraphrase"), pair(80, 56, condition="adversarial")]
    br = rb.robustness_score(cells)
    worst = max(br.per_cell.items(), key=lambda kv: kv[1].drop)
    assert worst[0] == ("d", "adversarial")
    assert br.avg_drop == pytest.approx(0.10)
    assert br.r_score == pytest.approx(0.875)


def test_dataset_mode_averages_within_dataset_first():
    cells = [
        pair(80, 70, dataset="a", condition="typo"),
        pair(80, 60, dataset="a", condition="adversarial"),
        pair(80, 78, dataset="b", condition="typo"),
    ]
    assert rb.robustness_score(cells, "cells").avg_drop == pytest.approx((0.10 + 0.20 + 0.02) / 3)
    assert rb.robustness_score(cells, "datasets").avg_drop == pytest.approx((0.15 + 0.02) / 2)
    with pytest.raises(ValueError):
        rb.robustness_score(cells, "items")


def test_pair_cells_matches_by_dataset():
    c, p = pair(8, 7, n=10)
    pairs = rb.pair_cells([p, c])
    assert pairs == [(c, p)]


def test_breakdown_csv():
    text = rb.robustness_score([pair(80, 72)]).to_csv()
    assert text.splitlines()[0].startswith("dataset_id,condition")


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 20), st.integers(0, 20)), min_size=1, max_size=4), st.integers(2, 3))
def test_duplicating_cells_leaves_r_unchanged(spec, times):
    cells = [pair(c, min(p, 20), n=20, dataset=f"d{i}") for i, (c, p) in enumerate(spec)]
    once = rb.robustness_score(cells)
    clean = {d: a for d, a in ((k[0], v.clean_accuracy) for k, v in once.per_cell.items())}
    dup = rb.robustness_from_accuracies(
        {f"{d}-{j}": a for j in range(times) for d, a in clean.items()},
        {(f"{d}-{j}", c): v.perturbed_accuracy for j in range(times) for (d, c), v in once.per_cell.items()},
    )
    assert dup.r_score == pytest.approx(once.r_score, abs=1e-12)
    assert 0.0 <= once.r_score <= 1.0
