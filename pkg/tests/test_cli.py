import json
import math
from pathlib import Path

import pytest

from crs import perturb as pt
from crs.cli import main
from crs.fixtures import REFERENCE_COMPOSITES
from crs.records import ingest_log

DATA = Path(__file__).parent / "data"
PILLARS = Path(__file__).parents[1] / "src" / "crs" / "data" / "reference_pillars.csv"


@pytest.fixture(scope="module")
def composite_logs(tmp_path_factory):
    out = tmp_path_factory.mktemp("t1")
    assert main(["synth", "--preset", "composite", "--out-dir", str(out)]) == 0
    return [str(out / "composite.jsonl"), str(out / "composite.mc_dropout.jsonl")]


def run(argv, capsys):
    code = main(argv)
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_score_reproduces_reference_composites(composite_logs, capsys, tmp_path):
    code, out, _ = run(["score", *composite_logs, "--format", "structured", "--no-sensitivity"], capsys)
    assert code == 0
    report = json.loads(out)
    crs = {m: v["crs"] for m, v in report["crs"].items()}
    for model_id, _, _, _, printed, _ in REFERENCE_COMPOSITES[:7]:
        assert round(crs[model_id], 2) == pytest.approx(printed, abs=0.005)
    assert round(crs["Gemma 2"], 2) == 0.70


def test_score_table_and_csv(composite_logs, capsys, tmp_path):
    code, out, _ = run(["score", *composite_logs, "--no-sensitivity"], capsys)
    assert code == 0 and "Mistral-8x22B" in out.splitlines()[3]
    code, _, _ = run(["score", *composite_logs, "--format", "csv", "--out-dir", str(tmp_path), "--no-sensitivity"], capsys)
    assert code == 0
    assert (tmp_path / "ranking.csv").read_text().splitlines()[1].startswith("1,Mistral-8x22B")
    assert (tmp_path / "reliability_bins.csv").exists()


def test_empty_log_set_is_usage_error(capsys):
    code, _, err = run(["score"], capsys)
    assert code == 1 and "no prediction logs" in err


def test_bad_log_is_data_error(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"item_id": "a"}\n')
    code, _, err = run(["score", str(bad)], capsys)
    assert code == 2 and "bad.jsonl:1" in err


def test_temperature_source_without_validation(tmp_path, capsys):
    code, _, _ = run(["synth", "--out-dir", str(tmp_path)], capsys)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"c_source": "temperature"}))
    code, _, err = run(["score", str(tmp_path / "synth.jsonl"), "--config", str(cfg)], capsys)
    assert code == 1 and "validation" in err


def test_unknown_option_is_usage_error(capsys):
    assert run(["score", "--bogus"], capsys)[0] == 1


def test_pillar_table_warnings(capsys):
    code, out, err = run(["score", "--pillars", str(PILLARS)], capsys)
    assert code == 0
    assert err.count("warning:") == 3
    assert "Mistral-7B" in err and "0.583" in err


def test_pillar_table_auroc_warning(tmp_path, capsys):
    table = tmp_path / "pillars.csv"
    table.write_text("model_id,c,r,u,auroc\nA,0.9,0.8,0.63,0.878\nB,0.5,0.5,0.5,0.75\n", encoding="utf-8")
    code, _, err = run(["score", "--pillars", str(table)], capsys)
    assert code == 0
    assert err.count("warning:") == 1
    assert "reported U 0.63" in err and "0.756" in err


def test_sensitivity_pillars(capsys):
    code, out, _ = run(["sensitivity", "--pillars", str(PILLARS), "--format", "structured"], capsys)
    assert code == 0
    sens = json.loads(out)
    assert sens["top_invariant"] and sens["bottom_invariant"]
    assert all(r["entries"][0][0] == "Mistral-8x22B" for r in sens["rankings"])
    assert all(r["entries"][-1][0] == "Falcon-7B" for r in sens["rankings"])


def test_sensitivity_single_dataset(tmp_path, capsys):
    run(["synth", "--out-dir", str(tmp_path)], capsys)
    code, _, err = run(["sensitivity", str(tmp_path / "synth.jsonl")], capsys)
    assert code == 2 and "2 datasets" in err


def test_sensitivity_duplicated_datasets(tmp_path, capsys):
    from dataclasses import replace

    from crs.records import write_log
    from crs.synth import SynthConfig, generate_log

    base = []
    for m, k in (("a", 1.0), ("b", 2.0)):
        base += generate_log(
            SynthConfig(n_items=300, miscalibration_exponent=k, drop_per_condition={"typo": 0.05}, model_id=m, seed=1)
        )
    write_log(base + [replace(r, dataset_id="copy") for r in base], tmp_path / "dup.jsonl")
    code, out, _ = run(["sensitivity", str(tmp_path / "dup.jsonl"), "--format", "structured"], capsys)
    assert code == 0
    sens = json.loads(out)
    assert sens["max_deviation"] == 0.0


def test_calibrate_reference_interventions(tmp_path, capsys):
    run(["synth", "--preset", "interventions", "--out-dir", str(tmp_path)], capsys)
    code, out, _ = run(["calibrate", str(tmp_path / "interventions.jsonl"), "--format", "structured"], capsys)
    assert code == 0
    table = json.loads(out)
    assert table["Mistral-8x22B"]["ece_before"] == pytest.approx(0.031, abs=1e-9)
    assert set(table["Falcon-7B"]) == {"ece_before", "temperature", "isotonic"}


def test_perturb_summary_matches_ceil_rule(tmp_path, capsys):
    out = tmp_path / "typo.jsonl"
    code, stdout, _ = run(["perturb", str(DATA / "questions.jsonl"), "--rate", "0.05", "--seed", "3", "--out", str(out)], capsys)
    assert code == 0
    questions = pt.read_questions(DATA / "questions.jsonl")
    eligible = [sum(len(t) >= 4 for t in q.split()) for q in questions.values()]
    edits = sum(math.ceil(round(0.05 * e, 9)) for e in eligible)
    assert f"items: 100  eligible tokens: {sum(eligible)}  edited tokens: {edits}" in stdout
    assert len(pt.read_questions(out)) == 100


def test_perturb_rate_zero_copies(tmp_path, capsys):
    out = tmp_path / "same.jsonl"
    assert run(["perturb", str(DATA / "questions.jsonl"), "--rate", "0", "--out", str(out)], capsys)[0] == 0
    lines = out.read_text().splitlines()
    assert json.loads(lines[0])["_header"]["rate"] == 0.0
    original = [json.loads(x) for x in (DATA / "questions.jsonl").read_text().splitlines()]
    assert [json.loads(x) for x in lines[1:]] == original


def test_perturb_lexicon_needs_file(tmp_path, capsys):
    code, _, err = run(
        ["perturb", str(DATA / "questions.jsonl"), "--kind", "lexicon_substitution", "--out", str(tmp_path / "x")], capsys
    )
    assert code == 1 and "lexicon" in err


def test_perturb_lexicon(tmp_path, capsys):
    out = tmp_path / "lex.jsonl"
    argv = ["perturb", str(DATA / "questions.jsonl"), "--kind", "lexicon_substitution", "--rate", "1"]
    assert run(argv + ["--lexicon", str(DATA / "lexicon.jsonl"), "--out", str(out)], capsys)[0] == 0
    texts = pt.read_questions(out).values()
    assert not any(" important " in t or "primary" in t for t in texts)


def test_synth_round_trip_and_determinism(tmp_path, capsys):
    for d in ("a", "b"):
        assert run(["synth", "--out-dir", str(tmp_path / d), "--seed", "5"], capsys)[0] == 0
    a, b = tmp_path / "a" / "synth.jsonl", tmp_path / "b" / "synth.jsonl"
    assert a.read_bytes() == b.read_bytes()
    assert len(ingest_log(a)) == 1000


def test_synth_k2_targets(tmp_path, capsys):
    cfg = tmp_path / "k2.json"
    cfg.write_text(json.dumps({"n_items": 10, "miscalibration_exponent": 2}))
    assert run(["synth", str(cfg), "--out-dir", str(tmp_path)], capsys)[0] == 0
    targets = json.loads((tmp_path / "synth.targets.json").read_text())["targets"]
    assert targets["expected_accuracy"] == pytest.approx((0.95**3 - 0.05**3) / (3 * 0.9), abs=1e-12)


def test_synth_infeasible_is_config_error(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"miscalibration_exponent": 3, "drop_per_condition": {"typo": 0.9}}))
    assert run(["synth", str(cfg), "--out-dir", str(tmp_path)], capsys)[0] == 1


def test_report_files_are_deterministic(composite_logs, tmp_path, capsys):
    for d, jobs in (("one", "1"), ("many", "4")):
        assert run(["score", *composite_logs, "--format", "structured", "--out-dir", str(tmp_path / d), "--jobs", jobs], capsys)[0] == 0
    assert (tmp_path / "one" / "report.json").read_bytes() == (tmp_path / "many" / "report.json").read_bytes()
