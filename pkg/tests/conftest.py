import pytest

from crs.records import EvaluationUnit, PredictionRecord


def make_unit(confidences, correct, model_id="m", dataset_id="d", condition="clean", split="eval", prefix="i"):
    recs = [
        PredictionRecord(f"{prefix}{k:04d}", dataset_id, model_id, condition, float(c), bool(y), split)
        for k, (c, y) in enumerate(zip(confidences, correct))
    ]
    return EvaluationUnit.from_records(recs)


def accuracy_unit(n_correct, n, **kw):
    return make_unit([0.5] * n, [k < n_correct for k in range(n)], **kw)


@pytest.fixture
def unit_factory():
    return make_unit


SHARES = {"typo": 0.6, "paraphrase": 0.9, "adversarial": 1.5}


def synth_model(model_id, k=1.0, drop=0.1, sep=0.004, n=1000, datasets=3, seed=0, width=0.01, **kw):
    """Synthetic log for one model; ``drop`` is the mean accuracy drop over conditions."""
    from crs.synth import SynthConfig, generate_log

    cfg = SynthConfig(
        n_items=n,
        n_datasets=datasets,
        miscalibration_exponent=k,
        drop_per_condition={c: s * drop for c, s in SHARES.items()},
        uq_separation=sep,
        uq_width=width,
        seed=seed,
        model_id=model_id,
        **kw,
    )
    return generate_log(cfg)


def rename_dataset(records, dataset_id):
    from dataclasses import replace

    return [replace(r, dataset_id=dataset_id) for r in records]


ACCEPTANCE_LINES = []


def record_criterion(number, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2} ({title}): {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
