"""Command-line entry point: ``crs {score,sensitivity,calibrate,perturb,synth}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data validation
error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import calibration as cal
from . import perturb as pt
from .config import ConfigError, RunConfig, load_config
from .records import InsufficientDataError, LogFormatError, group_records, ingest_log, merge_logs, primary_records
from .report import (
    build_run_report,
    pillar_table_report,
    read_pillar_table,
    render_csv,
    render_pillar_table,
    render_sensitivity,
    render_table,
    run_sensitivity,
    to_json,
)
from .synth import InfeasibleConfigError, SynthConfig, write_synth

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    return config.with_overrides(bootstrap_seed=args.seed, jobs=args.jobs)


def _records(paths):
    if not paths:
        raise UsageError("no prediction logs given")
    return merge_logs([ingest_log(p) for p in paths])


def _emit(args, files: dict[str, str], stdout_key: str):
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in sorted(files.items()):
            (out / name).write_text(text, encoding="utf-8", newline="\n")
            print(f"wrote {out / name}")
    else:
        sys.stdout.write(files[stdout_key])


def cmd_score(args) -> int:
    config = _config(args)
    if args.pillars:
        results, warnings, sens = pillar_table_report(read_pillar_table(args.pillars), config)
        structured = {
            "crs": {r.model_id: r.to_dict() for r in results},
            "warnings": [w.message for w in warnings],
            "sensitivity": sens.to_dict() if sens else None,
        }
        table = render_pillar_table(results, warnings, sens)
        for w in warnings:
            print(f"warning: {w.message}", file=sys.stderr)
        files = {"report.json": to_json(structured), "report.txt": table}
        key = "report.json" if args.format == "structured" else "report.txt"
        _emit(args, files if args.format != "csv" else {"report.txt": table}, key)
        return EXIT_OK
    report = build_run_report(_records(args.logs), config, sensitivity=not args.no_sensitivity)
    if args.format == "structured":
        files = {"report.json": to_json(report.to_dict())}
        key = "report.json"
    elif args.format == "csv":
        files = render_csv(report)
        key = "ranking.csv"
    else:
        files = {"report.txt": render_table(report)}
        key = "report.txt"
    _emit(args, files, key)
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    config = _config(args)
    if len(config.weightings) < 2:
        raise ConfigError("weight sensitivity needs at least 2 weightings")
    if args.pillars:
        _, _, sens = pillar_table_report(read_pillar_table(args.pillars), config)
        if sens is None:
            raise InsufficientDataError("weight sensitivity needs at least 2 models")
    else:
        records = _records(args.logs)
        from .aggregate import score_data
        from .pipeline import collect

        data = collect(records)
        datasets = {d for md in data.values() for d in md.datasets}
        if len(datasets) < 2:
            raise InsufficientDataError(f"leave-one-out needs at least 2 datasets, found {len(datasets)}")
        _, scores = score_data(data, config)
        scored = {m: s.result.to_dict() for m, s in scores.items() if s.result is not None}
        sens = run_sensitivity(data, scored, config)
    structured = sens.to_dict()
    files = {"sensitivity.json": to_json(structured), "sensitivity.txt": render_sensitivity(structured)}
    _emit(args, files, "sensitivity.json" if args.format == "structured" else "sensitivity.txt")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    config = _config(args)
    units = group_records(primary_records(_records(args.logs)))
    methods = cal.INTERVENTIONS if args.method == "both" else (args.method,)
    table = {}
    for method in methods:
        for row in cal.calibration_intervention_report(units, method, config.num_bins):
            table.setdefault(row.model_id, {"ece_before": row.ece_before})[method] = row.ece_after
    from .report import _csv, _fmt, _table

    names = {"temperature": "Temp. Scaling", "isotonic": "Isotonic Reg."}
    rows = [[m, _fmt(v["ece_before"], 3)] + [_fmt(v[k], 3) for k in methods] for m, v in sorted(table.items())]
    files = {
        "interventions.json": to_json(table),
        "interventions.csv": _csv(
            ["model_id", "ece_before"] + [f"ece_{k}" for k in methods],
            [[m, repr(v["ece_before"])] + [repr(v[k]) for k in methods] for m, v in sorted(table.items())],
        ),
        "interventions.txt": _table(["Model", "ECE (Baseline)"] + [names[k] for k in methods], rows),
    }
    key = {"structured": "interventions.json", "csv": "interventions.csv"}.get(args.format, "interventions.txt")
    _emit(args, files, key)
    return EXIT_OK


def cmd_perturb(args) -> int:
    lexicon = None
    if args.kind == "lexicon_substitution":
        if not args.lexicon:
            raise ConfigError("lexicon substitution needs --lexicon")
        lexicon = pt.read_lexicon(args.lexicon)
    seed = args.seed if args.seed is not None else 0
    spec = pt.PerturbationSpec(args.kind, args.rate, seed, lexicon)
    questions = pt.read_questions(args.questions)
    items = [pt.perturb(text, spec, item_id) for item_id, text in questions.items()]
    header = {"kind": spec.kind, "rate": spec.rate, "seed": spec.seed, "source": Path(args.questions).name}
    pt.write_questions(((it.item_id, it.perturbed_text) for it in items), args.out, header)
    eligible = sum(pt.eligible_count(q, spec) for q in questions.values())
    edits = sum(len(it.edits) for it in items)
    changed = sum(1 for it in items if it.edits)
    print(f"items: {len(items)}  eligible tokens: {eligible}  edited tokens: {edits}  items edited: {changed}")
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.preset:
        from . import fixtures
        from .records import write_log

        out = Path(args.out_dir)
        name = args.name or args.preset
        if args.preset == "composite":
            main_log, dropout_log = fixtures.composite_logs()
            paths = [out / f"{name}.jsonl", out / f"{name}.mc_dropout.jsonl"]
            write_log(main_log, paths[0])
            write_log(dropout_log, paths[1])
        else:
            paths = [out / f"{name}.jsonl"]
            write_log(fixtures.intervention_log(), paths[0])
        for path in paths:
            print(f"wrote {path}")
        return EXIT_OK
    obj = {}
    if args.config:
        obj = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if args.seed is not None:
        obj["seed"] = args.seed
    config = SynthConfig.from_dict(obj)
    log_path, targets_path = write_synth(config, args.out_dir, args.name or "synth")
    print(f"wrote {log_path}")
    print(f"wrote {targets_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crs", description="Composite reliability scoring of prediction logs.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, logs=True):
        if logs:
            p.add_argument("logs", nargs="*", help="prediction log files (JSON lines)")
        p.add_argument("--config", help="run configuration (JSON or YAML)")
        p.add_argument("--out-dir", help="write report files here instead of printing")
        p.add_argument("--format", choices=("table", "csv", "structured"), default="table")
        p.add_argument("--seed", type=int, help="override the bootstrap seed")
        p.add_argument("--jobs", type=int, help="worker threads for per-model and bootstrap work")

    p = sub.add_parser("score", help="full pipeline and ranking report")
    common(p)
    p.add_argument("--pillars", help="score a CSV of supplied pillar columns instead of logs")
    p.add_argument("--no-sensitivity", action="store_true", help="skip weight and leave-one-out analyses")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("sensitivity", help="weight sweep and leave-one-dataset-out analysis")
    common(p)
    p.add_argument("--pillars", help="run the weight sweep on a CSV of pillar columns")
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("calibrate", help="ECE before and after temperature / isotonic recalibration")
    common(p)
    p.add_argument("--method", choices=("temperature", "isotonic", "both"), default="both")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("perturb", help="write perturbed copies of a question file")
    p.add_argument("questions", help="question file: JSON lines with item_id and text")
    p.add_argument("--kind", choices=pt.KINDS, default="typo")
    p.add_argument("--rate", type=float, default=0.05)
    p.add_argument("--seed", type=int)
    p.add_argument("--lexicon", help="lexicon file: JSON lines with word and substitutes")
    p.add_argument("--out", required=True, help="output question file")
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("synth", help="write a synthetic prediction log and its closed-form targets")
    p.add_argument("config", nargs="?", help="synthetic generator configuration (JSON)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--name", help="output file stem (default: synth, or the preset name)")
    p.add_argument("--seed", type=int)
    p.add_argument("--preset", choices=("composite", "interventions"), help="write a reference fixture instead")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ConfigError, cal.MissingSplitError, InfeasibleConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LogFormatError, pt.PerturbationError, InsufficientDataError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AssertionError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
