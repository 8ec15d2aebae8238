"""Run reports: assembly from records and rendering as JSON, CSV and text tables."""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import calibration as cal
from .aggregate import (
    ConsistencyWarning,
    CrsResult,
    PillarScores,
    SensitivityReport,
    bootstrap_crs,
    compose_crs,
    leave_one_out,
    rank_results,
    score_pillar_table,
    weight_sensitivity,
)
from .config import RunConfig
from .pipeline import ModelData, collect, measure, pillars_from_metrics
from .records import EvaluationUnit, InsufficientDataError, build_manifest, group_records, primary_records

INSUFFICIENT = "insufficient data"


@dataclass
class RunReport:
    manifest: dict
    config: dict
    calibration: dict = field(default_factory=dict)  # model -> dict or marker
    robustness: dict = field(default_factory=dict)
    uncertainty: dict = field(default_factory=dict)
    crs: dict = field(default_factory=dict)
    interventions: dict = field(default_factory=dict)  # method -> model -> row
    sensitivity: dict | None = None
    warnings: list[str] = field(default_factory=list)
    ece_anchor: float | None = None

    def to_dict(self) -> dict:
        return {
            "manifest": self.manifest,
            "config": self.config,
            "ece_anchor": self.ece_anchor,
            "calibration": self.calibration,
            "robustness": self.robustness,
            "uncertainty": self.uncertainty,
            "crs": self.crs,
            "interventions": self.interventions,
            "sensitivity": self.sensitivity,
            "warnings": self.warnings,
        }

    @property
    def ranking(self) -> list[tuple[str, float]]:
        return rank_results({m: v["crs"] for m, v in self.crs.items() if "crs" in v})


def _calibration_section(units: list[EvaluationUnit], num_bins: int) -> dict:
    per_ds = {}
    for unit in units:
        ev = unit.select("eval")
        if unit.condition == "clean" and ev is not None:
            per_ds[unit.dataset_id] = cal.calibration_report(ev, num_bins)
    if not per_ds:
        return {"status": INSUFFICIENT}
    n = len(per_ds)
    return {
        "ece": sum(r.ece for r in per_ds.values()) / n,
        "brier": sum(r.brier for r in per_ds.values()) / n,
        "nll": sum(r.nll for r in per_ds.values()) / n,
        "per_dataset": {d: r.to_dict() for d, r in sorted(per_ds.items())},
    }


def build_run_report(records, config: RunConfig = RunConfig(), sensitivity: bool = True) -> RunReport:
    """Run every analysis on the records.

    Per-model work may be spread over ``config.jobs`` threads; the result is
    identical to a serial run.
    """
    records = list(records)
    prim = primary_records(records)
    manifest = build_manifest(prim)
    data = collect(records)
    units_by_model: dict = {m: [] for m in manifest.models}
    for unit in group_records(prim):
        units_by_model[unit.model_id].append(unit)

    def per_model(model_id):
        return measure(data[model_id], config), _calibration_section(units_by_model[model_id], config.num_bins)

    models = list(manifest.models)
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(per_model, models))
    else:
        results = [per_model(m) for m in models]
    metrics = {m: r[0] for m, r in zip(models, results)}

    report = RunReport(manifest=manifest.to_dict(), config=config.to_dict())
    pillars = pillars_from_metrics(metrics, config)
    from .pipeline import ece_anchor

    report.ece_anchor = ece_anchor(metrics, config)
    for m, (mm, calib) in zip(models, results):
        report.calibration[m] = calib
        if mm.ece_calibrated is not None:
            calib[f"ece_{config.c_source}"] = mm.ece_calibrated
        if mm.robustness is None:
            report.robustness[m] = {"status": INSUFFICIENT}
        else:
            report.robustness[m] = mm.robustness.to_dict()
            if mm.robustness.raw_r > 1.0:
                report.warnings.append(
                    f"{m}: perturbation raised accuracy (raw R {mm.robustness.raw_r:.4f}); R clamped to 1"
                )
        if mm.best_auroc is None:
            report.uncertainty[m] = {"status": INSUFFICIENT}
        else:
            report.uncertainty[m] = {
                "per_source": {s: a for s, a in mm.source_auroc.items()},
                "per_dataset": {f"{d}/{s}": a for (d, s), a in sorted(mm.source_auroc_per_dataset.items())},
                "best_source": mm.best_source,
                "best_auroc": mm.best_auroc,
                "u_score": pillars[m].u,
            }
            if mm.best_auroc < 0.5:
                report.warnings.append(f"{m}: best AUROC {mm.best_auroc:.4f} below chance; U clamped to 0")
        p = pillars[m]
        if not p.complete:
            report.crs[m] = {"status": INSUFFICIENT, "problems": list(mm.problems)}
            report.warnings.append(f"{m}: insufficient data for CRS ({'; '.join(mm.problems)})")
            continue
        report.crs[m] = compose_crs(PillarScores(p.c, p.r, p.u), config.weights, m).to_dict()

    scored = {m: v for m, v in report.crs.items() if "crs" in v}
    if config.bootstrap_n > 0 and scored:
        boot = bootstrap_crs({m: data[m] for m in scored}, config)
        for m, b in boot.items():
            scored[m].update(
                ci_low=b.ci_low, ci_high=b.ci_high, bootstrap_std=b.std, bootstrap_degenerate=b.n_degenerate
            )

    has_validation = any(md.clean_val for md in data.values())
    if has_validation:
        for method in cal.INTERVENTIONS:
            try:
                rows = cal.calibration_intervention_report(
                    [u for us in units_by_model.values() for u in us], method, config.num_bins
                )
            except cal.MissingSplitError as exc:
                report.warnings.append(f"{method} intervention skipped: {exc}")
                continue
            report.interventions[method] = {
                r.model_id: {"ece_before": r.ece_before, "ece_after": r.ece_after} for r in rows
            }

    if sensitivity:
        report.sensitivity = run_sensitivity(data, scored, config).to_dict()
    return report


def run_sensitivity(data: dict[str, ModelData], scored: dict, config: RunConfig) -> SensitivityReport:
    rep = SensitivityReport()
    pillars = {m: PillarScores(v["c"], v["r"], v["u"]) for m, v in scored.items()}
    if len(pillars) >= 2 and config.weightings:
        rep = weight_sensitivity(pillars, config.weightings)
    datasets = {d for md in data.values() for d in md.datasets}
    if len(datasets) >= 2:
        rep = leave_one_out(data, config, rep)
    return rep


def pillar_table_report(rows, config: RunConfig = RunConfig()):
    """(results, warnings, sensitivity) for a supplied pillar table."""
    results, warnings = score_pillar_table(rows, config.weights)
    sens = None
    if len(results) >= 2 and config.weightings:
        sens = weight_sensitivity({r.model_id: r.pillars for r in results}, config.weightings)
    return results, warnings, sens


def read_pillar_table(path) -> list[dict]:
    """CSV with columns model_id, c, r, u and optional crs and auroc."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise InsufficientDataError(f"{path}: empty pillar table")
    missing = {"model_id", "c", "r", "u"} - set(rows[0])
    if missing:
        raise ValueError(f"{path}: pillar table lacks column(s) {sorted(missing)}")
    return rows


# -- rendering -----------------------------------------------------------------


def to_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _fmt(x, digits):
    return "-" if x is None else f"{x:.{digits}f}"


def _table(header, rows) -> str:
    cells = [header] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = []
    for k, r in enumerate(cells):
        lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))))
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def ranking_rows(report: RunReport):
    rows = []
    for m, _ in report.ranking:
        v = report.crs[m]
        ci = "-" if v.get("ci_low") is None else f"[{v['ci_low']:.2f}, {v['ci_high']:.2f}]"
        rows.append([m, _fmt(v["c"], 2), _fmt(v["r"], 2), _fmt(v["u"], 2), _fmt(v["crs"], 2), v["tier"].title(), ci])
    for m, v in sorted(report.crs.items()):
        if "crs" not in v:
            rows.append([m, "-", "-", "-", "-", INSUFFICIENT, "-"])
    return rows


RANKING_HEADER = ["Model", "Calibration (C)", "Robustness (R)", "Uncertainty (U)", "CRS", "Tier", "95% CI"]


def render_table(report: RunReport) -> str:
    out = ["Composite Reliability Score ranking\n", _table(RANKING_HEADER, ranking_rows(report)), "\n"]
    cal_rows = [
        [m, _fmt(v.get("ece"), 3), _fmt(v.get("brier"), 3), _fmt(v.get("nll"), 3)]
        for m, v in sorted(report.calibration.items(), key=lambda kv: (kv[1].get("ece", float("inf")), kv[0]))
    ]
    out += ["Baseline calibration (averaged over datasets)\n", _table(["Model", "Avg. ECE", "Avg. Brier", "Avg. NLL"], cal_rows), "\n"]
    uq_rows = []
    for m, v in sorted(report.uncertainty.items(), key=lambda kv: (-kv[1].get("best_auroc", -1), kv[0])):
        if "best_auroc" in v:
            uq_rows.append([m, v["best_source"], _fmt(v["best_auroc"], 3)])
        else:
            uq_rows.append([m, INSUFFICIENT, "-"])
    out += ["Error-detection AUROC (better source)\n", _table(["Model", "Best UQ Method", "Avg. AUROC"], uq_rows), "\n"]
    rob_rows = []
    for m, v in sorted(report.robustness.items()):
        if "r_score" in v:
            rob_rows.append([m, _fmt(v["avg_clean_accuracy"], 3), _fmt(v["avg_drop"], 3), _fmt(v["r_score"], 2)])
        else:
            rob_rows.append([m, INSUFFICIENT, "-", "-"])
    out += ["Robustness\n", _table(["Model", "Avg. Acc clean", "Avg. drop", "R"], rob_rows), "\n"]
    if report.interventions:
        models = sorted({m for rows in report.interventions.values() for m in rows})
        methods = list(report.interventions)
        rows = []
        for m in models:
            base = next(report.interventions[k][m]["ece_before"] for k in methods if m in report.interventions[k])
            rows.append([m, _fmt(base, 3)] + [_fmt(report.interventions[k].get(m, {}).get("ece_after"), 3) for k in methods])
        header = ["Model", "ECE (Baseline)"] + [{"temperature": "Temp. Scaling", "isotonic": "Isotonic Reg."}[k] for k in methods]
        out += ["Calibration interventions (ECE)\n", _table(header, rows), "\n"]
    if report.sensitivity:
        out.append(render_sensitivity(report.sensitivity))
    if report.warnings:
        out.append("Warnings\n")
        out += [f"  - {w}\n" for w in report.warnings]
    return "".join(out)


def render_sensitivity(sens: dict) -> str:
    out = []
    for r in sens.get("rankings", []):
        rows = [[i + 1, m, f"{c:.4f}"] for i, (m, c) in enumerate(r["entries"])]
        out += [f"Ranking under weights {r['weights']}\n", _table(["Rank", "Model", "CRS"], rows), "\n"]
    if sens.get("rankings"):
        out.append(f"Top-1 invariant: {sens['top_invariant']}; bottom-1 invariant: {sens['bottom_invariant']}\n\n")
    loo = sens.get("leave_one_out") or {}
    if loo:
        models = sorted({m for v in loo.values() for m in v})
        rows = [[m] + [_fmt(loo[d].get(m), 4) for d in sorted(loo)] for m in models]
        out += ["Leave-one-dataset-out |CRS deviation|\n", _table(["Model"] + sorted(loo), rows)]
        out.append(
            f"average deviation {_fmt(sens['average_deviation'], 4)}, max {_fmt(sens['max_deviation'], 4)}, "
            f"tier changes {len(sens['tier_changes'])}\n"
        )
        for t in sens["tier_changes"]:
            out.append(f"  - without {t['dataset_id']}: {t['model_id']} {t['tier_full']} -> {t['tier_without']}\n")
        out.append("\n")
    return "".join(out)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def render_csv(report: RunReport) -> dict[str, str]:
    """File name -> CSV text."""
    files = {}
    rank = []
    for i, (m, _) in enumerate(report.ranking, start=1):
        v = report.crs[m]
        rank.append([i, m, repr(v["c"]), repr(v["r"]), repr(v["u"]), repr(v["crs"]), v["tier"],
                     "" if v.get("ci_low") is None else repr(v["ci_low"]),
                     "" if v.get("ci_high") is None else repr(v["ci_high"])])
    files["ranking.csv"] = _csv(["rank", "model_id", "c", "r", "u", "crs", "tier", "ci_low", "ci_high"], rank)
    files["calibration.csv"] = _csv(
        ["model_id", "ece", "brier", "nll"],
        [[m, repr(v["ece"]), repr(v["brier"]), repr(v["nll"])] for m, v in sorted(report.calibration.items()) if "ece" in v],
    )
    bins = []
    for m, v in sorted(report.calibration.items()):
        for d, r in v.get("per_dataset", {}).items():
            for b in r["bins"]:
                bins.append([m, d, repr(b["lower"]), repr(b["upper"]), b["count"], repr(b["mean_confidence"]), repr(b["accuracy"])])
    files["reliability_bins.csv"] = _csv(
        ["model_id", "dataset_id", "lower", "upper", "count", "mean_confidence", "accuracy"], bins
    )
    rob = []
    for m, v in sorted(report.robustness.items()):
        for c in v.get("cells", []):
            rob.append([m, c["dataset_id"], c["condition"], repr(c["clean_accuracy"]), repr(c["perturbed_accuracy"]), repr(c["drop"])])
    files["robustness.csv"] = _csv(
        ["model_id", "dataset_id", "condition", "clean_accuracy", "perturbed_accuracy", "drop"], rob
    )
    uq = []
    for m, v in sorted(report.uncertainty.items()):
        for s, a in sorted(v.get("per_source", {}).items()):
            uq.append([m, s, "" if a is None else repr(a), s == v["best_source"]])
    files["uncertainty.csv"] = _csv(["model_id", "source", "auroc", "best"], uq)
    if report.interventions:
        rows = []
        for method, per in sorted(report.interventions.items()):
            for m, r in sorted(per.items()):
                rows.append([m, method, repr(r["ece_before"]), repr(r["ece_after"])])
        files["interventions.csv"] = _csv(["model_id", "method", "ece_before", "ece_after"], rows)
    return files


def render_pillar_table(results: list[CrsResult], warnings: list[ConsistencyWarning], sens) -> str:
    order = rank_results({r.model_id: r.crs for r in results})
    by_id = {r.model_id: r for r in results}
    rows = []
    for m, _ in order:
        r = by_id[m]
        rows.append([m, _fmt(r.pillars.c, 2), _fmt(r.pillars.r, 2), _fmt(r.pillars.u, 2), r.display, r.tier.title(), "-"])
    out = ["Composite Reliability Score ranking\n", _table(RANKING_HEADER, rows), "\n"]
    if sens is not None:
        out.append(render_sensitivity(sens.to_dict()))
    if warnings:
        out.append("Warnings\n")
        out += [f"  - {w.message}\n" for w in warnings]
    return "".join(out)
