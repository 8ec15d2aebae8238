"""Composite reliability scoring (calibration, robustness, uncertainty) of prediction logs."""

from .aggregate import (
    CrsResult,
    PillarScores,
    assign_tier,
    bootstrap_crs,
    compose_crs,
    leave_one_out,
    normalize_c,
    score_pillar_table,
    score_records,
    weight_sensitivity,
)
from .calibration import (
    apply_isotonic,
    apply_temperature,
    calibration_intervention_report,
    calibration_report,
    compute_brier,
    compute_ece,
    compute_nll,
    fit_isotonic,
    fit_temperature,
)
from .config import BALANCED, CALIBRATION_FOCUSED, STANDARD_WEIGHTINGS, ROBUSTNESS_FOCUSED, RunConfig, Weights, load_config
from .perturb import PerturbationSpec, ingest_external_variants, perturb_lexicon, perturb_typo
from .records import (
    EvaluationUnit,
    PredictionRecord,
    build_manifest,
    group_records,
    ingest_log,
    merge_logs,
    write_log,
)
from .report import build_run_report
from .robustness import accuracy, accuracy_drop, robustness_score
from .synth import SynthConfig, closed_form_targets, generate_log
from .uncertainty import auroc, normalize_u, uq_report, variance_score

__version__ = "0.1.0"
