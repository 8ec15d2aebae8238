"""Calibration metrics (ECE, Brier, NLL) and post-hoc recalibration maps."""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import asdict, dataclass
from statistics import fmean
from typing import Iterable, Sequence

import numpy as np

from .records import EvaluationUnit

DEFAULT_BINS = 10
EPSILON = 1e-12
LOG_T_BOUNDS = (-5.0, 5.0)
LOG_T_TOL = 1e-4
INTERVENTIONS = ("temperature", "isotonic")


class MissingSplitError(ValueError):
    """A recalibration step needs validation records that are not there."""


@dataclass(frozen=True)
class BinStat:
    lower: float
    upper: float
    count: int
    mean_confidence: float
    accuracy: float


@dataclass(frozen=True)
class CalibrationReport:
    ece: float
    brier: float
    nll: float
    bins: tuple[BinStat, ...]
    n: int

    def to_dict(self) -> dict:
        return {
            "ece": self.ece,
            "brier": self.brier,
            "nll": self.nll,
            "n": self.n,
            "bins": [asdict(b) for b in self.bins],
        }

    def bins_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["lower", "upper", "count", "mean_confidence", "accuracy"])
        for b in self.bins:
            writer.writerow([repr(b.lower), repr(b.upper), b.count, repr(b.mean_confidence), repr(b.accuracy)])
        return buf.getvalue()


@dataclass(frozen=True)
class TemperatureModel:
    temperature: float
    validation_nll_before: float
    validation_nll_after: float
    degenerate: bool = False

    def __call__(self, confidence):
        return apply_temperature(self, confidence)


@dataclass(frozen=True)
class IsotonicModel:
    breakpoints: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.breakpoints) != len(self.values) or not self.breakpoints:
            raise ValueError("breakpoints and values must be non-empty and of equal length")
        if any(b >= a for a, b in zip(self.breakpoints[1:], self.breakpoints)):
            raise ValueError("breakpoints must be strictly increasing")
        if any(b > a for a, b in zip(self.values[1:], self.values)):
            raise ValueError("values must be non-decreasing")

    def __call__(self, confidence):
        return apply_isotonic(self, confidence)


def _arrays(unit_or_conf, correct=None):
    if isinstance(unit_or_conf, EvaluationUnit):
        return unit_or_conf.confidences, unit_or_conf.correct.astype(float)
    conf = np.asarray(unit_or_conf, dtype=float)
    return conf, np.asarray(correct, dtype=float)


def bin_indices(confidences, num_bins: int = DEFAULT_BINS) -> np.ndarray:
    """Equal-width bins [k/B, (k+1)/B); the last bin is closed at 1."""
    conf = np.asarray(confidences, dtype=float)
    return np.minimum(np.floor(conf * num_bins).astype(np.int64), num_bins - 1)


def expected_calibration_error(confidences, correct, num_bins: int = DEFAULT_BINS):
    """ECE and the per-bin reliability table from raw arrays."""
    if num_bins < 1:
        raise ValueError("num_bins must be >= 1")
    conf = np.asarray(confidences, dtype=float)
    acc = np.asarray(correct, dtype=float)
    n = conf.size
    if n == 0:
        raise ValueError("cannot compute ECE of an empty unit")
    idx = bin_indices(conf, num_bins)
    counts = np.bincount(idx, minlength=num_bins)
    conf_sum = np.bincount(idx, weights=conf, minlength=num_bins)
    acc_sum = np.bincount(idx, weights=acc, minlength=num_bins)
    ece = 0.0
    bins = []
    for b in range(num_bins):
        c = int(counts[b])
        if c:
            mc, ma = conf_sum[b] / c, acc_sum[b] / c
            ece += (c / n) * abs(mc - ma)
        else:
            mc = ma = 0.0
        bins.append(BinStat(b / num_bins, (b + 1) / num_bins, c, float(mc), float(ma)))
    return float(ece), bins


def compute_ece(unit: EvaluationUnit, num_bins: int = DEFAULT_BINS):
    conf, acc = _arrays(unit)
    return expected_calibration_error(conf, acc, num_bins)


def brier_score(confidences, correct) -> float:
    conf, acc = _arrays(confidences, correct)
    if conf.size == 0:
        raise ValueError("cannot compute Brier score of an empty unit")
    return float(np.mean((conf - acc) ** 2))


def compute_brier(unit: EvaluationUnit) -> float:
    return brier_score(*_arrays(unit))


def negative_log_likelihood(confidences, correct, epsilon: float = EPSILON) -> float:
    if not 0.0 < epsilon < 0.5:
        raise ValueError("epsilon must lie in (0, 0.5)")
    conf, acc = _arrays(confidences, correct)
    if conf.size == 0:
        raise ValueError("cannot compute NLL of an empty unit")
    p = np.clip(conf, epsilon, 1.0 - epsilon)
    return float(-np.mean(acc * np.log(p) + (1.0 - acc) * np.log1p(-p)))


def compute_nll(unit: EvaluationUnit, epsilon: float = EPSILON) -> float:
    return negative_log_likelihood(*_arrays(unit), epsilon=epsilon)


def calibration_report(unit: EvaluationUnit, num_bins: int = DEFAULT_BINS, epsilon: float = EPSILON):
    conf, acc = _arrays(unit)
    ece, bins = expected_calibration_error(conf, acc, num_bins)
    return CalibrationReport(
        ece=ece,
        brier=brier_score(conf, acc),
        nll=negative_log_likelihood(conf, acc, epsilon),
        bins=tuple(bins),
        n=int(conf.size),
    )


# -- temperature scaling ------------------------------------------------------


def _logit(p):
    p = np.clip(np.asarray(p, dtype=float), EPSILON, 1.0 - EPSILON)
    return np.log(p) - np.log1p(-p)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _scaled_nll(logits, acc, log_t):
    z = logits / math.exp(log_t)
    # log sigmoid(z) = -logaddexp(0, -z)
    return float(np.mean(acc * np.logaddexp(0.0, -z) + (1.0 - acc) * np.logaddexp(0.0, z)))


def golden_section_minimize(f, lo: float, hi: float, tol: float):
    """Minimize a unimodal function on [lo, hi] to a bracket width of ``tol``."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    x = (a + b) / 2.0
    return x, f(x)


def fit_temperature_arrays(confidences, correct) -> TemperatureModel:
    conf, acc = _arrays(confidences, correct)
    if conf.size == 0:
        raise ValueError("cannot fit a temperature on an empty validation set")
    logits = _logit(conf)
    before = _scaled_nll(logits, acc, 0.0)
    log_t, after = golden_section_minimize(lambda t: _scaled_nll(logits, acc, t), *LOG_T_BOUNDS, LOG_T_TOL)
    if after > before:
        # the optimum sits within tol of ln T = 0 on a flat objective
        log_t, after = 0.0, before
    return TemperatureModel(
        temperature=math.exp(log_t),
        validation_nll_before=before,
        validation_nll_after=after,
        degenerate=conf.size < 2,
    )


def fit_temperature(validation: EvaluationUnit) -> TemperatureModel:
    """Single temperature minimizing validation NLL of sigmoid(logit(conf) / T)."""
    return fit_temperature_arrays(*_arrays(validation))


def apply_temperature(model: TemperatureModel, confidence):
    out = _sigmoid(_logit(confidence) / model.temperature)
    return float(out) if np.ndim(out) == 0 else out


# -- isotonic regression ------------------------------------------------------


def pool_adjacent_violators(y, w=None) -> np.ndarray:
    """Weighted least-squares non-decreasing fit of ``y`` in the given order."""
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    means: list[float] = []
    weights: list[float] = []
    sizes: list[int] = []
    for yi, wi in zip(y, w):
        means.append(float(yi))
        weights.append(float(wi))
        sizes.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, w2, s2 = means.pop(), weights.pop(), sizes.pop()
            m1, w1, s1 = means.pop(), weights.pop(), sizes.pop()
            wt = w1 + w2
            means.append((m1 * w1 + m2 * w2) / wt)
            weights.append(wt)
            sizes.append(s1 + s2)
    return np.repeat(means, sizes)


def fit_isotonic_arrays(confidences, correct, item_ids: Sequence[str] | None = None) -> IsotonicModel:
    conf, acc = _arrays(confidences, correct)
    if conf.size == 0:
        raise ValueError("cannot fit an isotonic map on an empty validation set")
    ids = item_ids if item_ids is not None else [""] * conf.size
    order = sorted(range(conf.size), key=lambda i: (conf[i], ids[i]))
    conf, acc = conf[order], acc[order]
    # tied confidences must share one output, so pool them before PAV
    levels, start = np.unique(conf, return_index=True)
    counts = np.diff(np.append(start, conf.size))
    level_means = np.add.reduceat(acc, start) / counts
    fitted = pool_adjacent_violators(level_means, counts)
    keep = np.ones(levels.size, dtype=bool)
    keep[1:] = fitted[1:] != fitted[:-1]
    return IsotonicModel(
        breakpoints=tuple(float(x) for x in levels[keep]),
        values=tuple(float(x) for x in fitted[keep]),
    )


def fit_isotonic(validation: EvaluationUnit) -> IsotonicModel:
    """Monotone step map from confidence to accuracy, fit by pool-adjacent-violators."""
    ids = [r.item_id for r in validation.records]
    return fit_isotonic_arrays(validation.confidences, validation.correct, ids)


def apply_isotonic(model: IsotonicModel, confidence):
    bp = np.asarray(model.breakpoints)
    vals = np.asarray(model.values)
    idx = np.searchsorted(bp, np.asarray(confidence, dtype=float), side="right") - 1
    out = vals[np.clip(idx, 0, len(vals) - 1)]
    return float(out) if np.ndim(out) == 0 else out


# -- intervention comparison --------------------------------------------------


@dataclass(frozen=True)
class InterventionRow:
    model_id: str
    ece_before: float
    ece_after: float
    per_dataset: tuple[tuple[str, float, float], ...] = ()


def fit_mapping(method: str, validation_conf, validation_correct, item_ids=None):
    if method == "temperature":
        return fit_temperature_arrays(validation_conf, validation_correct)
    if method == "isotonic":
        return fit_isotonic_arrays(validation_conf, validation_correct, item_ids)
    raise ValueError(f"unknown calibration method {method!r}; expected one of {INTERVENTIONS}")


def recalibrated_ece(unit: EvaluationUnit, method: str, num_bins: int = DEFAULT_BINS) -> tuple[float, float]:
    """(ECE before, ECE after) on eval records, mapping fit on validation records."""
    val = unit.select("validation")
    ev = unit.select("eval")
    if val is None:
        raise MissingSplitError(
            f"no validation records for model {unit.model_id!r} on dataset {unit.dataset_id!r}"
        )
    if ev is None:
        raise MissingSplitError(f"no eval records for model {unit.model_id!r} on dataset {unit.dataset_id!r}")
    mapping = fit_mapping(method, val.confidences, val.correct, [r.item_id for r in val.records])
    before, _ = compute_ece(ev, num_bins)
    after, _ = expected_calibration_error(mapping(ev.confidences), ev.correct, num_bins)
    return before, after


def calibration_intervention_report(
    model_units: Iterable[EvaluationUnit], method: str, num_bins: int = DEFAULT_BINS
) -> list[InterventionRow]:
    """Per-model ECE before and after recalibration, averaged over datasets."""
    if method not in INTERVENTIONS:
        raise ValueError(f"unknown calibration method {method!r}; expected one of {INTERVENTIONS}")
    per_model = defaultdict(list)
    for unit in model_units:
        if unit.condition != "clean":
            continue
        before, after = recalibrated_ece(unit, method, num_bins)
        per_model[unit.model_id].append((unit.dataset_id, before, after))
    rows = []
    for model_id in sorted(per_model):
        cells = sorted(per_model[model_id])
        rows.append(
            InterventionRow(
                model_id=model_id,
                ece_before=fmean(c[1] for c in cells),
                ece_after=fmean(c[2] for c in cells),
                per_dataset=tuple(cells),
            )
        )
    return rows
