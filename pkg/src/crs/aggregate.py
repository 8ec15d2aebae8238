"""Pillar normalization, the weighted composite, tiers, and sensitivity analyses."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .config import BALANCED, STANDARD_WEIGHTINGS, ConfigError, RunConfig, Weights
from .pipeline import ModelData, Pillars, collect, measure_all, pillars_from_metrics
from .records import InsufficientDataError, PredictionRecord

__all__ = [
    "Weights",
    "BALANCED",
    "STANDARD_WEIGHTINGS",
    "PillarScores",
    "CrsResult",
    "normalize_c",
    "compose_crs",
    "assign_tier",
    "rank_results",
    "weight_sensitivity",
    "score_records",
    "bootstrap_crs",
    "leave_one_out",
    "score_pillar_table",
]

TIERS = ("high", "moderate", "low")
HIGH_THRESHOLD = 0.8
MODERATE_THRESHOLD = 0.6
# reported composites carry 2 decimals, so anything beyond half a unit disagrees
DISPLAY_TOLERANCE = 0.005


@dataclass(frozen=True)
class PillarScores:
    c: float
    r: float
    u: float

    def __post_init__(self):
        for name in ("c", "r", "u"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"pillar {name} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class CrsResult:
    model_id: str
    weights: Weights
    pillars: PillarScores
    crs: float
    tier: str
    ci_low: float | None = None
    ci_high: float | None = None
    bootstrap_std: float | None = None

    @property
    def display(self) -> str:
        return f"{self.crs:.2f}"

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "weights": dict(zip(("alpha", "beta", "gamma"), self.weights.as_tuple())),
            "c": self.pillars.c,
            "r": self.pillars.r,
            "u": self.pillars.u,
            "crs": self.crs,
            "tier": self.tier,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "bootstrap_std": self.bootstrap_std,
        }


@dataclass(frozen=True)
class ConsistencyWarning:
    model_id: str
    quantity: str
    reported: float
    recomputed: float

    @property
    def message(self) -> str:
        return (
            f"{self.model_id}: reported {self.quantity} {self.reported:.2f} disagrees with "
            f"recomputed {self.recomputed:.3f}"
        )


@dataclass(frozen=True)
class Ranking:
    weights: Weights
    entries: tuple[tuple[str, float], ...]  # (model_id, crs), best first

    @property
    def order(self) -> tuple[str, ...]:
        return tuple(m for m, _ in self.entries)


@dataclass(frozen=True)
class TierChange:
    dataset_id: str
    model_id: str
    tier_full: str
    tier_without: str


@dataclass
class SensitivityReport:
    rankings: list[Ranking] = field(default_factory=list)
    top_invariant: bool | None = None
    bottom_invariant: bool | None = None
    leave_one_out: dict = field(default_factory=dict)  # dataset -> model -> |deviation|
    max_deviation: float | None = None
    average_deviation: float | None = None
    tier_changes: list[TierChange] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "rankings": [
                {"weights": w.weights.label(), "entries": [[m, c] for m, c in w.entries]} for w in self.rankings
            ],
            "top_invariant": self.top_invariant,
            "bottom_invariant": self.bottom_invariant,
            "leave_one_out": {d: dict(sorted(v.items())) for d, v in sorted(self.leave_one_out.items())},
            "max_deviation": self.max_deviation,
            "average_deviation": self.average_deviation,
            "tier_changes": [vars(t) for t in self.tier_changes],
        }


def normalize_c(ece_model: float, ece_max: float) -> float:
    """Calibration pillar: 1 - ECE / ECE_max, floored at 0."""
    if not ece_max > 0:
        raise ValueError(f"ECE anchor must be > 0, got {ece_max}")
    if ece_model < 0:
        raise ValueError(f"ECE must be >= 0, got {ece_model}")
    return max(0.0, 1.0 - ece_model / ece_max)


def assign_tier(crs: float) -> str:
    if crs >= HIGH_THRESHOLD:
        return "high"
    if crs >= MODERATE_THRESHOLD:
        return "moderate"
    return "low"


def compose_crs(pillars: PillarScores, weights: Weights = BALANCED, model_id: str = "") -> CrsResult:
    crs = weights.alpha * pillars.c + weights.beta * pillars.r + weights.gamma * pillars.u
    # keep the convex combination inside [min, max] of the pillars despite rounding
    crs = min(max(crs, min(pillars.c, pillars.r, pillars.u)), max(pillars.c, pillars.r, pillars.u))
    return CrsResult(model_id, weights, pillars, crs, assign_tier(crs))


def rank_results(scores: Mapping[str, float]) -> list[tuple[str, float]]:
    """Best first, ties broken by model_id."""
    return sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))


def weight_sensitivity(
    pillars: Mapping[str, PillarScores], weightings: Sequence[Weights] = STANDARD_WEIGHTINGS
) -> SensitivityReport:
    """Full ranking under each weighting, and whether first and last place hold."""
    if len(pillars) < 2:
        raise InsufficientDataError("weight sensitivity needs at least 2 models")
    if not weightings:
        raise ConfigError("weight sensitivity needs at least one weighting")
    report = SensitivityReport()
    for w in weightings:
        scores = {m: compose_crs(p, w, m).crs for m, p in pillars.items()}
        report.rankings.append(Ranking(w, tuple(rank_results(scores))))
    report.top_invariant = len({r.order[0] for r in report.rankings}) == 1
    report.bottom_invariant = len({r.order[-1] for r in report.rankings}) == 1
    return report


# -- scoring from records -----------------------------------------------------


@dataclass(frozen=True)
class ModelScore:
    model_id: str
    pillars: Pillars
    result: CrsResult | None  # None when a pillar is missing


def _compose_all(pillars: Mapping[str, Pillars], weights: Weights) -> dict[str, ModelScore]:
    out = {}
    for m, p in sorted(pillars.items()):
        res = compose_crs(PillarScores(p.c, p.r, p.u), weights, m) if p.complete else None
        out[m] = ModelScore(m, p, res)
    return out


def score_data(data: Mapping[str, ModelData], config: RunConfig):
    """(metrics, scores) for packed model data."""
    metrics = measure_all(dict(data), config)
    pillars = pillars_from_metrics(metrics, config)
    return metrics, _compose_all(pillars, config.weights)


def score_records(records: Iterable[PredictionRecord], config: RunConfig = RunConfig()):
    return score_data(collect(records), config)


@dataclass(frozen=True)
class BootstrapResult:
    model_id: str
    mean: float
    std: float
    ci_low: float
    ci_high: float
    n_resamples: int
    n_degenerate: int
    values: tuple[float, ...] = ()


def _resample_scores(data, config, point, index):
    rng = np.random.default_rng([config.bootstrap_seed, index])
    sample = {m: md.resample(rng) for m, md in sorted(data.items())}
    metrics = measure_all(sample, config)
    pillars = pillars_from_metrics(metrics, config)
    out = {}
    for m, p in pillars.items():
        point_u, point_aurocs = point[m]
        u, degenerate = p.u, False
        lost = [k for k, a in metrics[m].source_auroc_per_dataset.items() if a is None and point_aurocs.get(k) is not None]
        if point_u is not None and (u is None or lost):
            u, degenerate = point_u, True
        if p.c is None or p.r is None or u is None:
            continue
        res = compose_crs(PillarScores(p.c, p.r, u), config.weights, m)
        out[m] = (res.crs, degenerate)
    return out


def bootstrap_crs(
    records_or_data,
    config: RunConfig = RunConfig(),
    n_resamples: int | None = None,
    seed: int | None = None,
    jobs: int | None = None,
) -> dict[str, BootstrapResult]:
    """Percentile bootstrap of every model's CRS.

    Items are resampled with replacement inside each (dataset, condition)
    cell and all pillars are recomputed. Resample ``i`` draws from its own
    generator seeded by ``(seed, i)``, so thread count does not change results.
    A resample that leaves an AUROC cell with a single class reuses the point
    estimate of U and is counted in ``n_degenerate``; one that leaves C or R
    undefined (e.g. zero clean accuracy) is dropped from ``n_resamples``.
    """
    config = config.with_overrides(bootstrap_n=n_resamples, bootstrap_seed=seed, jobs=jobs)
    n = config.bootstrap_n
    if n < 1:
        raise ValueError("n_resamples must be >= 1")
    data = records_or_data if isinstance(records_or_data, dict) else collect(records_or_data)
    metrics = measure_all(data, config)
    pillars = pillars_from_metrics(metrics, config)
    point = {m: (pillars[m].u, metrics[m].source_auroc_per_dataset) for m in metrics}
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            draws = list(pool.map(lambda i: _resample_scores(data, config, point, i), range(n)))
    else:
        draws = [_resample_scores(data, config, point, i) for i in range(n)]
    out = {}
    for m in sorted(data):
        vals = np.array([d[m][0] for d in draws if m in d])
        if vals.size == 0:
            continue
        out[m] = BootstrapResult(
            model_id=m,
            mean=float(vals.mean()),
            std=float(vals.std(ddof=1)) if vals.size > 1 else 0.0,
            ci_low=float(np.percentile(vals, 2.5)),
            ci_high=float(np.percentile(vals, 97.5)),
            n_resamples=int(vals.size),
            n_degenerate=sum(1 for d in draws if m in d and d[m][1]),
            values=tuple(float(v) for v in vals),
        )
    return out


def leave_one_out(
    records_or_data, config: RunConfig = RunConfig(), report: SensitivityReport | None = None
) -> SensitivityReport:
    """Recompute every CRS with one dataset removed at a time."""
    data = records_or_data if isinstance(records_or_data, dict) else collect(records_or_data)
    datasets = sorted({d for md in data.values() for d in md.datasets})
    if len(datasets) < 2:
        raise InsufficientDataError(f"leave-one-out needs at least 2 datasets, found {len(datasets)}")
    _, full = score_data(data, config)
    report = report if report is not None else SensitivityReport()
    deviations = []
    for d in datasets:
        fold = {m: md.without_dataset(d) for m, md in data.items()}
        _, scores = score_data(fold, config)
        report.leave_one_out[d] = {}
        for m, s in sorted(scores.items()):
            base = full[m].result
            if base is None or s.result is None:
                continue
            dev = abs(s.result.crs - base.crs)
            report.leave_one_out[d][m] = dev
            deviations.append(dev)
            if s.result.tier != base.tier:
                report.tier_changes.append(TierChange(d, m, base.tier, s.result.tier))
    if deviations:
        report.max_deviation = float(max(deviations))
        report.average_deviation = float(np.mean(deviations))
    return report


# -- supplied pillar tables ----------------------------------------------------


def score_pillar_table(rows: Iterable[Mapping], weights: Weights = BALANCED):
    """Compose CRS from supplied pillar columns.

    Each row needs ``model_id``, ``c``, ``r``, ``u`` and may carry a reported
    ``crs`` and the ``auroc`` behind ``u``. A reported value that differs from
    the recomputed one after 2-decimal rounding yields a :class:`ConsistencyWarning`.
    """
    results, warnings = [], []
    for row in rows:
        p = PillarScores(float(row["c"]), float(row["r"]), float(row["u"]))
        res = compose_crs(p, weights, str(row["model_id"]))
        results.append(res)
        reported = row.get("crs")
        if reported not in (None, ""):
            reported = float(reported)
            if abs(reported - res.crs) > DISPLAY_TOLERANCE + 1e-12:
                warnings.append(ConsistencyWarning(res.model_id, "CRS", reported, res.crs))
        auroc_value = row.get("auroc")
        if auroc_value not in (None, ""):
            w = check_u_against_auroc(res.model_id, p.u, float(auroc_value))
            if w is not None:
                warnings.append(w)
    return results, warnings


def check_u_against_auroc(model_id: str, reported_u: float, auroc_value: float):
    """Warn when a reported U is not the linear AUROC mapping."""
    from .uncertainty import normalize_u

    u = normalize_u(auroc_value)
    if abs(u - reported_u) > DISPLAY_TOLERANCE + 1e-12:
        return ConsistencyWarning(model_id, "U", reported_u, u)
    return None
