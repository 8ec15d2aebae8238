"""Variance-based uncertainty scores, error-detection AUROC and the U pillar."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from statistics import fmean
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from .records import SAMPLE_SOURCES, EvaluationUnit, InsufficientDataError, PredictionRecord

# ensemble wins ties between sources
SOURCE_PREFERENCE = ("ensemble", "mc_dropout")


@dataclass(frozen=True)
class UncertaintyScore:
    item_id: str
    score: float
    source: str
    incorrect: bool = False


@dataclass(frozen=True)
class SourceStats:
    auroc: float | None
    n_correct: int
    n_incorrect: int
    per_dataset: dict = field(default_factory=dict)


@dataclass(frozen=True)
class UqReport:
    per_source: dict  # source -> SourceStats
    best_source: str
    best_auroc: float
    u_score: float
    clamped: bool = False

    def to_dict(self) -> dict:
        return {
            "per_source": {
                s: {
                    "auroc": st.auroc,
                    "n_correct": st.n_correct,
                    "n_incorrect": st.n_incorrect,
                    "per_dataset": dict(sorted(st.per_dataset.items())),
                }
                for s, st in sorted(self.per_source.items())
            },
            "best_source": self.best_source,
            "best_auroc": self.best_auroc,
            "u_score": self.u_score,
            "clamped": self.clamped,
        }


def variance_score(samples: Sequence[float]) -> float:
    """Population variance of per-pass probabilities."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ValueError("variance needs at least 2 samples")
    return float(np.var(x))


def auroc_arrays(uncertainty, incorrect) -> float | None:
    """P(random incorrect item is more uncertain than a random correct one), ties 1/2.

    Returns None when either class is empty.
    """
    u = np.asarray(uncertainty, dtype=float)
    bad = np.asarray(incorrect, dtype=bool)
    n_pos = int(bad.sum())
    n_neg = int(bad.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(u, method="average")
    u_stat = ranks[bad].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u_stat / (n_pos * n_neg))


def auroc(scores: Iterable[tuple[float, bool]]) -> float | None:
    pairs = list(scores)
    if not pairs:
        return None
    u, bad = zip(*pairs)
    return auroc_arrays(u, bad)


def normalize_u(auroc_value: float) -> float:
    if not 0.0 <= auroc_value <= 1.0:
        raise ValueError(f"AUROC must lie in [0, 1], got {auroc_value}")
    return min(1.0, max(0.0, (auroc_value - 0.5) / 0.5))


def _sampled(records: Iterable[PredictionRecord]):
    return [
        r
        for r in records
        if r.samples is not None and r.condition == "clean" and r.split == "eval" and len(r.samples) >= 2
    ]


def uncertainty_scores(unit: EvaluationUnit) -> list[UncertaintyScore]:
    return [
        UncertaintyScore(r.item_id, variance_score(r.samples), r.sample_source, not r.correct)
        for r in _sampled(unit.records)
    ]


def pick_best(per_source_auroc: dict) -> tuple[str, float]:
    defined = {s: a for s, a in per_source_auroc.items() if a is not None}
    if not defined:
        raise InsufficientDataError("no sample source has both correct and incorrect items")
    best = max(defined.values())
    for source in SOURCE_PREFERENCE:
        if defined.get(source) == best:
            return source, best
    raise AssertionError("unreachable")


def uq_report(units: EvaluationUnit | Sequence[EvaluationUnit]) -> UqReport:
    """AUROC per sample source on clean eval records, averaged over datasets.

    The better source sets the U pillar.
    """
    if isinstance(units, EvaluationUnit):
        units = [units]
    cells = defaultdict(lambda: defaultdict(list))  # source -> dataset -> scores
    for unit in units:
        for s in uncertainty_scores(unit):
            cells[s.source][unit.dataset_id].append(s)
    if not cells:
        raise InsufficientDataError("no clean eval records carry stochastic samples")
    per_source = {}
    for source in SAMPLE_SOURCES:
        if source not in cells:
            continue
        per_dataset = {}
        n_bad = n_good = 0
        for dataset_id in sorted(cells[source]):
            scores = cells[source][dataset_id]
            bad = [s.incorrect for s in scores]
            n_bad += sum(bad)
            n_good += len(bad) - sum(bad)
            per_dataset[dataset_id] = auroc_arrays([s.score for s in scores], bad)
        defined = [a for a in per_dataset.values() if a is not None]
        per_source[source] = SourceStats(
            auroc=fmean(defined) if defined else None,
            n_correct=n_good,
            n_incorrect=n_bad,
            per_dataset=per_dataset,
        )
    best_source, best_auroc = pick_best({s: st.auroc for s, st in per_source.items()})
    return UqReport(
        per_source=per_source,
        best_source=best_source,
        best_auroc=best_auroc,
        u_score=normalize_u(best_auroc),
        clamped=best_auroc < 0.5,
    )
