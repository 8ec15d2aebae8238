"""From prediction records to per-model pillar scores.

Records are first packed into per-model arrays (:class:`ModelData`) so that
bootstrap resamples and leave-one-dataset-out folds can rerun the whole
pillar computation cheaply.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from statistics import fmean
from typing import Iterable, Sequence

import numpy as np

from . import calibration as cal
from .config import ConfigError, RunConfig
from .records import InsufficientDataError, PredictionRecord, group_records, primary_records
from .robustness import RobustnessBreakdown, robustness_from_accuracies
from .uncertainty import auroc_arrays, normalize_u, pick_best, variance_score


@dataclass(frozen=True)
class Cell:
    confidence: np.ndarray
    correct: np.ndarray
    item_ids: tuple[str, ...] = ()

    def __len__(self):
        return self.correct.size

    def take(self, idx: np.ndarray) -> "Cell":
        ids = tuple(self.item_ids[i] for i in idx) if self.item_ids else ()
        return Cell(self.confidence[idx], self.correct[idx], ids)


@dataclass(frozen=True)
class UqCell:
    score: np.ndarray
    incorrect: np.ndarray

    def __len__(self):
        return self.score.size

    def take(self, idx: np.ndarray) -> "UqCell":
        return UqCell(self.score[idx], self.incorrect[idx])


@dataclass(frozen=True)
class ModelData:
    model_id: str
    clean_eval: dict = field(default_factory=dict)  # dataset -> Cell
    clean_val: dict = field(default_factory=dict)  # dataset -> Cell
    perturbed: dict = field(default_factory=dict)  # (dataset, condition) -> Cell
    uq: dict = field(default_factory=dict)  # (dataset, source) -> UqCell

    @property
    def datasets(self) -> tuple[str, ...]:
        ds = set(self.clean_eval) | set(self.clean_val) | {d for d, _ in self.perturbed} | {d for d, _ in self.uq}
        return tuple(sorted(ds))

    def cells(self):
        """Every resampling cell in a fixed order."""
        for d in sorted(self.clean_eval):
            yield ("clean_eval", d), self.clean_eval[d]
        for d in sorted(self.clean_val):
            yield ("clean_val", d), self.clean_val[d]
        for k in sorted(self.perturbed):
            yield ("perturbed", k), self.perturbed[k]
        for k in sorted(self.uq):
            yield ("uq", k), self.uq[k]

    def without_dataset(self, dataset_id: str) -> "ModelData":
        return ModelData(
            self.model_id,
            {d: c for d, c in self.clean_eval.items() if d != dataset_id},
            {d: c for d, c in self.clean_val.items() if d != dataset_id},
            {k: c for k, c in self.perturbed.items() if k[0] != dataset_id},
            {k: c for k, c in self.uq.items() if k[0] != dataset_id},
        )

    def resample(self, rng: np.random.Generator) -> "ModelData":
        out = {"clean_eval": {}, "clean_val": {}, "perturbed": {}, "uq": {}}
        for (kind, key), cell in self.cells():
            n = len(cell)
            out[kind][key] = cell.take(rng.integers(0, n, size=n))
        return ModelData(self.model_id, **out)


def _cell(records: Sequence[PredictionRecord], with_ids=False) -> Cell:
    return Cell(
        np.array([r.confidence for r in records], dtype=float),
        np.array([r.correct for r in records], dtype=bool),
        tuple(r.item_id for r in records) if with_ids else (),
    )


def collect(records: Iterable[PredictionRecord]) -> dict[str, ModelData]:
    """Pack records (possibly merged from several logs) into per-model arrays."""
    records = list(records)
    parts = defaultdict(lambda: {"clean_eval": {}, "clean_val": {}, "perturbed": {}, "uq": {}})
    for unit in group_records(primary_records(records)):
        p = parts[unit.model_id]
        ev = [r for r in unit.records if r.split == "eval"]
        val = [r for r in unit.records if r.split == "validation"]
        if unit.condition == "clean":
            if ev:
                p["clean_eval"][unit.dataset_id] = _cell(ev)
            if val:
                p["clean_val"][unit.dataset_id] = _cell(val, with_ids=True)
        elif ev:
            p["perturbed"][(unit.dataset_id, unit.condition)] = _cell(ev)
    uq = defaultdict(list)
    for r in records:
        if r.samples is not None and r.condition == "clean" and r.split == "eval" and len(r.samples) >= 2:
            uq[(r.model_id, r.dataset_id, r.sample_source)].append(r)
    for (m, d, s), recs in sorted(uq.items()):
        recs.sort(key=lambda r: r.item_id)
        parts[m]["uq"][(d, s)] = UqCell(
            np.array([variance_score(r.samples) for r in recs]),
            np.array([not r.correct for r in recs], dtype=bool),
        )
    return {m: ModelData(m, **parts[m]) for m in sorted(parts)}


@dataclass(frozen=True)
class ModelMetrics:
    """Everything measured for one model before normalization."""

    model_id: str
    ece_baseline: float | None
    ece_per_dataset: dict
    ece_calibrated: float | None  # under config.c_source, None for baseline
    robustness: RobustnessBreakdown | None
    source_auroc: dict  # source -> mean AUROC over datasets (None if undefined)
    source_auroc_per_dataset: dict  # (dataset, source) -> AUROC or None
    best_source: str | None
    best_auroc: float | None
    problems: tuple[str, ...] = ()


def measure(md: ModelData, config: RunConfig) -> ModelMetrics:
    problems = []
    ece_per = {
        d: cal.expected_calibration_error(c.confidence, c.correct, config.num_bins)[0]
        for d, c in sorted(md.clean_eval.items())
    }
    ece_base = fmean(ece_per.values()) if ece_per else None
    if ece_base is None:
        problems.append("no clean eval records")

    ece_cal = None
    if config.c_source != "baseline" and md.clean_eval:
        missing = [d for d in md.clean_eval if d not in md.clean_val]
        if missing:
            raise ConfigError(
                f"c_source = {config.c_source} needs validation records; model {md.model_id!r} "
                f"has none for dataset(s) {', '.join(sorted(missing))}"
            )
        after = []
        for d in sorted(md.clean_eval):
            val, ev = md.clean_val[d], md.clean_eval[d]
            mapping = cal.fit_mapping(config.c_source, val.confidence, val.correct, val.item_ids or None)
            after.append(cal.expected_calibration_error(mapping(ev.confidence), ev.correct, config.num_bins)[0])
        ece_cal = fmean(after)

    rob = None
    if md.perturbed:
        clean_acc = {d: float(np.mean(c.correct)) for d, c in md.clean_eval.items()}
        pert_acc = {k: float(np.mean(c.correct)) for k, c in md.perturbed.items()}
        try:
            rob = robustness_from_accuracies(clean_acc, pert_acc, config.drop_mode)
        except InsufficientDataError as exc:
            problems.append(str(exc))
    else:
        problems.append("no perturbed eval records")

    per_ds = {k: auroc_arrays(c.score, c.incorrect) for k, c in sorted(md.uq.items())}
    by_source = defaultdict(list)
    for (d, s), a in per_ds.items():
        if a is not None:
            by_source[s].append(a)
    source_auroc = {s: fmean(v) for s, v in sorted(by_source.items())}
    for (d, s) in per_ds:
        source_auroc.setdefault(s, None)
    best_source = best_auroc = None
    if source_auroc:
        try:
            best_source, best_auroc = pick_best(source_auroc)
        except InsufficientDataError as exc:
            problems.append(str(exc))
    else:
        problems.append("no stochastic samples on clean eval records")

    return ModelMetrics(
        model_id=md.model_id,
        ece_baseline=ece_base,
        ece_per_dataset=ece_per,
        ece_calibrated=ece_cal,
        robustness=rob,
        source_auroc=source_auroc,
        source_auroc_per_dataset=per_ds,
        best_source=best_source,
        best_auroc=best_auroc,
        problems=tuple(problems),
    )


@dataclass(frozen=True)
class Pillars:
    """Normalized pillars, any of which may be missing."""

    c: float | None
    r: float | None
    u: float | None

    @property
    def complete(self) -> bool:
        return None not in (self.c, self.r, self.u)


def ece_anchor(metrics: dict, config: RunConfig) -> float | None:
    if config.ece_anchor is not None:
        return config.ece_anchor
    eces = [m.ece_baseline for m in metrics.values() if m.ece_baseline is not None]
    return max(eces) if eces and max(eces) > 0 else None


def pillars_from_metrics(metrics: dict, config: RunConfig) -> dict[str, Pillars]:
    from .aggregate import normalize_c

    anchor = ece_anchor(metrics, config)
    out = {}
    for model_id, m in sorted(metrics.items()):
        ece = m.ece_baseline if config.c_source == "baseline" else m.ece_calibrated
        if ece is None:
            c = None
        elif anchor is None:
            c = 1.0  # every baseline ECE is 0
        else:
            c = normalize_c(ece, anchor)
        r = m.robustness.r_score if m.robustness is not None else None
        u = normalize_u(m.best_auroc) if m.best_auroc is not None else None
        out[model_id] = Pillars(c, r, u)
    return out


def measure_all(data: dict[str, ModelData], config: RunConfig) -> dict[str, ModelMetrics]:
    return {m: measure(md, config) for m, md in sorted(data.items())}
