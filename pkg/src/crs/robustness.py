"""Accuracy under perturbation and the retention pillar R."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass
from statistics import fmean
from typing import Iterable, Sequence

import numpy as np

from .records import EvaluationUnit, InsufficientDataError

DROP_MODES = ("cells", "datasets")


@dataclass(frozen=True)
class CellDrop:
    clean_accuracy: float
    perturbed_accuracy: float
    drop: float


@dataclass(frozen=True)
class RobustnessBreakdown:
    per_cell: dict  # (dataset_id, condition) -> CellDrop
    avg_clean_accuracy: float
    avg_drop: float
    r_score: float
    raw_r: float  # before clamping to [0, 1]

    def to_dict(self) -> dict:
        return {
            "avg_clean_accuracy": self.avg_clean_accuracy,
            "avg_drop": self.avg_drop,
            "r_score": self.r_score,
            "raw_r": self.raw_r,
            "cells": [
                {"dataset_id": d, "condition": c, **vars(cell)}
                for (d, c), cell in sorted(self.per_cell.items())
            ],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dataset_id", "condition", "clean_accuracy", "perturbed_accuracy", "drop"])
        for (d, c), cell in sorted(self.per_cell.items()):
            w.writerow([d, c, repr(cell.clean_accuracy), repr(cell.perturbed_accuracy), repr(cell.drop)])
        return buf.getvalue()


def accuracy(unit: EvaluationUnit) -> float:
    if len(unit) == 0:
        raise ValueError("cannot compute accuracy of an empty unit")
    return float(np.mean(unit.correct))


def accuracy_drop(clean: EvaluationUnit, perturbed: EvaluationUnit) -> float:
    """Clean minus perturbed accuracy; negative when the perturbation helps."""
    if (clean.model_id, clean.dataset_id) != (perturbed.model_id, perturbed.dataset_id):
        raise ValueError(
            f"cannot compare ({clean.model_id}, {clean.dataset_id}) "
            f"with ({perturbed.model_id}, {perturbed.dataset_id})"
        )
    return accuracy(clean) - accuracy(perturbed)


def retention(avg_drop: float, avg_clean_accuracy: float) -> tuple[float, float]:
    """(clamped R, raw R)."""
    if avg_clean_accuracy <= 0:
        raise InsufficientDataError("average clean accuracy is 0; retention is undefined")
    raw = 1.0 - avg_drop / avg_clean_accuracy
    return min(1.0, max(0.0, raw)), raw


def robustness_from_accuracies(
    clean: dict, perturbed: dict, mode: str = "cells"
) -> RobustnessBreakdown:
    """Array-free core: ``clean`` maps dataset -> accuracy, ``perturbed`` maps
    (dataset, condition) -> accuracy."""
    if mode not in DROP_MODES:
        raise ValueError(f"unknown drop averaging mode {mode!r}; expected one of {DROP_MODES}")
    if not perturbed:
        raise InsufficientDataError("no (clean, perturbed) cells to compare")
    per_cell = {}
    for (d, c), acc in perturbed.items():
        if d not in clean:
            raise InsufficientDataError(f"dataset {d!r} has perturbed records but no clean records")
        per_cell[(d, c)] = CellDrop(clean[d], acc, clean[d] - acc)
    datasets = sorted({d for d, _ in per_cell})
    avg_clean = fmean(clean[d] for d in datasets)
    if mode == "cells":
        avg_drop = fmean(per_cell[k].drop for k in sorted(per_cell))
    else:
        by_ds = defaultdict(list)
        for (d, _), cell in sorted(per_cell.items()):
            by_ds[d].append(cell.drop)
        avg_drop = fmean(fmean(by_ds[d]) for d in datasets)
    r, raw = retention(avg_drop, avg_clean)
    return RobustnessBreakdown(per_cell, avg_clean, avg_drop, r, raw)


def robustness_score(
    cells: Iterable[tuple[EvaluationUnit, EvaluationUnit]], mode: str = "cells"
) -> RobustnessBreakdown:
    """Retention score over (clean, perturbed) unit pairs of one model.

    Drops are averaged without weights over (dataset, condition) cells; with
    ``mode="datasets"`` they are first averaged within each dataset.
    """
    clean, perturbed = {}, {}
    for c_unit, p_unit in cells:
        if c_unit.condition != "clean":
            raise ValueError("first unit of each pair must be the clean condition")
        if (c_unit.model_id, c_unit.dataset_id) != (p_unit.model_id, p_unit.dataset_id):
            raise ValueError("clean and perturbed units must share model and dataset")
        clean[c_unit.dataset_id] = accuracy(c_unit)
        perturbed[(p_unit.dataset_id, p_unit.condition)] = accuracy(p_unit)
    return robustness_from_accuracies(clean, perturbed, mode)


def pair_cells(units: Sequence[EvaluationUnit]) -> list[tuple[EvaluationUnit, EvaluationUnit]]:
    """Pair each perturbed eval unit with the clean eval unit of its dataset."""
    clean = {}
    perturbed = []
    for unit in units:
        ev = unit.select("eval")
        if ev is None:
            continue
        if unit.condition == "clean":
            clean[unit.dataset_id] = ev
        else:
            perturbed.append(ev)
    pairs = []
    for p in sorted(perturbed, key=lambda u: u.key):
        if p.dataset_id in clean:
            pairs.append((clean[p.dataset_id], p))
    return pairs
