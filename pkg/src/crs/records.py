"""Prediction records, the line-delimited log format, and grouping into units.

A prediction log holds one JSON object per line::

    {"item_id": "q1", "dataset_id": "triviaqa", "model_id": "m", "condition": "clean",
     "confidence": 0.82, "correct": true}

Optional keys are ``split`` (``eval`` or ``validation``, default ``eval``),
``samples`` (per-pass probabilities) and ``sample_source`` (``mc_dropout`` or
``ensemble``). Any other key is rejected, and so is the whole file when a
single line is malformed.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

CONDITIONS = ("clean", "typo", "paraphrase", "adversarial")
PERTURBED_CONDITIONS = CONDITIONS[1:]
SPLITS = ("eval", "validation")
SAMPLE_SOURCES = ("mc_dropout", "ensemble")

REQUIRED_KEYS = ("item_id", "dataset_id", "model_id", "condition", "confidence", "correct")
OPTIONAL_KEYS = ("split", "samples", "sample_source")


class LogFormatError(ValueError):
    """A prediction log (or a record) failed validation."""

    def __init__(self, reason, path=None, line=None):
        self.reason = reason
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {reason}" if where else reason)


class InsufficientDataError(ValueError):
    """The records present cannot support the requested statistic."""


@dataclass(frozen=True)
class PredictionRecord:
    item_id: str
    dataset_id: str
    model_id: str
    condition: str
    confidence: float
    correct: bool
    split: str = "eval"
    samples: tuple[float, ...] | None = None
    sample_source: str | None = None

    def __post_init__(self):
        for name in ("item_id", "dataset_id", "model_id"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value:
                raise LogFormatError(f"field '{name}' must be a non-empty string")
        if self.condition not in CONDITIONS:
            raise LogFormatError(f"field 'condition' must be one of {CONDITIONS}, got {self.condition!r}")
        if self.split not in SPLITS:
            raise LogFormatError(f"field 'split' must be one of {SPLITS}, got {self.split!r}")
        if not isinstance(self.correct, bool):
            raise LogFormatError("field 'correct' must be a boolean")
        if not _is_real(self.confidence) or not 0.0 <= self.confidence <= 1.0:
            raise LogFormatError(f"field 'confidence' must be a real in [0, 1], got {self.confidence!r}")
        object.__setattr__(self, "confidence", float(self.confidence))
        if self.samples is not None:
            for s in self.samples:
                if not _is_real(s) or not 0.0 <= s <= 1.0:
                    raise LogFormatError(f"field 'samples' must hold reals in [0, 1], got {s!r}")
            object.__setattr__(self, "samples", tuple(float(s) for s in self.samples))
            if self.sample_source is None:
                raise LogFormatError("field 'samples' requires 'sample_source'")
        if self.sample_source is not None and self.sample_source not in SAMPLE_SOURCES:
            raise LogFormatError(
                f"field 'sample_source' must be one of {SAMPLE_SOURCES}, got {self.sample_source!r}"
            )

    @property
    def key(self) -> tuple[str, str, str, str]:
        return (self.item_id, self.dataset_id, self.model_id, self.condition)

    def to_dict(self) -> dict:
        out = {
            "item_id": self.item_id,
            "dataset_id": self.dataset_id,
            "model_id": self.model_id,
            "condition": self.condition,
            "confidence": self.confidence,
            "correct": self.correct,
            "split": self.split,
        }
        if self.samples is not None:
            out["samples"] = list(self.samples)
        if self.sample_source is not None:
            out["sample_source"] = self.sample_source
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "PredictionRecord":
        if not isinstance(obj, dict):
            raise LogFormatError("record must be a JSON object")
        unknown = sorted(set(obj) - set(REQUIRED_KEYS) - set(OPTIONAL_KEYS))
        if unknown:
            raise LogFormatError(f"unknown field(s): {', '.join(unknown)}")
        missing = [k for k in REQUIRED_KEYS if k not in obj]
        if missing:
            raise LogFormatError(f"missing field(s): {', '.join(missing)}")
        samples = obj.get("samples")
        if samples is not None and not isinstance(samples, list):
            raise LogFormatError("field 'samples' must be an array")
        return cls(
            item_id=obj["item_id"],
            dataset_id=obj["dataset_id"],
            model_id=obj["model_id"],
            condition=obj["condition"],
            confidence=obj["confidence"],
            correct=obj["correct"],
            split=obj.get("split", "eval"),
            samples=tuple(samples) if samples is not None else None,
            sample_source=obj.get("sample_source"),
        )


def _is_real(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


@dataclass(frozen=True)
class EvaluationUnit:
    """Records sharing one (model, dataset, condition), ordered by item_id."""

    model_id: str
    dataset_id: str
    condition: str
    records: tuple[PredictionRecord, ...]

    def __post_init__(self):
        if not self.records:
            raise ValueError("an evaluation unit must hold at least one record")
        for r in self.records:
            if (r.model_id, r.dataset_id, r.condition) != (self.model_id, self.dataset_id, self.condition):
                raise ValueError(
                    f"record {r.item_id!r} belongs to ({r.model_id}, {r.dataset_id}, {r.condition}), "
                    f"not ({self.model_id}, {self.dataset_id}, {self.condition})"
                )

    def __len__(self):
        return len(self.records)

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.model_id, self.dataset_id, self.condition)

    @property
    def confidences(self) -> np.ndarray:
        return np.array([r.confidence for r in self.records], dtype=float)

    @property
    def correct(self) -> np.ndarray:
        return np.array([r.correct for r in self.records], dtype=bool)

    def select(self, split: str | None = None) -> "EvaluationUnit | None":
        """Sub-unit restricted to one split, or None when it would be empty."""
        recs = tuple(r for r in self.records if split is None or r.split == split)
        if not recs:
            return None
        return EvaluationUnit(self.model_id, self.dataset_id, self.condition, recs)

    @classmethod
    def from_records(cls, records: Iterable[PredictionRecord]) -> "EvaluationUnit":
        recs = tuple(sorted(records, key=_item_order))
        if not recs:
            raise ValueError("an evaluation unit must hold at least one record")
        first = recs[0]
        return cls(first.model_id, first.dataset_id, first.condition, recs)


@dataclass(frozen=True)
class LogManifest:
    models: tuple[str, ...]
    datasets: tuple[str, ...]
    coverage: dict = field(default_factory=dict)  # (model, dataset) -> tuple of conditions
    counts: dict = field(default_factory=dict)  # (model, dataset, condition) -> int
    total: int = 0

    def has(self, model_id: str, dataset_id: str, condition: str) -> bool:
        return condition in self.coverage.get((model_id, dataset_id), ())

    def to_dict(self) -> dict:
        return {
            "models": list(self.models),
            "datasets": list(self.datasets),
            "total": self.total,
            "cells": [
                {"model_id": m, "dataset_id": d, "condition": c, "count": n}
                for (m, d, c), n in sorted(self.counts.items())
            ],
        }


def _item_order(r: PredictionRecord):
    # sample_source breaks ties when one unit carries several sources for an item
    return (r.item_id, r.split, r.sample_source or "")


def parse_line(text: str) -> PredictionRecord:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LogFormatError(f"invalid JSON ({exc.msg})") from None
    return PredictionRecord.from_dict(obj)


def ingest_log(path) -> list[PredictionRecord]:
    """Read and validate a prediction log; any bad line rejects the whole file."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"prediction log not found: {path}")
    records = []
    seen = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, text in enumerate(fh, start=1):
            if not text.strip():
                continue
            try:
                rec = parse_line(text)
            except LogFormatError as exc:
                raise LogFormatError(exc.reason, path=path, line=lineno) from None
            if rec.key in seen:
                raise LogFormatError(
                    f"duplicate key (item_id, dataset_id, model_id, condition) = {rec.key}, "
                    f"first seen on line {seen[rec.key]}",
                    path=path,
                    line=lineno,
                )
            seen[rec.key] = lineno
            records.append(rec)
    return records


def dump_record(rec: PredictionRecord) -> str:
    return json.dumps(rec.to_dict(), ensure_ascii=False, separators=(", ", ": "))


def write_log(records: Iterable[PredictionRecord], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dump_record(rec) + "\n")


def merge_logs(logs: Sequence[Sequence[PredictionRecord]]) -> list[PredictionRecord]:
    """Concatenate several logs.

    A key may repeat across logs only to carry samples from a different source;
    the repeated records must agree on confidence, correctness and split.
    """
    merged = []
    by_key: dict = {}
    for log in logs:
        for rec in log:
            prior = by_key.get(rec.key)
            if prior is None:
                by_key[rec.key] = [rec]
                merged.append(rec)
                continue
            for p in prior:
                if (p.confidence, p.correct, p.split) != (rec.confidence, rec.correct, rec.split):
                    raise LogFormatError(f"records for key {rec.key} disagree across logs")
                if p.sample_source == rec.sample_source or rec.samples is None:
                    raise LogFormatError(f"duplicate key {rec.key} across logs")
            prior.append(rec)
            merged.append(rec)
    return merged


def primary_records(records: Iterable[PredictionRecord]) -> list[PredictionRecord]:
    """One record per key (the first seen), for accuracy and calibration metrics."""
    seen = set()
    out = []
    for rec in records:
        if rec.key not in seen:
            seen.add(rec.key)
            out.append(rec)
    return out


def group_records(records: Iterable[PredictionRecord]) -> list[EvaluationUnit]:
    """One unit per (model_id, dataset_id, condition), sorted by key then item_id."""
    buckets = defaultdict(list)
    for rec in records:
        buckets[(rec.model_id, rec.dataset_id, rec.condition)].append(rec)
    return [EvaluationUnit.from_records(buckets[k]) for k in sorted(buckets)]


def build_manifest(records: Iterable[PredictionRecord]) -> LogManifest:
    counts: dict = defaultdict(int)
    for rec in records:
        counts[(rec.model_id, rec.dataset_id, rec.condition)] += 1
    coverage: dict = defaultdict(list)
    for m, d, c in sorted(counts):
        coverage[(m, d)].append(c)
    return LogManifest(
        models=tuple(sorted({k[0] for k in counts})),
        datasets=tuple(sorted({k[1] for k in counts})),
        coverage={k: tuple(sorted(v, key=CONDITIONS.index)) for k, v in coverage.items()},
        counts=dict(counts),
        total=sum(counts.values()),
    )
