"""Run configuration: weights, binning, ECE anchor, C source, bootstrap, weightings."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

C_SOURCES = ("baseline", "temperature", "isotonic")
KNOWN_KEYS = {"weights", "num_bins", "ece_anchor", "c_source", "bootstrap", "weightings", "drop_mode", "jobs"}


class ConfigError(ValueError):
    """The run configuration is invalid or cannot be satisfied by the data."""


@dataclass(frozen=True)
class Weights:
    alpha: float = 1 / 3
    beta: float = 1 / 3
    gamma: float = 1 / 3

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v) or v < 0:
                raise ConfigError(f"weight {name} must be a non-negative real, got {v!r}")
        if abs(self.alpha + self.beta + self.gamma - 1.0) > 1e-9:
            raise ConfigError(
                f"weights must sum to 1, got {self.alpha} + {self.beta} + {self.gamma} = "
                f"{self.alpha + self.beta + self.gamma}"
            )

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.alpha, self.beta, self.gamma)

    def label(self) -> str:
        return "({:.4g}, {:.4g}, {:.4g})".format(*self.as_tuple())

    @classmethod
    def parse(cls, obj) -> "Weights":
        if isinstance(obj, Weights):
            return obj
        if isinstance(obj, dict):
            unknown = set(obj) - {"alpha", "beta", "gamma"}
            if unknown:
                raise ConfigError(f"unknown weight key(s): {sorted(unknown)}")
            return cls(**obj)
        if isinstance(obj, (list, tuple)) and len(obj) == 3:
            return cls(*obj)
        raise ConfigError(f"cannot read weights from {obj!r}")


BALANCED = Weights()
CALIBRATION_FOCUSED = Weights(0.5, 0.25, 0.25)
ROBUSTNESS_FOCUSED = Weights(0.2, 0.5, 0.3)
STANDARD_WEIGHTINGS = (BALANCED, CALIBRATION_FOCUSED, ROBUSTNESS_FOCUSED)


@dataclass(frozen=True)
class RunConfig:
    weights: Weights = BALANCED
    num_bins: int = 10
    ece_anchor: float | None = None  # None means the largest baseline ECE in the run
    c_source: str = "baseline"
    bootstrap_n: int = 100
    bootstrap_seed: int = 0
    weightings: tuple[Weights, ...] = STANDARD_WEIGHTINGS
    drop_mode: str = "cells"
    jobs: int = 1

    def __post_init__(self):
        if not isinstance(self.num_bins, int) or self.num_bins < 1:
            raise ConfigError(f"num_bins must be a positive integer, got {self.num_bins!r}")
        if self.ece_anchor is not None and not self.ece_anchor > 0:
            raise ConfigError(f"a fixed ECE anchor must be > 0, got {self.ece_anchor!r}")
        if self.c_source not in C_SOURCES:
            raise ConfigError(f"c_source must be one of {C_SOURCES}, got {self.c_source!r}")
        if self.drop_mode not in ("cells", "datasets"):
            raise ConfigError(f"drop_mode must be 'cells' or 'datasets', got {self.drop_mode!r}")
        if self.bootstrap_n < 0:
            raise ConfigError("bootstrap n must be >= 0")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def to_dict(self) -> dict:
        return {
            "weights": dict(zip(("alpha", "beta", "gamma"), self.weights.as_tuple())),
            "num_bins": self.num_bins,
            "ece_anchor": "auto" if self.ece_anchor is None else {"fixed": self.ece_anchor},
            "c_source": self.c_source,
            "bootstrap": {"n": self.bootstrap_n, "seed": self.bootstrap_seed},
            "weightings": [dict(zip(("alpha", "beta", "gamma"), w.as_tuple())) for w in self.weightings],
            "drop_mode": self.drop_mode,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        if not isinstance(obj, dict):
            raise ConfigError("configuration must be a mapping")
        unknown = set(obj) - KNOWN_KEYS
        if unknown:
            raise ConfigError(f"unknown configuration key(s): {sorted(unknown)}")
        kw = {}
        if "weights" in obj:
            kw["weights"] = Weights.parse(obj["weights"])
        if "num_bins" in obj:
            kw["num_bins"] = obj["num_bins"]
        if "ece_anchor" in obj:
            kw["ece_anchor"] = _parse_anchor(obj["ece_anchor"])
        if "c_source" in obj:
            kw["c_source"] = obj["c_source"]
        if "bootstrap" in obj:
            b = obj["bootstrap"] or {}
            if set(b) - {"n", "seed"}:
                raise ConfigError(f"unknown bootstrap key(s): {sorted(set(b) - {'n', 'seed'})}")
            kw["bootstrap_n"] = int(b.get("n", 100))
            kw["bootstrap_seed"] = int(b.get("seed", 0))
        if "weightings" in obj:
            kw["weightings"] = tuple(Weights.parse(w) for w in obj["weightings"])
        if "drop_mode" in obj:
            kw["drop_mode"] = obj["drop_mode"]
        if "jobs" in obj:
            kw["jobs"] = int(obj["jobs"])
        return cls(**kw)


def _parse_anchor(value):
    if value is None or value == "auto":
        return None
    if isinstance(value, dict) and set(value) == {"fixed"}:
        value = value["fixed"]
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    raise ConfigError(f"ece_anchor must be 'auto' or {{'fixed': value}}, got {value!r}")


def load_config(path) -> RunConfig:
    """Read a JSON or YAML run configuration."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"configuration file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if path.suffix in (".yaml", ".yml"):
        import yaml

        obj = yaml.safe_load(text)
    else:
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from None
    return RunConfig.from_dict(obj or {})
