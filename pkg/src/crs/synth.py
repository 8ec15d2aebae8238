"""Synthetic prediction logs with analytically known properties.

Confidences are uniform on [0.05, 0.95] and an item is correct with
probability ``confidence ** k``: ``k = 1`` is perfectly calibrated, ``k > 1``
overconfident. With ``overconfidence_temperature = t`` the probability becomes
``sigmoid(logit(confidence ** k) / t)``; ``t > 1`` is the logit-scale
overconfidence that temperature scaling is designed to undo. (For ``k = 2``
alone the NLL-optimal temperature is exactly 1 on this symmetric support.)

Perturbed conditions flip correct answers to incorrect with the probability
that removes the requested accuracy in expectation.
Stochastic samples are built so that each item's population variance is
exactly a target drawn from ``U[0, w]`` (correct items) or
``U[s, s + w]`` (incorrect items), with ``s`` the separation.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import quad

from .records import PERTURBED_CONDITIONS, PredictionRecord

CONF_LOW, CONF_HIGH = 0.05, 0.95


class InfeasibleConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    n_items: int = 1000
    miscalibration_exponent: float = 1.0
    drop_per_condition: dict = field(default_factory=dict)  # condition -> expected accuracy drop
    uq_separation: float = 0.0
    seed: int = 0
    n_datasets: int = 1
    n_validation: int = 0
    model_id: str = "synth"
    uq_width: float = 0.01
    sample_source: str | None = "ensemble"
    n_samples: int = 3
    overconfidence_temperature: float = 1.0

    def __post_init__(self):
        if self.n_items < 1:
            raise InfeasibleConfigError("n_items must be >= 1")
        if not self.miscalibration_exponent > 0:
            raise InfeasibleConfigError("miscalibration_exponent must be > 0")
        if not self.overconfidence_temperature > 0:
            raise InfeasibleConfigError("overconfidence_temperature must be > 0")
        if self.n_datasets < 1 or self.n_validation < 0:
            raise InfeasibleConfigError("n_datasets must be >= 1 and n_validation >= 0")
        acc = expected_accuracy(self.miscalibration_exponent, self.overconfidence_temperature)
        for cond, drop in self.drop_per_condition.items():
            if cond not in PERTURBED_CONDITIONS:
                raise InfeasibleConfigError(f"unknown perturbed condition {cond!r}")
            if not 0.0 <= drop <= acc:
                raise InfeasibleConfigError(
                    f"drop {drop} for {cond!r} is infeasible: expected clean accuracy is {acc:.4f}"
                )
        if self.uq_separation < 0 or self.uq_width <= 0:
            raise InfeasibleConfigError("uq_separation must be >= 0 and uq_width > 0")
        if self.sample_source is not None:
            if self.n_samples < 2:
                raise InfeasibleConfigError("n_samples must be >= 2")
            top = max_variance(self.n_samples)
            if self.uq_separation + self.uq_width > top:
                raise InfeasibleConfigError(
                    f"uq_separation + uq_width exceeds {top:.4f}, the largest variance of {self.n_samples} samples"
                )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "SynthConfig":
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise InfeasibleConfigError(f"unknown synth key(s): {sorted(unknown)}")
        return cls(**obj)


def true_probability(conf, k: float = 1.0, t: float = 1.0):
    p = np.asarray(conf, dtype=float) ** k
    if t == 1.0:
        return p
    with np.errstate(divide="ignore"):
        z = (np.log(p) - np.log1p(-p)) / t
    return 1.0 / (1.0 + np.exp(-z))


def _mean_probability(lo: float, hi: float, k: float, t: float) -> float:
    if t == 1.0:
        return (hi ** (k + 1) - lo ** (k + 1)) / ((k + 1) * (hi - lo))
    return quad(lambda c: float(true_probability(c, k, t)), lo, hi)[0] / (hi - lo)


def expected_accuracy(k: float, t: float = 1.0) -> float:
    """E[P(correct)] for conf ~ U[0.05, 0.95]; E[conf ** k] when t = 1."""
    return _mean_probability(CONF_LOW, CONF_HIGH, k, t)


def expected_ece_limit(k: float, num_bins: int = 10, t: float = 1.0) -> float:
    """Large-sample ECE with equal-width bins; 0 exactly when k = 1 and t = 1."""
    if k == 1 and t == 1:
        return 0.0
    total = 0.0
    for b in range(num_bins):
        lo, hi = max(b / num_bins, CONF_LOW), min((b + 1) / num_bins, CONF_HIGH)
        if hi <= lo:
            continue
        mean_conf = (lo + hi) / 2
        mean_acc = _mean_probability(lo, hi, k, t)
        total += (hi - lo) / (CONF_HIGH - CONF_LOW) * abs(mean_conf - mean_acc)
    return total


def expected_auroc(separation: float, width: float) -> float:
    """P(X > Y) for X ~ U[s, s + w], Y ~ U[0, w]."""
    if separation >= width:
        return 1.0
    return 1.0 - (width - separation) ** 2 / (2 * width**2)


def closed_form_targets(config: SynthConfig, num_bins: int = 10) -> dict:
    k, t = config.miscalibration_exponent, config.overconfidence_temperature
    acc = expected_accuracy(k, t)
    return {
        "expected_accuracy": acc,
        "expected_ece_limit": expected_ece_limit(k, num_bins, t),
        "expected_auroc": expected_auroc(config.uq_separation, config.uq_width),
        "expected_perturbed_accuracy": {c: acc - d for c, d in sorted(config.drop_per_condition.items())},
    }


def _unit_pattern(m: int) -> np.ndarray:
    """Zero-mean offsets of population variance 1 and max magnitude <= sqrt(m/(m-1))."""
    half = m // 2
    if m % 2 == 0:
        z = np.array([1.0] * half + [-1.0] * half)
    else:
        z = np.array([1.0] * half + [0.0] + [-1.0] * half) * math.sqrt(m / (m - 1))
    return z


def max_variance(m: int) -> float:
    """Largest variance the sample pattern reaches inside [0, 1]."""
    return 0.25 if m % 2 == 0 else 0.25 * (m - 1) / m


def samples_with_variance(center: float, variance: float, m: int) -> list[float]:
    if not 0.0 <= variance <= max_variance(m) + 1e-15:
        raise ValueError(f"variance {variance} is out of reach for {m} samples in [0, 1]")
    z = _unit_pattern(m)
    delta = math.sqrt(variance)
    reach = delta * float(np.max(np.abs(z)))
    c = min(max(center, reach), 1.0 - reach)
    return [float(v) for v in np.clip(c + delta * z, 0.0, 1.0)]


def generate_log(config: SynthConfig) -> list[PredictionRecord]:
    rng = np.random.default_rng(config.seed)
    k, t = config.miscalibration_exponent, config.overconfidence_temperature
    acc = expected_accuracy(k, t)
    width = len(str(config.n_items + config.n_validation - 1))
    records = []
    for d in range(config.n_datasets):
        dataset_id = f"ds{d:02d}"
        for split, n in (("eval", config.n_items), ("validation", config.n_validation)):
            if n == 0:
                continue
            conf = rng.uniform(CONF_LOW, CONF_HIGH, size=n)
            correct = rng.random(n) < true_probability(conf, k, t)
            offset = 0 if split == "eval" else config.n_items
            ids = [f"{dataset_id}-{offset + i:0{width}d}" for i in range(n)]
            if split == "eval" and config.sample_source is not None:
                lo = np.where(correct, 0.0, config.uq_separation)
                variances = lo + rng.uniform(0.0, config.uq_width, size=n)
            for i in range(n):
                samples = source = None
                if split == "eval" and config.sample_source is not None:
                    samples = samples_with_variance(conf[i], variances[i], config.n_samples)
                    source = config.sample_source
                records.append(
                    PredictionRecord(
                        ids[i], dataset_id, config.model_id, "clean", float(conf[i]), bool(correct[i]),
                        split, samples, source,
                    )
                )
            if split != "eval":
                continue
            for cond in PERTURBED_CONDITIONS:
                if cond not in config.drop_per_condition:
                    continue
                flip_p = config.drop_per_condition[cond] / acc if acc > 0 else 0.0
                flips = rng.random(n) < flip_p
                pert = correct & ~flips
                for i in range(n):
                    records.append(
                        PredictionRecord(ids[i], dataset_id, config.model_id, cond, float(conf[i]), bool(pert[i]))
                    )
    return records


def write_synth(config: SynthConfig, out_dir, name: str = "synth") -> tuple[Path, Path]:
    """Write ``<name>.jsonl`` and ``<name>.targets.json``; returns both paths."""
    from .records import write_log

    out_dir = Path(out_dir)
    log_path = out_dir / f"{name}.jsonl"
    targets_path = out_dir / f"{name}.targets.json"
    write_log(generate_log(config), log_path)
    targets = {"config": config.to_dict(), "targets": closed_form_targets(config)}
    out_dir.mkdir(parents=True, exist_ok=True)
    targets_path.write_text(json.dumps(targets, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return log_path, targets_path
