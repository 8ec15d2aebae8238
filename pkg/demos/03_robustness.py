"""
Accuracy retention under perturbation
=====================================

R compares the mean accuracy drop across perturbed conditions with the mean
clean accuracy. A perturbation that helps yields a negative drop, which is
kept in the breakdown and clamped only in R.
"""

# %%
from crs.records import group_records
from crs.robustness import pair_cells, robustness_from_accuracies, robustness_score
from crs.synth import SynthConfig, generate_log

print("clean 0.80, drop 0.08 ->", robustness_from_accuracies({"d": 0.80}, {("d", "typo"): 0.72}).r_score)
helped = robustness_from_accuracies({"d": 0.80}, {("d", "typo"): 0.85})
print(f"perturbation helps -> raw {helped.raw_r:.4f}, R {helped.r_score}")

# %% three datasets, condition drops of increasing severity
cfg = SynthConfig(
    n_items=20_000,
    n_datasets=3,
    drop_per_condition={"typo": 0.03, "paraphrase": 0.05, "adversarial": 0.12},
    sample_source=None,
)
breakdown = robustness_score(pair_cells(group_records(generate_log(cfg))))
print(breakdown.to_csv())
print(f"avg clean {breakdown.avg_clean_accuracy:.4f}  avg drop {breakdown.avg_drop:.4f}  R {breakdown.r_score:.4f}")
print("expected R", 1 - (0.03 + 0.05 + 0.12) / 3 / 0.5)
