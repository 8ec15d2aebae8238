"""
Error detection from sample variance
====================================

Each item carries several stochastic probabilities (ensemble members or
dropout passes). Their variance is the uncertainty score; AUROC measures how
well it ranks incorrect items above correct ones, and U rescales AUROC so
that chance is 0.
"""

# %%
from crs.records import group_records
from crs.synth import SynthConfig, expected_auroc, generate_log
from crs.uncertainty import auroc, normalize_u, uq_report, variance_score

print("variance [0.2, 0.4, 0.6] =", round(variance_score([0.2, 0.4, 0.6]), 7))
print("AUROC with one inversion =", auroc([(0.8, True), (0.3, True), (0.5, False), (0.2, False)]))
print("U at AUROC 0.716 =", normalize_u(0.716))

# %% sweep the gap between the variance ranges of incorrect and correct items
width = 0.01
for sep in (0.0, 0.002, 0.004, 0.006, 0.008, 0.01):
    recs = generate_log(SynthConfig(n_items=5000, uq_separation=sep, uq_width=width, seed=3))
    rep = uq_report([u for u in group_records(recs) if u.condition == "clean"])
    print(f"separation {sep:.3f}  AUROC {rep.best_auroc:.4f}  closed form {expected_auroc(sep, width):.4f}  U {rep.u_score:.3f}")
