"""
Calibration metrics and post-hoc recalibration
==============================================

Two synthetic populations with known miscalibration, scored with binned ECE,
Brier and NLL, then recalibrated with a single temperature and with an
isotonic step map fit on a held-out split.
"""

# %%
import numpy as np

from crs import calibration as cal
from crs.synth import SynthConfig, expected_ece_limit, generate_log


def arrays(records, split):
    rows = [r for r in records if r.split == split]
    return np.array([r.confidence for r in rows]), np.array([r.correct for r in rows])


# %% a perfectly calibrated population: correctness ~ Bernoulli(confidence)
recs = generate_log(SynthConfig(n_items=100_000, sample_source=None))
conf, ok = arrays(recs, "eval")
ece, bins = cal.expected_calibration_error(conf, ok)
print(f"calibrated   ECE {ece:.4f}  Brier {cal.brier_score(conf, ok):.4f}  NLL {cal.negative_log_likelihood(conf, ok):.4f}")

# %% the reliability table behind that number
for b in bins:
    print(f"  [{b.lower:.1f}, {b.upper:.1f})  n={b.count:>6}  conf={b.mean_confidence:.3f}  acc={b.accuracy:.3f}")

# %% two kinds of overconfidence
# correctness ~ conf**2 bends the reliability curve; a logit-scale stretch
# (t = 2) is exactly what one temperature can undo
populations = {
    "square rule (k=2)": dict(miscalibration_exponent=2.0),
    "logit stretch (t=2)": dict(overconfidence_temperature=2.0),
}
for name, kw in populations.items():
    recs = generate_log(SynthConfig(n_items=10_000, n_validation=10_000, seed=1, sample_source=None, **kw))
    vc, vy = arrays(recs, "validation")
    ec, ey = arrays(recs, "eval")
    temp = cal.fit_temperature_arrays(vc, vy)
    iso = cal.fit_isotonic_arrays(vc, vy)
    before = cal.expected_calibration_error(ec, ey)[0]
    after_t = cal.expected_calibration_error(temp(ec), ey)[0]
    after_i = cal.expected_calibration_error(iso(ec), ey)[0]
    limit = expected_ece_limit(kw.get("miscalibration_exponent", 1.0), 10, kw.get("overconfidence_temperature", 1.0))
    print(f"{name:<20} limit {limit:.4f}  ECE {before:.4f}  T={temp.temperature:.3f} -> {after_t:.4f}  isotonic -> {after_i:.4f}")

# %% the square rule leaves temperature scaling nothing to do: on a support
# symmetric about 0.5 the NLL gradient in 1/T vanishes at T = 1
c = np.linspace(0.05, 0.95, 100_001)
print("mean (c^2 - c) * logit(c) =", float(np.mean((c**2 - c) * np.log(c / (1 - c)))))
