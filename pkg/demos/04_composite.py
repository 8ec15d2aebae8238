"""
Composite score, tiers and weight sensitivity
=============================================

Scores supplied pillar columns, flags rows whose reported composite does not
follow from its pillars, and re-ranks under three weightings.
"""

# %%
from crs.aggregate import PillarScores, score_pillar_table, weight_sensitivity
from crs.config import STANDARD_WEIGHTINGS
from crs.fixtures import REFERENCE_COMPOSITES, reference_pillar_rows

results, warnings = score_pillar_table(reference_pillar_rows())
for r in sorted(results, key=lambda r: -r.crs):
    print(f"{r.model_id:<18} C={r.pillars.c:.2f} R={r.pillars.r:.2f} U={r.pillars.u:.2f}  CRS {r.crs:.4f} ({r.display})  {r.tier}")
for w in warnings:
    print("warning:", w.message)

# %% rankings under balanced, calibration-focused and robustness-focused weights
pillars = {m: PillarScores(c, r, u) for m, c, r, u, _, _ in REFERENCE_COMPOSITES}
rep = weight_sensitivity(pillars, STANDARD_WEIGHTINGS)
for ranking in rep.rankings:
    top, bottom = ranking.entries[0], ranking.entries[-1]
    print(f"{ranking.weights.label():<20} first {top[0]} {top[1]:.4f}   last {bottom[0]} {bottom[1]:.4f}")
print("first place stable:", rep.top_invariant, " last place stable:", rep.bottom_invariant)
