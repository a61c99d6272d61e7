"""Compare census-based and data-defined coverage factors across two states."""

import numpy as np

from synthdse.model import TwoStateScenario
from synthdse.variance import decision_rule, delta_comparison, empirical_frequency

# Equal erroneous enumerations, unequal imputations: DCF has zero error.
a = delta_comparison(TwoStateScenario.equal_size(1000, ee1=10, ee2=10, ii1=20, ii2=0))
print(f"equal EE: delta_c {a.delta_c:.4f}  delta_d {a.delta_d:.4f}  winner {a.actual_winner.value}")

# Equal imputations, unequal erroneous enumerations: CCF wins narrowly.
b = delta_comparison(TwoStateScenario.equal_size(1000, ee1=20, ee2=0, ii1=10, ii2=10))
print(f"equal II: delta_c {b.delta_c:.4f}  delta_d {b.delta_d:.4f}  winner {b.actual_winner.value}")

# When CE dwarfs EE and II the sign rule predicts the winner from the two
# contrasts alone. Check it on random large post-strata.
rng = np.random.default_rng(0)
comps = []
for _ in range(2000):
    ce = int(rng.integers(1_000, 200_000))
    ee1, ee2, ii1, ii2 = rng.integers(0, ce // 100 + 1, size=4)
    comps.append(delta_comparison(TwoStateScenario.equal_size(ce, ee1, ee2, ii1, ii2)))
scored = [c for c in comps if "tie" not in (c.actual_winner.value, c.predicted_winner.value)]
agree = np.mean([c.actual_winner is c.predicted_winner for c in scored])
print(f"rule agrees with the exact sign in {agree:.2%} of {len(scored)} non-tied post-strata")
print("rule for EE1=5, EE2=1, II1=1, II2=9:",
      decision_rule(TwoStateScenario.equal_size(10**5, 5, 1, 1, 9)).value)

# Tabulate winners by post-stratum size (large means more than 50,000 CE).
for row in empirical_frequency(comps).rows():
    print(row)
