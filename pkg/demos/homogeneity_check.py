"""Test whether imputations are spread like the census within a stratum."""

import numpy as np

from synthdse.homogeneity import chi_square_homogeneity, equality_condition
from synthdse.model import SimConfig
from synthdse.simulator import homogeneity_rejection_rate, simulate_measurement

# 50 regions of 10,000 people; half impute 1% of their records, half 10%.
het = SimConfig(1, 50, true_pop=10_000, capture_prob=1.0, ii_rate=[0.01, 0.10] * 25, seed=1)
cells, _ = simulate_measurement(np.full((1, 50), 10_000), het)
res = chi_square_homogeneity(cells)
print(f"heterogeneous: chi2 {res.statistic:.1f} on {res.df} df, p = {res.p_value:.3g}")
print("equality condition holds:", equality_condition(cells)[0])

# The same world with one shared rate. The test should reject about 5% of
# the time at the 5% level.
homog = SimConfig(1, 50, true_pop=2_000, capture_prob=0.95, ii_rate=0.05, n_reps=500, seed=2)
print(f"homogeneous: rejection rate {homogeneity_rejection_rate(homog):.3f} over {homog.n_reps} replicates")
