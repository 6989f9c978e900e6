"""
Ranking coupled positions against marginal baselines
====================================================

A Potts model stands in for a protein family: neighbouring positions and a
few long-range pairs are coupled. Rows are then shuffled within groups of
five consecutive positions, which keeps every within-group dependence and
breaks every cross-group one. Pairs inside a group are the positives.

Three scores rank the pairs: the standardized CATParc statistic, the
PSICOV block sum of a graphical lasso precision matrix, and mutual
information.
"""

import warnings

from catparc import SimDesign, auc, potts_family, score_methods, simulate

source = potts_family(m=30, N=3000, seed=100)
alignment, truth = simulate(SimDesign(mode="permute", u=6, h=5, seed=0, source=source,
                                      trim=0.005))
print(f"{alignment.N} sequences, {alignment.m} positions, "
      f"{sum(truth.values())} positive pairs out of {len(truth)}")

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    scored = score_methods(alignment, methods=("catparc", "psicov", "mi"), weighted=False)

for method, d in scored.items():
    print(f"{method:8s} AUC {auc(d['score'], truth):.3f}")

# Positives include pairs three or four positions apart. The Potts model
# couples them only through intermediate positions, so a partial
# correlation test is right to call many of them conditionally
# independent, while mutual information still sees the chain.
far = {k: v for k, v in truth.items() if not v or abs(k[0] - k[1]) <= 2}
print("\nrestricted to positives at distance <= 2:")
for method, d in scored.items():
    print(f"{method:8s} AUC {auc(d['score'], far):.3f}")
