"""
Coupling features for mutants
=============================

Partial covariances between residue columns define a pairwise score C(a)
and a marginal score M(a) for any sequence a. A mutant is summarized by
its differences from the wild type, dC and dM. Only pairs that touch a
mutated position change, so single mutants are cheap to score.
"""

import warnings

import numpy as np

from catparc import (SimDesign, delta_features, encode, one_vs_rest_all, partial_cov_map,
                     simulate, spearman)

alignment, _ = simulate(SimDesign(u=3, h=3, N=1500, seed=5, r=0.6,
                                  quantiles=(0.25, 0.5, 0.75)))
enc = encode(alignment)
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    cmap = partial_cov_map(one_vs_rest_all(enc))

wt = alignment.sequences[0]
rng = np.random.default_rng(0)
mutants = []
for k in range(200):
    pos = rng.integers(len(wt))
    choices = [r for r in enc.residues(enc.index_of(pos)) if r != wt[pos]]
    s = list(wt)
    s[pos] = rng.choice(choices)
    mutants.append((f"m{k}", "".join(s)))

rows = delta_features(mutants, wt, cmap)
dC = np.array([r.deltaC for r in rows])
dM = np.array([r.deltaM for r in rows])
print(f"dC range [{dC.min():.3f}, {dC.max():.3f}], dM range [{dM.min():.3f}, {dM.max():.3f}]")

# A synthetic fitness readout that rewards keeping coupled residues together
effect = dC + rng.normal(0, dC.std() * 0.5, size=dC.size)
print(f"spearman(dC, effect) = {spearman(dC, effect):.3f}")
print(f"spearman(dM, effect) = {spearman(dM, effect):.3f}")
print("wild type:", delta_features([("wt", wt)], wt, cmap)[0])
