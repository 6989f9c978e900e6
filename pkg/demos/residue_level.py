"""
Which residues carry a coupling
===============================

Once a position pair is flagged, the residue-level statistic asks which
residue combinations drive it. For residual columns t1 and t2 it is the
self-normalized cross-product, asymptotically standard normal when the
two residues are partially uncorrelated.
"""

import warnings

import numpy as np

from catparc import (SimDesign, aa_group_strength, aa_pair, encode, one_vs_rest_all, simulate,
                     top_aa_pairs)

# two groups of two positions; only within-group pairs are dependent
alignment, truth = simulate(SimDesign(u=2, h=2, N=5000, seed=3, r=0.6,
                                      quantiles=(0.2, 0.45, 0.7, 0.9)))
enc = encode(alignment)
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    cache = one_vs_rest_all(enc)

for (i, j), coupled in sorted(truth.items()):
    aa = aa_pair(cache, enc.index_of(i), enc.index_of(j))
    z = aa.rho_hat[~aa.missing]
    top = top_aa_pairs(aa, 0.05, k=3)
    label = "coupled" if coupled else "null"
    print(f"positions {i + 1},{j + 1} ({label}): max |z| {np.max(np.abs(z)):.2f}, "
          f"top entries {[(a, b, round(s, 2)) for a, b, s, _ in top]}")

# Residues can also be pooled into physico-chemical groups; the strength of
# a group pair is the largest singular value of its block of z values.
aa = aa_pair(cache, 0, 1)
gs = aa_group_strength(aa)
g, h = np.unravel_index(np.argmax(gs.strength), gs.strength.shape)
print(f"\nstrongest group pair at positions 1,2: {gs.names[g]} x {gs.names[h]} "
      f"({gs.strength[g, h]:.2f})")
