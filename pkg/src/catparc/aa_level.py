"""Residue-level partial correlations within a position pair.

For residual blocks ``Ei`` (N x d_i) and ``Ej`` (N x d_j) the statistic for
residue columns (t1, t2) is the self-normalized sum::

    z = sum_k Ei[k, t1] Ej[k, t2] / sqrt(sum_k Ei[k, t1]^2 Ej[k, t2]^2)

which is asymptotically standard normal when the two residue columns are
partially uncorrelated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError, ParameterError
from .inference import ResidualCache, bh_adjust, pair_residuals
from .linalg_stats import normal_two_sided
from .msa import AMINO_ACIDS

# Murphy, Wallqvist and Levy (2000), 8-letter reduced alphabet
MURPHY_8 = ("LVIMC", "AG", "ST", "P", "FYW", "EDNQ", "KR", "H")


@dataclass(frozen=True, eq=False)
class AAPairMatrix:
    """Residue-level statistics for positions i and j.

    ``rho_hat`` holds the normalized statistics (NaN where the denominator
    vanished, see ``missing``); ``pvals`` are two-sided normal p-values.
    """

    i: int
    j: int
    rho_hat: np.ndarray
    pvals: np.ndarray
    labels_i: tuple
    labels_j: tuple
    missing: np.ndarray

    def entries(self):
        """Yield ``(res_i, res_j, z, p)`` for every non-missing entry."""
        for a, ra in enumerate(self.labels_i):
            for b, rb in enumerate(self.labels_j):
                if not self.missing[a, b]:
                    yield ra, rb, float(self.rho_hat[a, b]), float(self.pvals[a, b])


@dataclass(frozen=True, eq=False)
class AAGroupStrength:
    """Spectral norms of ``rho_hat`` submatrices per residue-group pair."""

    names: tuple
    strength: np.ndarray


@dataclass(frozen=True)
class Grouping:
    """Partition of the 20 residues into named groups."""

    names: tuple
    members: tuple  # tuple of str, one per group

    def __post_init__(self):
        seen = "".join(self.members)
        if len(seen) != len(set(seen)):
            raise ParameterError("residue assigned to more than one group")
        unknown = set(seen) - set(AMINO_ACIDS)
        if unknown:
            raise ParameterError(f"unknown residues in grouping: {sorted(unknown)}")

    def group_of(self, residue: str) -> int:
        for g, mem in enumerate(self.members):
            if residue in mem:
                return g
        raise InputError(f"residue {residue!r} not covered by the grouping")


def murphy8() -> Grouping:
    return Grouping(MURPHY_8, MURPHY_8)


def read_grouping(path) -> Grouping:
    """Grouping file: one group per line, ``name<TAB>residues`` or just ``residues``.

    Blank lines and ``#`` comments are ignored.
    """
    names, members = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            res = parts[-1].upper()
            names.append(parts[0] if len(parts) > 1 else res)
            members.append(res)
    if not members:
        raise InputError(f"{path}: empty grouping file")
    return Grouping(tuple(names), tuple(members))


def normalized_partial_corr(Ei, Ej, i: int = 0, j: int = 1, labels_i=None,
                            labels_j=None) -> AAPairMatrix:
    """Self-normalized residue-level statistics and two-sided normal p-values."""
    Ei = np.asarray(Ei, dtype=float)
    Ej = np.asarray(Ej, dtype=float)
    if Ei.shape[0] != Ej.shape[0]:
        raise InputError("residual blocks differ in number of rows")
    num = Ei.T @ Ej
    den2 = (Ei * Ei).T @ (Ej * Ej)
    missing = ~(den2 > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(missing, np.nan, num / np.sqrt(np.where(missing, 1.0, den2)))
    p = np.where(missing, np.nan, normal_two_sided(np.nan_to_num(z)))
    labels_i = tuple(labels_i) if labels_i is not None else tuple(range(Ei.shape[1]))
    labels_j = tuple(labels_j) if labels_j is not None else tuple(range(Ej.shape[1]))
    return AAPairMatrix(i, j, z, np.asarray(p, dtype=float).reshape(z.shape), labels_i,
                        labels_j, missing)


def aa_pair(cache: ResidualCache, i: int, j: int) -> AAPairMatrix:
    """Residue-level statistics for encoded positions i and j, labelled by residue.

    ``i`` and ``j`` of the result are the original alignment positions.
    """
    enc = cache.enc
    res = pair_residuals(cache, i, j)
    return normalized_partial_corr(res.E_i, res.E_j, enc.positions[i], enc.positions[j],
                                   enc.residues(i), enc.residues(j))


def aa_group_strength(aa: AAPairMatrix, grouping: Grouping | None = None) -> AAGroupStrength:
    """Largest singular value of ``rho_hat`` restricted to each residue-group pair.

    Missing entries count as 0; a group with no residue at a position gives
    an empty submatrix of strength 0.
    """
    grouping = grouping or murphy8()
    G = len(grouping.members)
    rows = [[a for a, r in enumerate(aa.labels_i) if r in grouping.members[g]] for g in range(G)]
    cols = [[b for b, r in enumerate(aa.labels_j) if r in grouping.members[g]] for g in range(G)]
    Z = np.nan_to_num(aa.rho_hat)
    out = np.zeros((G, G))
    for g in range(G):
        for h in range(G):
            if rows[g] and cols[h]:
                out[g, h] = np.linalg.norm(Z[np.ix_(rows[g], cols[h])], 2)
    return AAGroupStrength(grouping.names, out)


def top_aa_pairs(aa: AAPairMatrix, p_cutoff: float = 0.05, k: int | None = None) -> list:
    """Entries with p < p_cutoff (p <= 1 when the cutoff is 1), by |z| descending.

    Returns ``(res_i, res_j, z, p)`` tuples, at most ``k`` of them.
    """
    if not 0 < p_cutoff <= 1:
        raise ParameterError("p_cutoff must lie in (0, 1]")
    keep = [e for e in aa.entries() if e[3] < p_cutoff or (p_cutoff == 1 and e[3] <= 1)]
    keep.sort(key=lambda e: (-abs(e[2]), str(e[0]), str(e[1])))
    return keep if k is None else keep[:max(k, 0)]


def _fmt(x: float) -> str:
    return "NA" if math.isnan(x) else f"{x:.10g}"


def write_aa_tsv(aa: AAPairMatrix, path) -> None:
    """``res_i res_j z p bh_adj_p``, BH applied within the pair."""
    rows = list(aa.entries())
    adj = bh_adjust([r[3] for r in rows])
    rows = sorted(zip(rows, adj), key=lambda t: (t[0][3], -abs(t[0][2]), str(t[0][0]), str(t[0][1])))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("res_i\tres_j\tz\tp\tbh_adj_p\n")
        for (ra, rb, z, p), q in rows:
            fh.write(f"{ra}\t{rb}\t{_fmt(z)}\t{_fmt(p)}\t{_fmt(float(q))}\n")


def write_group_strength_tsv(gs: AAGroupStrength, path, pos_i: int | None = None,
                             pos_j: int | None = None) -> None:
    """Long-format ``[i j] group_i group_j strength`` table (1-based positions)."""
    with_pos = pos_i is not None and pos_j is not None
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(("i\tj\t" if with_pos else "") + "group_i\tgroup_j\tstrength\n")
        for g, a in enumerate(gs.names):
            for h, b in enumerate(gs.names):
                prefix = f"{pos_i + 1}\t{pos_j + 1}\t" if with_pos else ""
                fh.write(f"{prefix}{a}\t{b}\t{gs.strength[g, h]:.10g}\n")
