"""Coupling features for mutant sequences.

With ``C_ij`` the empirical partial covariance between the residue
columns of positions i and j, a sequence ``a`` scores::

    C(a) = sum_{i<j} C_ij(a_i, a_j)
    M(a) = sum_i M_i(a_i),   M_i(c) = sum_{j != i} sum_b C_ij(c, b)

and a mutant is described by its differences from the wild type. All
blocks are stored in one D x D matrix with zero diagonal blocks, so that
``C(a) = x^T K x / 2`` and ``M(a) = (K 1)^T x`` for the residue indicator
vector ``x`` of ``a``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import InputError, ParameterError
from .inference import ResidualCache, pair_residuals
from .msa import GAP, EncodedMatrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PartialCovMap:
    """Pairwise partial covariance blocks of an encoded alignment.

    Attributes
    ----------
    K : ndarray, shape (D, D)
        Symmetric; block (i, j) is ``C_ij`` and diagonal blocks are 0.
    enc : EncodedMatrix
        Provides the block layout and residue labels.
    missing : frozenset
        Encoded pairs whose block could not be computed (left at 0).
    method : str
        ``"catparc"`` (residual covariances) or ``"psicov"`` (precision blocks).
    """

    K: np.ndarray
    enc: EncodedMatrix
    missing: frozenset = frozenset()
    method: str = "catparc"

    def block(self, i: int, j: int) -> np.ndarray:
        return self.K[self.enc.cols(i), self.enc.cols(j)]

    def marginal(self) -> np.ndarray:
        """``M_i(c)`` for every encoded column."""
        return self.K.sum(axis=1)


def partial_cov_map(cache: ResidualCache, pairs=None, pvalues: dict | None = None,
                    p_max: float | None = None) -> PartialCovMap:
    """``C_ij = Ei^T Ej / N`` from pair residuals.

    Parameters
    ----------
    cache : ResidualCache
    pairs : iterable of (int, int), optional
        Encoded pairs to include; default all pairs of fitted positions.
    pvalues : dict, optional
        ``{(pos_i, pos_j): p}`` keyed by original positions (smaller first).
    p_max : float, optional
        With ``pvalues``, keep only pairs with p <= p_max; others are 0.
    """
    enc = cache.enc
    if p_max is not None and pvalues is None:
        raise ParameterError("p_max needs pvalues")
    K = np.zeros((enc.D, enc.D))
    if pairs is None:
        ks = sorted(cache.fits)
        pairs = [(a, b) for n, a in enumerate(ks) for b in ks[n + 1:]]
    missing = set()
    for a, b in pairs:
        if a not in cache or b not in cache:
            missing.add((a, b))
            continue
        if p_max is not None:
            key = tuple(sorted((enc.positions[a], enc.positions[b])))
            p = pvalues.get(key, math.nan)
            if not p <= p_max:
                continue
        res = pair_residuals(cache, a, b)
        if not res.converged:
            missing.add((a, b))
            continue
        C = res.E_i.T @ res.E_j / enc.N
        K[enc.cols(a), enc.cols(b)] = C
        K[enc.cols(b), enc.cols(a)] = C.T
    missing |= {(k, x) for k in cache.failed for x in range(enc.m) if x != k}
    if missing:
        logger.warning("%d pair block(s) unavailable; treated as 0", len(missing))
    return PartialCovMap(K, enc, frozenset(missing), "catparc")


def precision_map(precision, enc: EncodedMatrix) -> PartialCovMap:
    """Feature map built from precision-matrix blocks in place of ``C_ij``."""
    P = np.array(getattr(precision, "precision", precision), dtype=float)
    if P.shape != (enc.D, enc.D):
        raise ParameterError("precision matrix does not match the encoding")
    for k in range(enc.m):
        P[enc.cols(k), enc.cols(k)] = 0.0
    return PartialCovMap(P, enc, frozenset(), "psicov")


def _column_lookup(enc: EncodedMatrix) -> dict:
    out = {}
    for c, (pos, res) in enumerate(enc.column_labels):
        out[(pos, res)] = c
    return out


def indicator(seq: str, cmap: PartialCovMap, lookup: dict | None = None):
    """(x, unseen): indicator vector of ``seq`` over encoded columns.

    A residue that has no encoded column at its position (never observed
    there) contributes nothing and is counted in ``unseen``; gaps and
    positions dropped by the encoding are ignored.
    """
    enc = cmap.enc
    if len(seq) != enc.n_positions:
        raise InputError(f"sequence length {len(seq)} != alignment length {enc.n_positions}")
    lookup = lookup or _column_lookup(enc)
    x = np.zeros(enc.D)
    unseen = 0
    for pos in enc.positions:
        r = seq[pos].upper()
        if r == GAP or r == ".":
            continue
        c = lookup.get((pos, r))
        if c is None:
            unseen += 1
        else:
            x[c] = 1.0
    return x, unseen


def sequence_scores(seq: str, cmap: PartialCovMap):
    """(C(a), M(a), unseen_count) for one sequence."""
    x, unseen = indicator(seq, cmap)
    return 0.5 * float(x @ cmap.K @ x), float(cmap.marginal() @ x), unseen


@dataclass(frozen=True)
class FeatureRow:
    id: str
    deltaC: float
    deltaM: float
    n_mutations: int
    unseen_count: int = 0


def delta_features(mutants, wildtype: str, cmap: PartialCovMap) -> list:
    """Feature rows for ``mutants``, a list of ``(id, sequence)`` pairs.

    Only pairs touching a mutated position are evaluated:
    ``dC = d^T K w + d^T K d / 2`` with ``d = x(a) - x(w)``.
    """
    lookup = _column_lookup(cmap.enc)
    w, _ = indicator(wildtype, cmap, lookup)
    Kw = cmap.K @ w
    marg = cmap.marginal()
    out = []
    for mid, seq in mutants:
        if len(seq) != len(wildtype):
            raise InputError(f"mutant {mid}: length {len(seq)} != wild type {len(wildtype)}")
        x, unseen = indicator(seq, cmap, lookup)
        d = x - w
        nz = np.flatnonzero(d)
        if nz.size:
            dn = d[nz]
            dC = float(dn @ Kw[nz] + 0.5 * dn @ cmap.K[np.ix_(nz, nz)] @ dn)
            dM = float(marg[nz] @ dn)
        else:
            dC = dM = 0.0
        n_mut = sum(1 for a, b in zip(seq.upper(), wildtype.upper()) if a != b)
        out.append(FeatureRow(str(mid), dC, dM, n_mut, unseen))
    return out


def spearman(x, y) -> float:
    """Spearman rank correlation (average ranks for ties); NaN for constant input."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size:
        raise InputError("spearman: inputs differ in length")
    if x.size < 2 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return math.nan
    return float(stats.spearmanr(x, y).statistic)


def read_mutants(path):
    """CSV ``id,sequence[,effect]`` -> (list of (id, sequence), effects or None)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        if "id" not in fields or "sequence" not in fields:
            raise InputError(f"{path}: need columns id,sequence[,effect]")
        rows = list(reader)
    muts = [(r["id"], r["sequence"].strip()) for r in rows]
    effects = None
    if "effect" in fields:
        effects = [float(r["effect"]) if r["effect"] not in ("", "NA") else math.nan for r in rows]
    return muts, effects


FEATURE_COLUMNS = ("id", "deltaC", "deltaM", "n_mutations", "unseen_count")


def write_features(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FEATURE_COLUMNS)
        for r in rows:
            w.writerow([r.id, f"{r.deltaC:.10g}", f"{r.deltaM:.10g}", r.n_mutations, r.unseen_count])
