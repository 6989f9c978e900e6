"""Synthetic categorical alignments with known partial-correlation structure.

Three mechanisms are provided: permuting row blocks of an existing
alignment (cross-group dependence destroyed, within-group dependence
kept), thresholding a block-diagonal latent Gaussian, and sampling whole
groups from joint category tables. In every design positions come in
``u`` consecutive groups of ``h``; within-group pairs are labelled
positive. :func:`potts_family` supplies a source alignment for the
permutation design when no real family is at hand.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import ParameterError
from .msa import AMINO_ACIDS, GAP, Alignment, trim_rare_residues


def group_truth(m: int, u: int, h: int) -> dict:
    """{(i, j): True if same group} for 0 <= i < j < u*h."""
    if u * h > m:
        raise ParameterError("u*h exceeds number of positions")
    n = u * h
    return {(i, j): (i // h) == (j // h) for i in range(n) for j in range(i + 1, n)}


def permute_groups(a: Alignment, u: int, h: int, seed=None, permutations=None) -> Alignment:
    """Shuffle rows independently within each group of h consecutive positions.

    Positions beyond ``u*h`` are dropped. ``permutations`` (one index array
    per group) overrides the seeded draws.
    """
    if a.N < 2:
        raise ParameterError("need at least 2 sequences")
    n = u * h
    if n > a.m:
        raise ParameterError(f"u*h = {n} exceeds alignment length {a.m}")
    mat = a.matrix()[:, :n]
    if permutations is None:
        rng = np.random.default_rng(seed)
        permutations = [rng.permutation(a.N) for _ in range(u)]
    out = np.empty_like(mat)
    for g in range(u):
        cols = slice(g * h, (g + 1) * h)
        out[:, cols] = mat[np.asarray(permutations[g]), cols]
    return Alignment.from_matrix(out, a.ids)


def _letters(n_cat: int, gap: bool) -> list:
    letters = list(AMINO_ACIDS[: n_cat - 1 if gap else n_cat])
    return ([GAP] + letters) if gap else letters


def _exchangeable_block(h: int, r: float) -> np.ndarray:
    if not -1.0 / max(h - 1, 1) < r < 1.0:
        raise ParameterError(f"correlation {r} gives a non-PSD {h}x{h} block")
    return (1 - r) * np.eye(h) + r * np.ones((h, h))


@dataclass
class SimDesign:
    """Parameters of a simulated data set.

    Attributes
    ----------
    mode : {"permute", "latent_gaussian", "multinomial"}
    u, h : int
        Number of groups and positions per group.
    N : int
        Sequences drawn (latent_gaussian, multinomial).
    seed : int
    r : float or sequence of float
        Within-group latent correlation, one value or one per group.
    quantiles : sequence
        Cut probabilities. Either one increasing sequence shared by all
        positions or one sequence per position.
    gap_category : bool
        Emit the lowest latent category as a gap.
    covariances : list of ndarray, optional
        Explicit per-group latent covariance, overriding ``r``.
    tables : list of ndarray, optional
        Per-group joint probability tables with ``h`` axes (multinomial).
    source : Alignment, optional
        Alignment to permute (permute mode).
    positions : (int, int), optional
        Half-open range of source positions kept before permuting.
    trim : float
        Rare-residue trimming threshold applied to the source.
    """

    mode: str = "latent_gaussian"
    u: int = 6
    h: int = 5
    N: int = 2000
    seed: int = 0
    r: float | Sequence[float] = 0.0
    quantiles: Sequence = (1 / 3, 2 / 3)
    gap_category: bool = False
    covariances: list | None = None
    tables: list | None = None
    source: Alignment | None = field(default=None, repr=False)
    positions: tuple | None = None
    trim: float = 0.0

    @property
    def m(self) -> int:
        return self.u * self.h

    def truth(self) -> dict:
        return group_truth(self.m, self.u, self.h)


def _position_cuts(design: SimDesign) -> list:
    q = design.quantiles
    if len(q) and np.ndim(q[0]) > 0:
        if len(q) != design.m:
            raise ParameterError("need one quantile list per position")
        return [np.asarray(x, dtype=float) for x in q]
    return [np.asarray(q, dtype=float)] * design.m


def latent_gaussian_generator(design: SimDesign) -> Alignment:
    """Threshold a block-diagonal Gaussian into categories.

    Group g has latent covariance ``covariances[g]`` or the exchangeable
    matrix with correlation ``r[g]``; groups are independent. Each
    coordinate is cut at the standard-normal quantiles of its cut
    probabilities.
    """
    rng = np.random.default_rng(design.seed)
    u, h, N = design.u, design.h, design.N
    rs = np.broadcast_to(np.asarray(design.r, dtype=float), (u,))
    Z = np.empty((N, u * h))
    for g in range(u):
        if design.covariances is not None:
            cov = np.asarray(design.covariances[g], dtype=float)
            if np.linalg.eigvalsh(cov)[0] < -1e-12:
                raise ParameterError(f"latent covariance of group {g} is not PSD")
        else:
            cov = _exchangeable_block(h, float(rs[g]))
        L = np.linalg.cholesky(cov + 1e-12 * np.eye(h))
        Z[:, g * h:(g + 1) * h] = rng.standard_normal((N, h)) @ L.T
    mat = np.empty(Z.shape, dtype="<U1")
    for p, cuts in enumerate(_position_cuts(design)):
        thresholds = stats.norm.ppf(cuts)
        cat = np.searchsorted(thresholds, Z[:, p])
        letters = np.array(_letters(len(cuts) + 1, design.gap_category))
        mat[:, p] = letters[cat]
    return Alignment.from_matrix(mat)


def multinomial_generator(design: SimDesign) -> Alignment:
    """Draw each group's h positions jointly from its category table."""
    if design.tables is None or len(design.tables) != design.u:
        raise ParameterError("multinomial mode needs one table per group")
    rng = np.random.default_rng(design.seed)
    cols = []
    for g, table in enumerate(design.tables):
        t = np.asarray(table, dtype=float)
        if t.ndim != design.h or np.any(t < 0) or not np.isclose(t.sum(), 1.0):
            raise ParameterError(f"table {g} must be a probability array with h axes")
        flat = rng.choice(t.size, size=design.N, p=t.ravel() / t.sum())
        idx = np.unravel_index(flat, t.shape)
        for axis in range(design.h):
            letters = np.array(_letters(t.shape[axis], design.gap_category))
            cols.append(letters[idx[axis]])
    return Alignment.from_matrix(np.column_stack(cols))


def permuted_source(design: SimDesign) -> Alignment:
    """Crop and trim the source alignment, then permute group rows."""
    if design.source is None:
        raise ParameterError("permute mode needs a source alignment")
    a = design.source
    if design.positions is not None:
        a = a.columns(range(*design.positions))
    if design.trim > 0:
        a = trim_rare_residues(a, design.trim)
    return permute_groups(a, design.u, design.h, design.seed)


def simulate(design: SimDesign):
    """Return ``(alignment, truth)`` for the design."""
    if design.mode == "permute":
        a = permuted_source(design)
    elif design.mode == "latent_gaussian":
        a = latent_gaussian_generator(design)
    elif design.mode == "multinomial":
        a = multinomial_generator(design)
    else:
        raise ParameterError(f"unknown simulation mode {design.mode!r}")
    return a, design.truth()


def potts_family(m: int = 30, N: int = 3000, seed: int = 0, n_states=(4, 16),
                 field_sd: float = 1.0, coupling_sd: float = 0.5, long_range: float = 0.1,
                 sweeps: int = 60) -> Alignment:
    """Stand-in for a protein family alignment, drawn from a Potts model.

    Position i takes one of ``q_i`` residues (``q_i`` uniform on
    ``n_states``) with energy ``sum_i h_i(a_i) + sum_(i,j) in E J_ij(a_i, a_j)``.
    The contact graph E holds sequence neighbours at distance 1 and 2 plus
    each longer-range pair with probability ``long_range``; fields and
    couplings are Gaussian. Rows are independent Gibbs chains started
    uniformly and run for ``sweeps`` systematic sweeps.
    """
    rng = np.random.default_rng(seed)
    lo, hi = n_states
    if not 2 <= lo <= hi <= len(AMINO_ACIDS):
        raise ParameterError("n_states must satisfy 2 <= lo <= hi <= 20")
    q = rng.integers(lo, hi + 1, size=m)
    fields = [rng.normal(0.0, field_sd, size=k) for k in q]
    edges = [(i, i + d) for d in (1, 2) for i in range(m - d)]
    edges += [(i, j) for i in range(m) for j in range(i + 3, m) if rng.random() < long_range]
    nbrs = {i: [] for i in range(m)}
    for i, j in sorted(edges):
        J = rng.normal(0.0, coupling_sd, size=(q[i], q[j]))
        nbrs[i].append((j, J))
        nbrs[j].append((i, J.T))
    S = np.column_stack([rng.integers(0, k, size=N) for k in q])
    for _ in range(sweeps):
        for i in range(m):
            e = np.broadcast_to(fields[i], (N, q[i])).copy()
            for j, J in nbrs[i]:
                e += J[:, S[:, j]].T
            e -= e.max(axis=1, keepdims=True)
            p = np.exp(e)
            p /= p.sum(axis=1, keepdims=True)
            u = rng.random(N)[:, None]
            S[:, i] = np.minimum((np.cumsum(p, axis=1) < u).sum(axis=1), q[i] - 1)
    letters = [np.array(rng.choice(list(AMINO_ACIDS), size=k, replace=False)) for k in q]
    return Alignment.from_matrix(np.column_stack([letters[i][S[:, i]] for i in range(m)]))
