"""Position-pair partial correlation tests.

Pipeline for an encoded alignment:

1. regress every position block on all other blocks (group Lasso) and keep
   the fits in a :class:`ResidualCache`;
2. for a pair (i, j), reuse the one-vs-rest residual of i when its fitted
   coefficient block for j is zero, otherwise refit i on the blocks other
   than i and j (same for j);
3. compute squared sample canonical correlations of the two residual
   blocks, the statistic ``T = -N sum log(1 - r^2)``, the fourth-moment
   estimate of the covariance of the scaled cross-covariance vector, and
   p-values from the weighted and the central chi-squared references.
"""

from __future__ import annotations

import logging
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .errors import CatparcError, ParameterError, SingularityError
from .group_lasso import (FitResult, GroupPenaltySpec, RankDeficientBlockWarning, _fit_gram,
                          lambda_schedule)
from .linalg_stats import clamp_weights, inv_sqrt_sym, sym_eig, weighted_chisq_tail
from .msa import EncodedMatrix

logger = logging.getLogger(__name__)

R2_CAP = 1.0 - 1e-12


@dataclass(frozen=True)
class InferenceOptions:
    """Run options for :func:`test_all_pairs`.

    ``tail`` selects the p-value used for ranking and BH adjustment.
    The weighted-reference p-value is computed when ``weighted`` is True or
    ``tail == "weighted"``.
    """

    tol: float = 1e-6
    max_iter: int = 1000
    tail: str = "chisq"
    weighted: bool = False
    tail_method: str = "imhof"
    threads: int = 1

    @property
    def compute_weighted(self) -> bool:
        return self.weighted or self.tail == "weighted"


def default_threads() -> int:
    env = os.environ.get("CATPARC_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


class ResidualCache:
    """One-vs-rest fits for every encoded position."""

    def __init__(self, enc: EncodedMatrix, spec: GroupPenaltySpec, fits: dict,
                 failed=(), tol=1e-6, max_iter=1000):
        self.enc = enc
        self.spec = spec
        self.fits = fits
        self.failed = tuple(failed)
        self.tol = tol
        self.max_iter = max_iter
        self._eigs = None

    def __contains__(self, k) -> bool:
        return k in self.fits

    def __getitem__(self, k) -> FitResult:
        return self.fits[k]

    def residual(self, k) -> np.ndarray:
        return self.fits[k].residuals

    def block_eigs(self):
        if self._eigs is None:
            self._eigs = _block_eigs(self.enc)
        return self._eigs


def _block_eigs(enc: EncodedMatrix):
    G = enc.gram()
    out = []
    for k in range(enc.m):
        s = enc.cols(k)
        h, V = np.linalg.eigh(G[s, s])
        out.append((h[::-1].copy(), V[:, ::-1].copy()))
    return out


def _regress_block(enc: EncodedMatrix, resp: int, exclude, spec: GroupPenaltySpec, n_groups: int,
                   tol: float, max_iter: int, eigs, B0=None) -> FitResult:
    G = enc.gram()
    X = enc.X
    pred = [k for k in range(enc.m) if k != resp and k not in exclude]
    rcols = np.arange(*enc.bounds[resp])
    Y = X[:, rcols]
    if not pred:
        return FitResult(np.zeros((0, rcols.size)), Y.copy(), frozenset(), 0.5 * float(np.sum(Y * Y)) / enc.N,
                         0, True, (), ())
    pcols = np.concatenate([np.arange(*enc.bounds[k]) for k in pred])
    index, start = [], 0
    for k in pred:
        d = enc.bounds[k][1] - enc.bounds[k][0]
        index.append(np.arange(start, start + d))
        start += d
    lam = spec.lambdas([enc.d[k] for k in pred], rcols.size, enc.N, n_groups=n_groups)
    Gp = G[np.ix_(pcols, pcols)]
    C = G[np.ix_(pcols, rcols)]
    yty = float(np.trace(G[np.ix_(rcols, rcols)]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankDeficientBlockWarning)
        B, obj, sweeps, conv = _fit_gram(Gp, C, yty, index, lam, B0, tol, max_iter,
                                         eigs=[eigs[k] for k in pred])
    E = Y - X[:, pcols] @ B
    active = frozenset(k for k, ix in zip(pred, index) if np.any(B[ix]))
    return FitResult(B, E, active, obj, sweeps, conv, tuple(pred), tuple(index))


def one_vs_rest_all(enc: EncodedMatrix, spec: GroupPenaltySpec | None = None, tol: float = 1e-6,
                    max_iter: int = 1000, threads: int = 1) -> ResidualCache:
    """Regress each position block on all other blocks."""
    spec = spec or GroupPenaltySpec()
    if enc.m < 2:
        raise CatparcError("need at least two encoded positions")
    if not enc.standardized:
        raise ParameterError("encoded matrix must be standardized (use msa.encode)")
    eigs = _block_eigs(enc)

    def run(k):
        try:
            fit = _regress_block(enc, k, (), spec, enc.m - 1, tol, max_iter, eigs)
        except (CatparcError, np.linalg.LinAlgError) as exc:
            logger.warning("one-vs-rest fit for position %d failed: %s", enc.positions[k], exc)
            return k, None
        if not fit.converged:
            logger.warning("one-vs-rest fit for position %d did not converge", enc.positions[k])
            return k, None
        return k, fit

    results = _map(run, range(enc.m), threads)
    fits = {k: f for k, f in results if f is not None}
    failed = [k for k, f in results if f is None]
    if failed:
        warnings.warn(f"{len(failed)} position(s) excluded after failed fits", stacklevel=2)
    cache = ResidualCache(enc, spec, fits, failed, tol, max_iter)
    cache._eigs = eigs
    return cache


C_GRID = (0.01, 0.02, 0.035, 0.05, 0.07, 0.1, 0.15, 0.2, 0.3, 0.5)


def tune_c(enc: EncodedMatrix, frac: float = 0.1, grid=C_GRID, folds: int = 5, A: float = 2.0,
           seed: int = 0, tol: float = 1e-6, max_iter: int = 1000) -> float:
    """Median over a random subset of positions of the cross-validated best C.

    For each sampled position the one-vs-rest regression is refit on
    ``folds - 1`` folds for every C in ``grid`` and scored by held-out
    squared error; the C with the smallest total error is that position's
    choice.
    """
    if not 0 < frac <= 1:
        raise ParameterError("tune fraction must lie in (0, 1]")
    if folds < 2:
        raise ParameterError("need at least 2 folds")
    rng = np.random.default_rng(seed)
    n_pick = max(1, int(round(frac * enc.m)))
    picked = sorted(rng.choice(enc.m, size=n_pick, replace=False).tolist())
    fold_of = rng.permutation(enc.N) % folds
    X = enc.X
    best = []
    for k in picked:
        pred = [q for q in range(enc.m) if q != k]
        if not pred:
            continue
        rcols = np.arange(*enc.bounds[k])
        pcols = np.concatenate([np.arange(*enc.bounds[q]) for q in pred])
        index, start = [], 0
        for q in pred:
            index.append(np.arange(start, start + enc.d[q]))
            start += enc.d[q]
        err = np.zeros(len(grid))
        for f in range(folds):
            tr = fold_of != f
            Xt, Yt = X[np.ix_(tr, pcols)], X[np.ix_(tr, rcols)]
            n = int(tr.sum())
            G, Cm, yty = Xt.T @ Xt / n, Xt.T @ Yt / n, float(np.sum(Yt * Yt)) / n
            B = None
            # largest C first so each fit warm-starts from a sparser one
            for c_idx in np.argsort(grid)[::-1]:
                lam = lambda_schedule([enc.d[q] for q in pred], rcols.size, n, A, grid[c_idx],
                                      n_groups=enc.m - 1)
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RankDeficientBlockWarning)
                    B, _, _, _ = _fit_gram(G, Cm, yty, index, lam, B, tol, max_iter)
                R = X[np.ix_(~tr, rcols)] - X[np.ix_(~tr, pcols)] @ B
                err[c_idx] += float(np.sum(R * R))
        best.append(grid[int(np.argmin(err))])
    return float(np.median(best))


def _map(fn, items, threads):
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True, eq=False)
class PairResiduals:
    E_i: np.ndarray
    E_j: np.ndarray
    refit_i: bool
    refit_j: bool
    converged: bool = True


def _side_residual(cache: ResidualCache, k: int, other: int):
    enc = cache.enc
    fit = cache[k]
    if other not in fit.group_labels or not np.any(fit.block(other)):
        return fit.residuals, False, True
    # warm start: one-vs-rest coefficients with the other block removed
    pos = fit.group_labels.index(other)
    keep = np.ones(fit.B.shape[0], dtype=bool)
    keep[fit.group_index[pos]] = False
    refit = _regress_block(enc, k, (other,), cache.spec, enc.m - 2, cache.tol, cache.max_iter,
                           cache.block_eigs(), B0=fit.B[keep])
    return refit.residuals, True, refit.converged


def pair_residuals(cache: ResidualCache, i: int, j: int) -> PairResiduals:
    """Residuals of blocks i and j after regressing out every other block.

    When only two positions exist the predictor set is empty and the
    residuals are the (centered) blocks themselves.
    """
    if i == j:
        raise ValueError("pair needs two distinct positions")
    Ei, ri, ci = _side_residual(cache, i, j)
    Ej, rj, cj = _side_residual(cache, j, i)
    return PairResiduals(Ei, Ej, ri, rj, ci and cj)


def _cov_blocks(Ei, Ej):
    N = Ei.shape[0]
    S11 = Ei.T @ Ei / N
    S22 = Ej.T @ Ej / N
    S12 = Ei.T @ Ej / N
    return S11, S22, S12


def wilks_pair(Ei, Ej, N: int | None = None, ridge: float | None = None):
    """Squared sample canonical correlations and the Wilks-type statistic.

    Returns ``(r2, T)`` with ``r2`` of length ``min(d_i, d_j)`` in
    descending order and ``T = -N sum log(1 - r2)``.
    """
    Ei = np.asarray(Ei, dtype=float)
    Ej = np.asarray(Ej, dtype=float)
    if Ei.shape[1] > Ej.shape[1]:
        Ei, Ej = Ej, Ei
    N = Ei.shape[0] if N is None else N
    S11, S22, S12 = _cov_blocks(Ei, Ej)
    R1 = inv_sqrt_sym(S11, ridge, "first residual block")
    R2 = inv_sqrt_sym(S22, ridge, "second residual block")
    K = R1 @ S12 @ R2
    r2 = sym_eig(K @ K.T).eigenvalues
    r2 = np.clip(r2, 0.0, None)
    if np.any(r2 > R2_CAP):
        warnings.warn("canonical correlation numerically 1; clamped", stacklevel=2)
        r2 = np.minimum(r2, R2_CAP)
    T = float(-N * np.sum(np.log1p(-r2)))
    return r2, T


def cov_q_hat(Ei, Ej, S11=None, S22=None, ridge: float | None = None) -> np.ndarray:
    """Fourth-moment estimate of Cov(Q), Q the scaled cross-covariance vector.

    Rows of ``Ei S11^{-1/2}`` and ``Ej S22^{-1/2}`` are multiplied entrywise
    for every (t1, t2); entries are ordered with t1 varying slowest.
    """
    Ei = np.asarray(Ei, dtype=float)
    Ej = np.asarray(Ej, dtype=float)
    N = Ei.shape[0]
    if S11 is None:
        S11 = Ei.T @ Ei / N
    if S22 is None:
        S22 = Ej.T @ Ej / N
    Y1 = Ei @ inv_sqrt_sym(S11, ridge, "first residual block")
    Y2 = Ej @ inv_sqrt_sym(S22, ridge, "second residual block")
    P = (Y1[:, :, None] * Y2[:, None, :]).reshape(N, -1)
    C = P.T @ P / N
    return 0.5 * (C + C.T)


def pair_pvalue(T: float, weights, d_i: int, d_j: int, method: str = "imhof"):
    """(p_weighted, p_chisq) for statistic T; ``weights=None`` skips the first."""
    p_chisq = float(stats.chi2.sf(T, d_i * d_j))
    if weights is None:
        return math.nan, p_chisq
    return weighted_chisq_tail(weights, T, method), p_chisq


@dataclass(frozen=True, eq=False)
class PairResult:
    """Test outcome for one position pair.

    ``i``/``j`` are encoded position indices ordered so that ``d_i <= d_j``;
    ``pos_i``/``pos_j`` are the matching original alignment positions.
    """

    i: int
    j: int
    pos_i: int
    pos_j: int
    d_i: int
    d_j: int
    r2: np.ndarray
    T: float
    weights: np.ndarray | None
    p_weighted: float
    p_chisq: float
    refit_i: bool
    refit_j: bool
    unstable: bool = False
    excluded: bool = False
    bh_adj_p: float = math.nan
    tail: str = "chisq"
    reason: str = ""

    @property
    def df(self) -> int:
        return self.d_i * self.d_j

    @property
    def p(self) -> float:
        return self.p_weighted if self.tail == "weighted" else self.p_chisq

    @property
    def z(self) -> float:
        """T standardized by the mean and sd of its reference law."""
        if self.weights is not None and self.weights.sum() > 0:
            mean = float(self.weights.sum())
            sd = math.sqrt(2.0 * float(np.sum(self.weights ** 2)))
        else:
            mean = float(self.df)
            sd = math.sqrt(2.0 * self.df)
        return (self.T - mean) / sd

    def key(self):
        return (self.pos_i, self.pos_j) if self.pos_i < self.pos_j else (self.pos_j, self.pos_i)


def analyze_pair(Ei, Ej, i: int = 0, j: int = 1, pos_i: int | None = None, pos_j: int | None = None,
                 refit=(False, False), weighted: bool = True, tail: str = "chisq",
                 tail_method: str = "imhof") -> PairResult:
    """Statistic, reference weights and p-values for one residual pair."""
    Ei = np.asarray(Ei, dtype=float)
    Ej = np.asarray(Ej, dtype=float)
    pos_i = i if pos_i is None else pos_i
    pos_j = j if pos_j is None else pos_j
    refit_i, refit_j = refit
    if Ei.shape[1] > Ej.shape[1]:
        Ei, Ej = Ej, Ei
        i, j, pos_i, pos_j, refit_i, refit_j = j, i, pos_j, pos_i, refit_j, refit_i
    N, d_i = Ei.shape
    d_j = Ej.shape[1]
    unstable = N < d_i * d_j
    try:
        r2, T = wilks_pair(Ei, Ej)
        weights = None
        if weighted:
            S11, S22, _ = _cov_blocks(Ei, Ej)
            weights = clamp_weights(sym_eig(cov_q_hat(Ei, Ej, S11, S22)).eigenvalues)
        p_w, p_c = pair_pvalue(T, weights, d_i, d_j, tail_method)
    except SingularityError as exc:
        logger.warning("pair (%d, %d) unstable: %s", pos_i, pos_j, exc)
        return PairResult(i, j, pos_i, pos_j, d_i, d_j, np.full(d_i, np.nan), math.nan, None,
                          math.nan, math.nan, refit_i, refit_j, True, True, math.nan, tail,
                          "singular")
    return PairResult(i, j, pos_i, pos_j, d_i, d_j, r2, T, weights, p_w, p_c, refit_i, refit_j,
                      unstable, False, math.nan, tail)


def bh_adjust(p) -> np.ndarray:
    """Benjamini-Hochberg adjusted p-values (NaN entries stay NaN)."""
    p = np.asarray(p, dtype=float)
    out = np.full(p.shape, np.nan)
    ok = np.flatnonzero(~np.isnan(p))
    if ok.size == 0:
        return out
    order = ok[np.argsort(p[ok], kind="mergesort")]
    n = order.size
    ranked = p[order] * n / np.arange(1, n + 1)
    ranked = np.minimum.accumulate(ranked[::-1])[::-1]
    out[order] = np.minimum(ranked, 1.0)
    return out


def sort_results(results, tail: str = "chisq") -> list:
    def key(r):
        p = r.p_weighted if tail == "weighted" else r.p_chisq
        return (r.excluded, math.inf if math.isnan(p) else p,
                -(r.T if not math.isnan(r.T) else -math.inf), r.key())
    return sorted(results, key=key)


def test_all_pairs(enc: EncodedMatrix, spec: GroupPenaltySpec | None = None,
                   options: InferenceOptions | None = None, cache: ResidualCache | None = None,
                   pairs=None) -> list:
    """Run the full pairwise sweep.

    Returns every requested pair (all m(m-1)/2 by default) sorted by the
    ranking p-value, then T descending, then position pair. Pairs whose
    refit failed or whose residual blocks were singular carry
    ``excluded=True`` and sort last.
    """
    options = options or InferenceOptions()
    spec = spec or GroupPenaltySpec()
    if cache is None:
        cache = one_vs_rest_all(enc, spec, options.tol, options.max_iter, options.threads)
    if pairs is None:
        ks = sorted(cache.fits)
        pairs = [(a, b) for x, a in enumerate(ks) for b in ks[x + 1:]]

    def run(pair):
        a, b = pair
        res = pair_residuals(cache, a, b)
        r = analyze_pair(res.E_i, res.E_j, a, b, enc.positions[a], enc.positions[b],
                         (res.refit_i, res.refit_j), options.compute_weighted, options.tail,
                         options.tail_method)
        if not res.converged:
            logger.warning("refit for pair (%d, %d) did not converge", r.pos_i, r.pos_j)
            r = replace(r, excluded=True, reason="not converged")
        return r

    results = _map(run, pairs, options.threads)
    ok = [r for r in results if not r.excluded]
    adj = bh_adjust([r.p_weighted if options.tail == "weighted" else r.p_chisq for r in ok])
    ok = [replace(r, bh_adj_p=float(a)) for r, a in zip(ok, adj)]
    bad = [r for r in results if r.excluded]
    if bad:
        warnings.warn(f"{len(bad)} pair(s) excluded (non-convergence or singular residuals)",
                      stacklevel=2)
    return sort_results(ok + bad, options.tail)


def recover_graph(results, K: float, m: int) -> set:
    """Pairs (original positions, smaller first) with T >= K log m."""
    if K <= 0:
        raise ValueError("K must be positive")
    cut = K * math.log(m)
    return {r.key() for r in results if not r.excluded and r.T >= cut}


PAIR_COLUMNS = ("i", "j", "d_i", "d_j", "T", "df", "p_chisq", "p_weighted", "refit_i",
                "refit_j", "unstable", "bh_adj_p")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "NA"
    return f"{x:.10g}"


def write_pairs_tsv(results, path) -> int:
    """Write the pair table (1-based positions).

    Pairs dropped for non-convergence are skipped; singular pairs are kept
    with ``unstable=1`` and NA statistics.
    """
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(PAIR_COLUMNS) + "\n")
        for r in results:
            if r.excluded and r.reason != "singular":
                continue
            row = (r.pos_i + 1, r.pos_j + 1, r.d_i, r.d_j, r.T, r.df, r.p_chisq, r.p_weighted,
                   r.refit_i, r.refit_j, r.unstable, r.bh_adj_p)
            fh.write("\t".join(_fmt(v) for v in row) + "\n")
            n += 1
    return n


# keep pytest from collecting the function when test modules import it
test_all_pairs.__test__ = False
