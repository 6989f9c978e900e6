"""Comparison scores: mutual information, PSICOV-style precision sums, and
the self-normalized l2 / l-infinity cross-covariance tests."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.covariance import graphical_lasso as _sk_graphical_lasso
from sklearn.exceptions import ConvergenceWarning

from .linalg_stats import clamp_weights, gumbel_tail, sym_eig, weighted_chisq_tail
from .msa import ALPHABET, GAP, Alignment, EncodedMatrix


def _codes(a: Alignment) -> np.ndarray:
    lookup = {ch: k for k, ch in enumerate(ALPHABET)}
    return np.array([[lookup[ch] for ch in s] for s in a.sequences], dtype=np.int8)


def _mi_from_codes(x: np.ndarray, y: np.ndarray, pseudocount: float) -> tuple[float, bool]:
    gap = ALPHABET.index(GAP)
    ok = (x != gap) & (y != gap)
    if not ok.any():
        return 0.0, True
    x, y = x[ok], y[ok]
    xa, xi = np.unique(x, return_inverse=True)
    ya, yi = np.unique(y, return_inverse=True)
    counts = np.zeros((xa.size, ya.size))
    np.add.at(counts, (xi, yi), 1.0)
    p = counts + pseudocount
    p /= p.sum()
    px = p.sum(axis=1, keepdims=True)
    py = p.sum(axis=0, keepdims=True)
    nz = p > 0
    mi = float(np.sum(p[nz] * np.log(p[nz] / (px @ py)[nz])))
    return max(mi, 0.0), False


def mutual_information(a: Alignment, i: int, j: int, pseudocount: float = 0.5) -> float:
    """MI (nats) of the residue pair distribution at alignment positions i, j.

    Rows with a gap at either position are excluded; ``pseudocount`` is
    added to every cell of the observed-residue contingency table. Returns 0
    when no row has residues at both positions.
    """
    codes = _codes(a)
    return _mi_from_codes(codes[:, i], codes[:, j], pseudocount)[0]


def mi_all_pairs(a: Alignment, positions=None, pseudocount: float = 0.5) -> dict:
    """MI for every pair of the given original positions, keyed (i, j) with i < j."""
    codes = _codes(a)
    positions = list(range(a.m)) if positions is None else sorted(positions)
    out = {}
    for x, i in enumerate(positions):
        for j in positions[x + 1:]:
            out[(i, j)] = _mi_from_codes(codes[:, i], codes[:, j], pseudocount)[0]
    return out


@dataclass(frozen=True, eq=False)
class PrecisionEstimate:
    precision: np.ndarray
    covariance: np.ndarray
    method: str
    rho: float
    ridge: float = 0.0
    converged: bool = True


def graphical_lasso(X, rho: float = 0.01, tol: float = 1e-4, max_iter: int = 200) -> PrecisionEstimate:
    """l1-penalized precision estimate of the sample covariance of X.

    ``X`` is an :class:`EncodedMatrix` (already standardized) or an array.
    Off-diagonal entries are penalized; if the solver hits a non-positive
    definite iterate, a ridge of growing size is added to the covariance.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    Xm = X.X if isinstance(X, EncodedMatrix) else np.asarray(X, dtype=float)
    Xc = Xm - Xm.mean(axis=0)
    S = Xc.T @ Xc / Xc.shape[0]
    ridge = 0.0
    for attempt in range(6):
        Sr = S + ridge * np.eye(S.shape[0])
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ConvergenceWarning)
            try:
                cov, prec = _sk_graphical_lasso(Sr, rho, tol=tol, max_iter=max_iter)
            except FloatingPointError:
                ridge = 1e-4 if ridge == 0 else ridge * 10
                continue
        converged = not any(issubclass(w.category, ConvergenceWarning) for w in caught)
        prec = 0.5 * (prec + prec.T)
        return PrecisionEstimate(prec, cov, "graphical_lasso", rho, ridge, converged)
    raise FloatingPointError("graphical lasso failed even with ridge regularization")


def glasso_subgradient_violation(S, precision, rho: float) -> float:
    """Largest violation of the optimality conditions with off-diagonal penalty."""
    W = np.linalg.inv(precision)
    G = W - S
    off = ~np.eye(S.shape[0], dtype=bool)
    nz = off & (np.abs(precision) > 1e-10)
    z = off & ~nz
    v = [np.abs(np.diag(G)).max()]
    if nz.any():
        v.append(np.abs(G[nz] - rho * np.sign(precision[nz])).max())
    if z.any():
        v.append(max(0.0, np.abs(G[z]).max() - rho))
    return float(max(v))


def psicov_score(precision, bounds, i: int, j: int) -> float:
    """Sum of |precision| entries across the (i, j) column blocks.

    The block with the smaller index first is summed, so the score is
    exactly symmetric in (i, j).
    """
    P = precision.precision if isinstance(precision, PrecisionEstimate) else np.asarray(precision)
    if isinstance(bounds, EncodedMatrix):
        bounds = bounds.bounds
    i, j = min(i, j), max(i, j)
    a0, a1 = bounds[i]
    b0, b1 = bounds[j]
    return float(np.abs(P[a0:a1, b0:b1]).sum())


def self_normalized_cross_cov(Ei, Ej):
    """Entrywise sigma_ab / sqrt(theta_ab) for columns a of Ei and b of Ej.

    Returns ``(S_check, products)`` where ``products`` is the N x (d_i d_j)
    array of centered products minus their mean, ordered with the Ei column
    varying slowest. Entries with theta_ab = 0 are NaN.
    """
    A = np.asarray(Ei, dtype=float)
    B = np.asarray(Ej, dtype=float)
    N = A.shape[0]
    A = A - A.mean(axis=0)
    B = B - B.mean(axis=0)
    prod = (A[:, :, None] * B[:, None, :]).reshape(N, -1)
    sigma = prod.mean(axis=0)
    dev = prod - sigma
    theta = np.sum(dev * dev, axis=0) / N ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(theta > 0, sigma / np.sqrt(theta), np.nan)
    return s.reshape(A.shape[1], B.shape[1]), dev


def l2_statistic(Ei, Ej, method: str = "imhof"):
    """Squared Frobenius norm of the self-normalized cross-covariance.

    Returns ``(T, weights, p)``; the reference is the weighted chi-squared
    whose weights are the eigenvalues of the estimated correlation matrix of
    the self-normalized entries. Degenerate entries are dropped.
    """
    S, dev = self_normalized_cross_cov(Ei, Ej)
    flat = S.ravel()
    ok = ~np.isnan(flat)
    if not ok.any():
        return math.nan, np.zeros(0), math.nan
    T = float(np.sum(flat[ok] ** 2))
    D = dev[:, ok]
    N = D.shape[0]
    cov = D.T @ D / N ** 2
    sd = np.sqrt(np.diag(cov))
    corr = cov / np.outer(sd, sd)
    w = clamp_weights(sym_eig(corr).eigenvalues)
    return T, w, weighted_chisq_tail(w, T, method)


def linf_statistic(Ei, Ej):
    """Max squared self-normalized entry, centred by 4 log d2 - log log d2.

    ``d2`` is the larger block size. Returns ``(nan, nan)`` when d2 < 2.
    """
    S, _ = self_normalized_cross_cov(Ei, Ej)
    d2 = max(S.shape)
    if d2 < 2 or np.all(np.isnan(S)):
        return math.nan, math.nan
    T = float(np.nanmax(S ** 2) - 4.0 * math.log(d2) + math.log(math.log(d2)))
    return T, gumbel_tail(T)
