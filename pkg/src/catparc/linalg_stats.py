"""Symmetric eigen-decomposition, inverse square roots and reference tails.

The weighted chi-squared tail is evaluated by inverting the characteristic
function (Imhof's formula). The oscillatory integrand is split at a point
``a``: a plain adaptive quadrature covers ``[0, a]`` and the remainder is
written as two Fourier integrals with slowly varying amplitude, which
QUADPACK's QAWF routine handles to near machine precision.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special, stats

from .errors import NumericError, SingularityError

_SQRT_8PI = math.sqrt(8.0 * math.pi)


@dataclass(frozen=True, eq=False)
class SymmetricSpectrum:
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # columns, orthonormal


def sym_eig(M) -> SymmetricSpectrum:
    """Full spectrum of a symmetric matrix, eigenvalues in descending order."""
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise NumericError("matrix has non-finite entries")
    vals, vecs = np.linalg.eigh(0.5 * (M + M.T))
    return SymmetricSpectrum(vals[::-1].copy(), vecs[:, ::-1].copy())


def default_ridge(M) -> float:
    M = np.asarray(M, dtype=float)
    return 1e-8 * float(np.trace(M)) / max(M.shape[0], 1)


def inv_sqrt_sym(M, ridge: float | None = None, name: str = "") -> np.ndarray:
    """``V diag((lam + ridge)^(-1/2)) V^T`` for symmetric positive definite M.

    ``ridge=None`` adds ``1e-8 * trace(M) / dim`` only when the smallest
    eigenvalue falls below that level, so well-conditioned blocks are
    inverted exactly.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    spec = sym_eig(M)
    if ridge is None:
        ridge = default_ridge(M)
        if spec.eigenvalues.size and spec.eigenvalues[-1] >= ridge:
            ridge = 0.0
    lam = spec.eigenvalues + ridge
    if lam.size and lam[-1] <= 1e-12:
        where = f" for {name}" if name else ""
        raise SingularityError(f"matrix is singular{where}: smallest eigenvalue {lam[-1]:.3g}")
    V = spec.eigenvectors
    return (V / np.sqrt(lam)) @ V.T


def clamp_weights(eigenvalues, rel_tol: float = 1e-8) -> np.ndarray:
    """Sort descending and clamp negative eigenvalues of a PSD estimate to 0."""
    w = np.sort(np.asarray(eigenvalues, dtype=float))[::-1]
    if w.size == 0:
        return w
    top = max(w[0], 0.0)
    if np.any(w < -rel_tol * top):
        warnings.warn(f"covariance estimate not PSD (min eigenvalue {w[-1]:.3g}); clamped",
                      stacklevel=2)
    return np.clip(w, 0.0, None)


@dataclass(frozen=True, eq=False)
class WeightedChiSq:
    """Law of ``sum_l w_l W_l^2`` with independent standard normal W."""

    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", clamp_weights(self.weights))

    def sf(self, x: float) -> float:
        return weighted_chisq_tail(self.weights, x)

    def mean(self) -> float:
        return float(self.weights.sum())

    def var(self) -> float:
        return float(2.0 * np.sum(self.weights ** 2))


def _imhof(w: np.ndarray, x: float, epsabs: float) -> float:
    ws = [float(v) for v in w]
    atan, log1p, exp = math.atan, math.log1p, math.exp

    def parts(u):
        # phase and u * prod (1 + (w u)^2)^(1/4); plain floats are much
        # faster than numpy for a handful of weights
        if len(ws) > 24:
            t = w * u
            return 0.5 * float(np.arctan(t).sum()), u * exp(0.25 * float(np.log1p(t * t).sum()))
        ph = 0.0
        lg = 0.0
        for v in ws:
            t = v * u
            ph += atan(t)
            lg += log1p(t * t)
        return 0.5 * ph, u * exp(0.25 * lg)

    def full(u):
        ph, env = parts(u)
        return math.sin(ph - 0.5 * x * u) / env

    def amp_sin(u):
        ph, env = parts(u)
        return math.sin(ph) / env

    def amp_cos(u):
        ph, env = parts(u)
        return math.cos(ph) / env

    a = min(8.0 * math.pi / x, 10.0 / w[0])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        head, _ = integrate.quad(full, 0.0, a, limit=400, epsabs=epsabs, epsrel=1e-10)
        t1, _ = integrate.quad(amp_sin, a, np.inf, weight="cos", wvar=0.5 * x,
                               limlst=200, epsabs=epsabs)
        t2, _ = integrate.quad(amp_cos, a, np.inf, weight="sin", wvar=0.5 * x,
                               limlst=200, epsabs=epsabs)
    return 0.5 + (head + t1 - t2) / math.pi


def weighted_chisq_tail(weights, x: float, method: str = "imhof") -> float:
    """P(sum w_l W_l^2 > x).

    Parameters
    ----------
    weights : array_like
        Nonnegative weights; tiny negatives are clamped to zero.
    x : float
        Evaluation point.
    method : {"imhof", "satterthwaite"}
        ``"satterthwaite"`` matches the first two moments with a scaled
        central chi-squared; fast but approximate.
    """
    if not math.isfinite(x):
        if math.isnan(x):
            raise NumericError("tail evaluated at NaN")
        return 1.0 if x < 0 else 0.0
    w = clamp_weights(weights)
    w = w[w > 0]
    if w.size == 0 or x <= 0:
        return 1.0 if x <= 0 else 0.0
    if method == "satterthwaite":
        scale = np.sum(w ** 2) / np.sum(w)
        df = np.sum(w) ** 2 / np.sum(w ** 2)
        return float(stats.chi2.sf(x / scale, df))
    if method != "imhof":
        raise ValueError(f"unknown tail method {method!r}")
    if np.allclose(w, w[0], rtol=1e-12, atol=0):
        return float(stats.chi2.sf(x / w[0], w.size))
    p = _imhof(w, float(x), 1e-11)
    return float(min(max(p, 0.0), 1.0))


def weighted_chisq_quantile(weights, alpha: float = 0.05) -> float:
    """Upper-alpha quantile q with P(sum w W^2 > q) = alpha, by bracketing root search."""
    w = clamp_weights(weights)
    w = w[w > 0]
    if w.size == 0:
        return 0.0
    hi = float(w.sum())
    while weighted_chisq_tail(w, hi) > alpha:
        hi *= 2.0
    return optimize.brentq(lambda q: weighted_chisq_tail(w, q) - alpha, 0.0, hi,
                           xtol=1e-10, rtol=1e-12)


def chisq_tail(df: int, x: float) -> float:
    if df < 1:
        raise ValueError("df must be >= 1")
    if math.isnan(x):
        raise NumericError("tail evaluated at NaN")
    return float(stats.chi2.sf(x, df))


def gumbel_cdf(x: float) -> float:
    """exp(-exp(-x/2) / sqrt(8 pi)), the limit law of the max-type statistic."""
    return math.exp(-math.exp(-x / 2.0) / _SQRT_8PI)


def gumbel_tail(x: float) -> float:
    if math.isnan(x):
        raise NumericError("tail evaluated at NaN")
    if x == math.inf:
        return 0.0
    if x == -math.inf:
        return 1.0
    t = -x / 2.0
    if t > 700:
        return 1.0
    return float(-math.expm1(-math.exp(t) / _SQRT_8PI))


def normal_two_sided(z):
    """2 * P(Z > |z|); works elementwise on arrays."""
    z = np.asarray(z, dtype=float)
    out = 2.0 * special.ndtr(-np.abs(z))
    return float(out) if out.ndim == 0 else out
