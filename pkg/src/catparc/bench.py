"""ROC curves, error rates and replicate aggregation for pairwise scores.

Scores are keyed by position pairs ``(i, j)`` with ``i < j``. Larger
scores mean stronger evidence of coupling unless ``direction="lower"``
(p-values).
"""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .baselines import graphical_lasso, l2_statistic, linf_statistic, mi_all_pairs, psicov_score
from .errors import CatparcError, InputError, ParameterError
from .group_lasso import GroupPenaltySpec
from .inference import InferenceOptions, one_vs_rest_all, pair_residuals, test_all_pairs
from .msa import Alignment, encode

METHODS = ("catparc", "l2", "linf", "mi", "psicov")


class UndefinedAUCError(CatparcError, ValueError):
    """Truth labels contain a single class."""


@dataclass(frozen=True, eq=False)
class RocCurve:
    """Threshold sweep from the strictest cut down; starts at (0, 0), ends at (1, 1)."""

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float


def _aligned(scores: dict, truth: dict):
    keys = sorted(k for k in truth if k in scores and not _isnan(scores[k]))
    s = np.array([float(scores[k]) for k in keys])
    y = np.array([bool(truth[k]) for k in keys])
    return keys, s, y


def _isnan(x) -> bool:
    return x is None or (isinstance(x, float) and math.isnan(x))


def roc_curve(scores: dict, truth: dict, direction: str = "higher") -> RocCurve:
    """ROC over every unique score value.

    Parameters
    ----------
    scores : dict
        Pair -> score. Pairs missing from ``scores`` or with NaN score are
        ignored.
    truth : dict
        Pair -> bool (True for a positive pair).
    direction : {"higher", "lower"}
        Whether large or small scores indicate a positive.
    """
    if direction not in ("higher", "lower"):
        raise ParameterError("direction must be 'higher' or 'lower'")
    _, s, y = _aligned(scores, truth)
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUCError("ROC needs at least one positive and one negative pair")
    key = s if direction == "higher" else -s
    order = np.argsort(-key, kind="mergesort")
    key, y = key[order], y[order]
    # one point per distinct threshold (ties enter together)
    last = np.r_[np.flatnonzero(np.diff(key) != 0), key.size - 1]
    tp = np.cumsum(y)[last]
    fp = np.cumsum(~y)[last]
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    thr = key[last] if direction == "higher" else -key[last]
    thresholds = np.r_[np.inf if direction == "higher" else -np.inf, thr]
    return RocCurve(thresholds, fpr, tpr, float(np.trapezoid(tpr, fpr)))


def auc(curve_or_scores, truth: dict | None = None, direction: str = "higher") -> float:
    """Area under a :class:`RocCurve`, or under the curve built from scores."""
    if isinstance(curve_or_scores, RocCurve):
        return curve_or_scores.auc
    return roc_curve(curve_or_scores, truth, direction).auc


def rate_at_level(pvals: dict, truth: dict, alpha: float = 0.05):
    """(type1, power): rejection rates at level alpha among null and alternative pairs.

    A rate is NaN when its class is empty.
    """
    _, p, y = _aligned(pvals, truth)
    rej = p < alpha
    type1 = float(rej[~y].mean()) if (~y).any() else math.nan
    power = float(rej[y].mean()) if y.any() else math.nan
    return type1, power


def _tpr_range(c: RocCurve, grid: np.ndarray):
    """Lowest and highest TPR of the piecewise-linear curve at each FPR in ``grid``."""
    fpr, tpr = c.fpr, c.tpr
    n = fpr.size
    hi_idx = np.clip(np.searchsorted(fpr, grid, side="right") - 1, 0, n - 1)
    lo_idx = np.clip(np.searchsorted(fpr, grid, side="left"), 0, n - 1)
    exact = fpr[lo_idx] == grid
    lo = tpr[lo_idx].astype(float)
    hi = tpr[hi_idx].astype(float)
    # between two vertices the curve is the chord joining them
    x0, x1 = fpr[hi_idx], fpr[lo_idx]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(x1 > x0, (grid - x0) / (x1 - x0), 0.0)
    mid = tpr[hi_idx] + t * (tpr[lo_idx] - tpr[hi_idx])
    return np.where(exact, lo, mid), np.where(exact, hi, mid)


def median_curve(curves, grid=None) -> RocCurve:
    """Pointwise median of ROC curves over a common FPR grid.

    Curves are read as piecewise linear through their vertices. A vertical
    segment at some FPR contributes both its end points, so the median of
    identical curves is the curve itself.
    """
    curves = list(curves)
    if not curves:
        raise ParameterError("no curves to aggregate")
    if grid is None:
        grid = np.unique(np.concatenate([c.fpr for c in curves]))
    grid = np.asarray(grid, dtype=float)
    ranges = [_tpr_range(c, grid) for c in curves]
    lo = np.median(np.vstack([r[0] for r in ranges]), axis=0)
    hi = np.median(np.vstack([r[1] for r in ranges]), axis=0)
    fpr = np.repeat(grid, 2)
    tpr = np.column_stack([lo, hi]).ravel()
    return RocCurve(np.full(fpr.size, np.nan), fpr, tpr, float(np.trapezoid(tpr, fpr)))


# ---------------------------------------------------------------------------
# scoring every method on one alignment


def _pair_map(enc, results):
    return {r.key(): r for r in results if not r.excluded}


def score_methods(a: Alignment, methods=METHODS, spec: GroupPenaltySpec | None = None,
                  glasso_rho: float = 0.01, weighted: bool = True,
                  tail_method: str = "imhof") -> dict:
    """Per-method pair scores and p-values on original position pairs.

    Returns ``{method: {"score": {...}, "p": {...} or None, "statistic": {...}}}``.
    CATParc and l2 scores are the statistic standardized by the mean and sd
    of its reference law; linf uses its centred statistic; MI and PSICOV use
    the raw score.
    """
    spec = spec or GroupPenaltySpec()
    enc = encode(a)
    out = {}
    need_resid = any(m in methods for m in ("catparc", "l2", "linf"))
    cache = one_vs_rest_all(enc, spec) if need_resid else None
    ks = sorted(cache.fits) if cache is not None else []
    pairs = [(x, y) for n, x in enumerate(ks) for y in ks[n + 1:]]
    residuals = {}
    if "catparc" in methods:
        opts = InferenceOptions(weighted=weighted, tail="weighted" if weighted else "chisq",
                                tail_method=tail_method)
        res = _pair_map(enc, test_all_pairs(enc, spec, opts, cache=cache, pairs=pairs))
        out["catparc"] = {"score": {k: r.z for k, r in res.items()},
                          "statistic": {k: r.T for k, r in res.items()},
                          "p": {k: r.p for k, r in res.items()}}
    if "l2" in methods or "linf" in methods:
        for x, y in pairs:
            pr = pair_residuals(cache, x, y)
            residuals[(enc.positions[x], enc.positions[y])] = (pr.E_i, pr.E_j)
    if "l2" in methods:
        sc, st, pv = {}, {}, {}
        for k, (Ei, Ej) in residuals.items():
            T, w, p = l2_statistic(Ei, Ej, tail_method)
            st[k], pv[k] = T, p
            sc[k] = (T - w.sum()) / math.sqrt(2.0 * np.sum(w ** 2)) if w.size else math.nan
        out["l2"] = {"score": sc, "statistic": st, "p": pv}
    if "linf" in methods:
        st, pv = {}, {}
        for k, (Ei, Ej) in residuals.items():
            st[k], pv[k] = linf_statistic(Ei, Ej)
        out["linf"] = {"score": dict(st), "statistic": st, "p": pv}
    if "mi" in methods:
        mi = mi_all_pairs(a, positions=enc.positions)
        out["mi"] = {"score": mi, "statistic": mi, "p": None}
    if "psicov" in methods:
        prec = graphical_lasso(enc, rho=glasso_rho)
        sc = {}
        for x in range(enc.m):
            for y in range(x + 1, enc.m):
                sc[(enc.positions[x], enc.positions[y])] = psicov_score(prec, enc, x, y)
        out["psicov"] = {"score": sc, "statistic": sc, "p": None}
    return out


# ---------------------------------------------------------------------------
# replicate driver


def _replicate(args):
    make, seed, methods, kwargs, alpha = args
    a, truth = make(seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        scored = score_methods(a, methods, **kwargs)
    row = {}
    for name, d in scored.items():
        entry = {}
        try:
            entry["roc"] = roc_curve(d["score"], truth)
            entry["auc"] = entry["roc"].auc
        except UndefinedAUCError:
            entry["roc"], entry["auc"] = None, math.nan
        if d["p"] is not None:
            entry["type1"], entry["power"] = rate_at_level(d["p"], truth, alpha)
        row[name] = entry
    return seed, row


@dataclass
class BenchSummary:
    """Per-seed results and their medians."""

    seeds: list
    per_seed: dict  # method -> list of dicts (auc, type1, power)
    median: dict  # method -> dict
    curves: dict  # method -> median RocCurve

    def to_json(self) -> str:
        return json.dumps({"seeds": self.seeds, "median": self.median,
                           "per_seed": self.per_seed}, indent=2, sort_keys=True,
                          default=_json_default)


def _json_default(x):
    if isinstance(x, float) and math.isnan(x):
        return None
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(type(x))


def _nanmedian(v):
    v = [x for x in v if x is not None and not math.isnan(x)]
    return float(np.median(v)) if v else math.nan


def run_replicates(make, seeds, methods=METHODS, alpha: float = 0.05, workers: int = 1,
                   **kwargs) -> BenchSummary:
    """Score every method on ``make(seed) -> (alignment, truth)`` for each seed.

    ``make`` must be picklable (a module-level function or a
    :func:`functools.partial`) when ``workers > 1``. Each replicate owns
    its generator, so results do not depend on ``workers``.
    """
    jobs = [(make, s, tuple(methods), kwargs, alpha) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_replicate, jobs))
    else:
        rows = [_replicate(j) for j in jobs]
    rows.sort(key=lambda r: r[0])
    per_seed = {m: [] for m in methods}
    curves = {m: [] for m in methods}
    for _, row in rows:
        for m in methods:
            e = row.get(m, {})
            per_seed[m].append({k: e.get(k, math.nan) for k in ("auc", "type1", "power")})
            if e.get("roc") is not None:
                curves[m].append(e["roc"])
    median = {m: {k: _nanmedian([r[k] for r in per_seed[m]]) for k in ("auc", "type1", "power")}
              for m in methods}
    med_curves = {m: median_curve(c) for m, c in curves.items() if c}
    return BenchSummary([r[0] for r in rows], per_seed, median, med_curves)


# ---------------------------------------------------------------------------
# file formats

RANKING_COLUMNS = ("method", "i", "j", "score", "statistic", "p")


def _fmt(x) -> str:
    if _isnan(x):
        return "NA"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.10g}"


def write_ranking(path, method: str, scored: dict) -> None:
    """Ranking TSV (1-based positions), sorted by score descending then pair."""
    score = scored["score"]
    stat = scored.get("statistic") or {}
    p = scored.get("p") or {}
    keys = sorted(score, key=lambda k: (_isnan(score[k]), -score[k] if not _isnan(score[k]) else 0, k))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(RANKING_COLUMNS) + "\n")
        for k in keys:
            fh.write("\t".join([method, str(k[0] + 1), str(k[1] + 1), _fmt(score[k]),
                                _fmt(stat.get(k)), _fmt(p.get(k))]) + "\n")


def read_ranking(path) -> dict:
    """{method: {"score": {...}, "statistic": {...}, "p": {...} or None}} (0-based pairs)."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if tuple(header[:4]) != RANKING_COLUMNS[:4]:
            raise InputError(f"{path}: expected ranking header {RANKING_COLUMNS}")
        col = {h: n for n, h in enumerate(header)}
        for line in fh:
            if not line.strip():
                continue
            f = line.rstrip("\n").split("\t")
            i, j = int(f[1]) - 1, int(f[2]) - 1
            key = (min(i, j), max(i, j))
            d = out.setdefault(f[0], {"score": {}, "statistic": {}, "p": {}})
            d["score"][key] = _parse(f[col["score"]])
            if "statistic" in col:
                d["statistic"][key] = _parse(f[col["statistic"]])
            if "p" in col:
                d["p"][key] = _parse(f[col["p"]])
    for d in out.values():
        if all(_isnan(v) for v in d["p"].values()):
            d["p"] = None
    return out


def _parse(s: str) -> float:
    return math.nan if s in ("NA", "") else float(s)


def write_truth(path, truth: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("i\tj\tcontact\n")
        for (i, j), v in sorted(truth.items()):
            fh.write(f"{i + 1}\t{j + 1}\t{int(bool(v))}\n")


def read_truth(path) -> dict:
    """Truth TSV ``i j contact`` (1-based, header optional) -> {(i, j): bool}."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh):
            f = line.split()
            if not f:
                continue
            if n == 0 and not f[0].lstrip("-").isdigit():
                continue
            if len(f) < 3:
                raise InputError(f"{path}:{n + 1}: expected 'i j contact'")
            i, j = int(f[0]) - 1, int(f[1]) - 1
            out[(min(i, j), max(i, j))] = f[2] not in ("0", "false", "False")
    return out


def _fmt_threshold(t) -> str:
    if math.isinf(t):
        return "inf" if t > 0 else "-inf"
    return _fmt(float(t))


def write_roc_points(path, curves: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("method\tthreshold\tfpr\ttpr\n")
        for m in sorted(curves):
            c = curves[m]
            for t, f, p in zip(c.thresholds, c.fpr, c.tpr):
                fh.write(f"{m}\t{_fmt_threshold(t)}\t{_fmt(f)}\t{_fmt(p)}\n")


def write_auc_table(path, rows: dict) -> None:
    """``method auc type1 power`` TSV."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("method\tauc\ttype1\tpower\n")
        for m in sorted(rows):
            r = rows[m]
            fh.write(f"{m}\t{_fmt(r.get('auc'))}\t{_fmt(r.get('type1'))}\t{_fmt(r.get('power'))}\n")
