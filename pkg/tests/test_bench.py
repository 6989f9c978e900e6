import math
from functools import partial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catparc import (SimDesign, auc, median_curve, rate_at_level, roc_curve, run_replicates,
                     score_methods, simulate)
from catparc.bench import (UndefinedAUCError, _tpr_range, read_ranking, read_truth, write_auc_table,
                           write_ranking, write_roc_points, write_truth)


def _pairs(n):
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def _mann_whitney(scores, truth):
    pos = [scores[k] for k in truth if truth[k]]
    neg = [scores[k] for k in truth if not truth[k]]
    wins = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in pos for b in neg)
    return wins / (len(pos) * len(neg))


def test_perfect_and_reversed_separation():
    keys = _pairs(6)
    truth = {k: k[1] - k[0] == 1 for k in keys}
    score = {k: 10.0 if truth[k] else float(k[1] - k[0]) / 10 for k in keys}
    assert auc(score, truth) == 1.0
    assert auc(score, truth, direction="lower") == 0.0
    c = roc_curve(score, truth)
    assert (c.fpr[0], c.tpr[0], c.fpr[-1], c.tpr[-1]) == (0, 0, 1, 1)
    assert c.thresholds[0] == math.inf


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(4, 12))
def test_auc_equals_mann_whitney(seed, n):
    rng = np.random.default_rng(seed)
    keys = _pairs(n)
    truth = {k: bool(rng.random() < 0.3) for k in keys}
    if len(set(truth.values())) < 2:
        return
    score = {k: float(rng.integers(0, 5)) for k in keys}  # many ties
    assert auc(score, truth) == pytest.approx(_mann_whitney(score, truth), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_auc_invariant_under_monotone_transform(seed):
    rng = np.random.default_rng(seed)
    keys = _pairs(10)
    truth = {k: bool(rng.random() < 0.4) for k in keys}
    if len(set(truth.values())) < 2:
        return
    score = {k: float(rng.normal()) for k in keys}
    warped = {k: math.exp(3 * v) + v for k, v in score.items()}
    assert auc(warped, truth) == pytest.approx(auc(score, truth), abs=1e-12)
    pv = {k: 1 / (1 + math.exp(v)) for k, v in score.items()}
    assert auc(pv, truth, direction="lower") == pytest.approx(auc(score, truth), abs=1e-12)


def test_random_scores_give_auc_near_half():
    rng = np.random.default_rng(1)
    keys = _pairs(120)
    truth = {k: bool(rng.random() < 0.2) for k in keys}
    score = {k: float(rng.random()) for k in keys}
    assert abs(auc(score, truth) - 0.5) < 0.02


def test_single_class_raises():
    with pytest.raises(UndefinedAUCError):
        roc_curve({(0, 1): 1.0}, {(0, 1): True})


def test_nan_scores_ignored():
    truth = {(0, 1): True, (0, 2): False, (1, 2): False}
    assert auc({(0, 1): 1.0, (0, 2): 0.0, (1, 2): math.nan}, truth) == 1.0


def test_rate_at_level():
    truth = {(0, 1): True, (0, 2): True, (1, 2): False, (1, 3): False}
    p = {(0, 1): 0.01, (0, 2): 0.2, (1, 2): 0.04, (1, 3): 0.5}
    assert rate_at_level(p, truth, 0.05) == (0.5, 0.5)
    t1, pw = rate_at_level({(0, 1): 0.01}, {(0, 1): True})
    assert math.isnan(t1) and pw == 1.0


def test_median_of_identical_curves_is_the_curve():
    rng = np.random.default_rng(2)
    keys = _pairs(8)
    truth = {k: bool(rng.random() < 0.4) for k in keys}
    c = roc_curve({k: float(rng.normal()) for k in keys}, truth)
    m = median_curve([c, c, c])
    assert m.auc == pytest.approx(c.auc, abs=1e-12)
    # every vertex of the input lies on the median polyline
    lo, hi = _tpr_range(m, c.fpr)
    assert np.all(lo <= c.tpr + 1e-12) and np.all(c.tpr <= hi + 1e-12)


def test_median_curve_lies_between_inputs():
    rng = np.random.default_rng(4)
    keys = _pairs(9)
    truth = {k: bool(rng.random() < 0.4) for k in keys}
    curves = [roc_curve({k: float(rng.normal()) + truth[k] for k in keys}, truth) for _ in range(5)]
    m = median_curve(curves)
    aucs = sorted(c.auc for c in curves)
    assert aucs[0] <= m.auc <= aucs[-1]
    assert np.all(np.diff(m.tpr) >= -1e-12)


def test_file_roundtrips(tmp_path):
    scored = {"score": {(0, 1): 2.0, (0, 2): math.nan, (1, 2): 5.0},
              "statistic": {(0, 1): 4.0, (0, 2): 1.0, (1, 2): 9.0},
              "p": {(0, 1): 0.01, (0, 2): 0.5, (1, 2): 1e-5}}
    path = tmp_path / "r.tsv"
    write_ranking(path, "catparc", scored)
    lines = path.read_text().splitlines()
    assert lines[0] == "method\ti\tj\tscore\tstatistic\tp"
    assert lines[1].startswith("catparc\t2\t3\t5")
    assert lines[-1].split("\t")[3] == "NA"
    back = read_ranking(path)["catparc"]
    assert back["score"][(1, 2)] == 5.0 and back["p"][(0, 1)] == 0.01
    truth = {(0, 1): True, (0, 2): False, (1, 2): False}
    tpath = tmp_path / "t.tsv"
    write_truth(tpath, truth)
    assert read_truth(tpath) == truth
    curve = roc_curve(scored["score"], truth)
    rp = tmp_path / "roc.tsv"
    write_roc_points(rp, {"catparc": curve})
    assert rp.read_text().splitlines()[1].split("\t")[1] == "inf"
    ap = tmp_path / "auc.tsv"
    write_auc_table(ap, {"mi": {"auc": 0.75, "type1": math.nan, "power": math.nan}})
    assert ap.read_text().splitlines() == ["method\tauc\ttype1\tpower", "mi\t0.75\tNA\tNA"]


def _make(seed):
    return simulate(SimDesign(u=3, h=3, N=600, seed=seed, r=0.5, quantiles=(0.3, 0.6)))


def test_score_methods_and_replicates():
    a, truth = _make(0)
    scored = score_methods(a)
    assert set(scored) == {"catparc", "l2", "linf", "mi", "psicov"}
    for d in scored.values():
        assert set(d["score"]) == set(truth)
    summary = run_replicates(_make, [0, 1], methods=("catparc", "mi"))
    assert summary.seeds == [0, 1]
    assert summary.median["catparc"]["auc"] > 0.9
    assert math.isnan(summary.median["mi"]["type1"])
    assert "median" in summary.to_json()


def test_replicates_independent_of_workers():
    a = run_replicates(_make, [3, 4], methods=("mi", "psicov"), workers=1)
    b = run_replicates(_make, [3, 4], methods=("mi", "psicov"), workers=2)
    assert a.per_seed == b.per_seed
