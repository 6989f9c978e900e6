"""Command-line front end.

Every subcommand writes its tables into ``--out`` together with a
``manifest.json`` recording the command, options, input digests, library
versions, timings and captured warnings. Exit codes: 0 success, 2 data
error, 3 numeric failure, 64 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import platform
import sys
import time
import warnings
from importlib import metadata

import numpy as np

from . import aa_level, baselines, bench, features, inference, simulation
from .errors import DataError, NumericError, ParameterError
from .group_lasso import GroupPenaltySpec
from .msa import encode, read_alignment, trim_rare_residues, write_encoded, write_fasta

EXIT_OK, EXIT_DATA, EXIT_NUMERIC, EXIT_USAGE = 0, 2, 3, 64

logger = logging.getLogger("catparc")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("numpy", "scipy", "scikit-learn"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    from . import __version__
    out["catparc"] = __version__
    return out


class _Collect(logging.Handler):
    def __init__(self):
        super().__init__(logging.WARNING)
        self.messages = []

    def emit(self, record):
        self.messages.append(record.getMessage())


class Run:
    """Output directory, timings and warnings of one invocation."""

    def __init__(self, args, inputs):
        self.args = args
        self.out = args.out
        os.makedirs(self.out, exist_ok=True)
        self.inputs = {k: v for k, v in inputs.items() if v}
        self.timings = {}
        self.outputs = []
        self._t0 = time.perf_counter()

    def path(self, name: str) -> str:
        self.outputs.append(name)
        return os.path.join(self.out, name)

    def lap(self, name: str, since: float) -> float:
        now = time.perf_counter()
        self.timings[name] = round(now - since, 4)
        return now

    def write_manifest(self, warnings_seen) -> None:
        opts = {k: v for k, v in vars(self.args).items() if k not in ("func",)}
        digests = {}
        for key, paths in self.inputs.items():
            for p in paths if isinstance(paths, list) else [paths]:
                digests[str(p)] = _sha256(p)
        self.timings["total"] = round(time.perf_counter() - self._t0, 4)
        manifest = {
            "command": self.args.command,
            "argv": sys.argv[1:],
            "options": opts,
            "inputs": digests,
            "seed": getattr(self.args, "seed", None),
            "versions": _versions(),
            "timings": self.timings,
            "outputs": sorted(self.outputs),
            "warnings": warnings_seen,
        }
        with open(os.path.join(self.out, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")


def _load(args):
    a = read_alignment(args.msa, getattr(args, "format", None))
    trim = getattr(args, "trim", 0.0) or 0.0
    if trim > 0:
        a = trim_rare_residues(a, trim)
    return a


def _spec(args, enc=None) -> GroupPenaltySpec:
    C = args.C
    if getattr(args, "tune_c", False):
        C = inference.tune_c(enc, frac=args.tune_frac, A=args.A, seed=args.seed)
        logger.info("tuned C = %g", C)
        args.C_tuned = C
    return GroupPenaltySpec(args.A, C)


def _options(args) -> inference.InferenceOptions:
    return inference.InferenceOptions(tol=args.tol, max_iter=args.max_iter, tail=args.tail,
                                      weighted=args.weighted or args.tail == "weighted",
                                      tail_method=args.tail_approx, threads=args.threads)


# ---------------------------------------------------------------------------
# subcommands


def cmd_encode(args, run: Run):
    t = time.perf_counter()
    a = _load(args)
    enc = encode(a, args.max_gap_frac)
    write_encoded(enc, run.path("encoded.tsv"), run.path("encoded.json"))
    run.lap("encode", t)


def cmd_contacts(args, run: Run):
    t = time.perf_counter()
    a = _load(args)
    enc = encode(a, args.max_gap_frac)
    t = run.lap("encode", t)
    spec = _spec(args, enc)
    opts = _options(args)
    cache = inference.one_vs_rest_all(enc, spec, opts.tol, opts.max_iter, opts.threads)
    t = run.lap("one_vs_rest", t)
    results = inference.test_all_pairs(enc, spec, opts, cache=cache)
    t = run.lap("pairs", t)
    inference.write_pairs_tsv(results, run.path("pairs.tsv"))
    ok = [r for r in results if not r.excluded]
    scored = {"score": {r.key(): r.z for r in ok}, "statistic": {r.key(): r.T for r in ok},
              "p": {r.key(): r.p for r in ok}}
    bench.write_ranking(run.path("ranking.tsv"), "catparc", scored)
    if args.K is not None:
        edges = inference.recover_graph(results, args.K, enc.m)
        with open(run.path("graph.tsv"), "w", encoding="utf-8") as fh:
            fh.write("i\tj\n")
            for i, j in sorted(edges):
                fh.write(f"{i + 1}\t{j + 1}\n")
    n_sig = sum(1 for r in ok if r.p <= args.alpha)
    print(f"{len(ok)} pairs tested, {n_sig} with p <= {args.alpha}")
    run.lap("write", t)


def _parse_pair(text: str):
    try:
        i, j = (int(x) - 1 for x in text.replace(":", ",").split(","))
    except ValueError:
        raise UsageError(f"bad pair {text!r}; expected i,j (1-based)") from None
    return i, j


def cmd_aa_pairs(args, run: Run):
    t = time.perf_counter()
    a = _load(args)
    enc = encode(a, args.max_gap_frac)
    spec = _spec(args, enc)
    grouping = aa_level.read_grouping(args.grouping) if args.grouping else aa_level.murphy8()
    pairs = [_parse_pair(p) for p in args.pair or []]
    cache = inference.one_vs_rest_all(enc, spec, args.tol, args.max_iter, args.threads)
    t = run.lap("one_vs_rest", t)
    if args.top:
        results = inference.test_all_pairs(enc, spec, _options(args), cache=cache)
        pairs += [r.key() for r in results if not r.excluded][:args.top]
    if not pairs:
        raise UsageError("give --pair i,j and/or --top k")
    strength_rows = []
    for i, j in sorted(set(pairs)):
        try:
            ki, kj = enc.index_of(i), enc.index_of(j)
        except KeyError as exc:
            raise DataError(str(exc)) from None
        if ki not in cache or kj not in cache:
            logger.warning("pair (%d, %d) skipped: position fit failed", i + 1, j + 1)
            continue
        aa = aa_level.aa_pair(cache, ki, kj)
        aa_level.write_aa_tsv(aa, run.path(f"aa_{i + 1}_{j + 1}.tsv"))
        strength_rows.append((i, j, aa_level.aa_group_strength(aa, grouping)))
    with open(run.path("aa_group_strength.tsv"), "w", encoding="utf-8") as fh:
        fh.write("i\tj\tgroup_i\tgroup_j\tstrength\n")
        for i, j, gs in strength_rows:
            for g, x in enumerate(gs.names):
                for h, y in enumerate(gs.names):
                    fh.write(f"{i + 1}\t{j + 1}\t{x}\t{y}\t{gs.strength[g, h]:.10g}\n")
    run.lap("aa_pairs", t)


def cmd_baselines(args, run: Run):
    t = time.perf_counter()
    a = _load(args)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    unknown = set(methods) - set(bench.METHODS)
    if unknown:
        raise UsageError(f"unknown method(s): {sorted(unknown)}")
    spec = GroupPenaltySpec(args.A, args.C)
    scored = bench.score_methods(a, methods, spec, glasso_rho=args.glasso_rho,
                                 weighted=True, tail_method=args.tail_approx)
    for m in methods:
        bench.write_ranking(run.path(f"ranking_{m}.tsv"), m, scored[m])
    run.lap("baselines", t)


def cmd_simulate(args, run: Run):
    t = time.perf_counter()
    design = simulation.SimDesign(mode=args.mode, u=args.u, h=args.h, N=args.N, seed=args.seed,
                                trim=args.trim or 0.0)
    if args.mode == "permute":
        if not args.source:
            raise UsageError("--mode permute needs --source")
        design.source = read_alignment(args.source)
        if args.positions:
            lo, hi = (int(x) for x in args.positions.split("-"))
            design.positions = (lo - 1, hi)
    elif args.mode == "latent_gaussian":
        design.r = [float(x) for x in args.r.split(",")] if "," in args.r else float(args.r)
        design.quantiles = tuple(float(x) for x in args.quantiles.split(","))
        design.gap_category = args.gap_category
    elif args.mode == "multinomial":
        if not args.tables:
            raise UsageError("--mode multinomial needs --tables")
        with open(args.tables, encoding="utf-8") as fh:
            design.tables = [np.asarray(x, dtype=float) for x in json.load(fh)]
    elif args.mode == "potts":
        src = simulation.potts_family(m=args.u * args.h, N=args.N, seed=args.seed)
        design.mode, design.source = "permute", src
    a, truth = simulation.simulate(design)
    write_fasta(a, run.path("alignment.fa"))
    bench.write_truth(run.path("truth.tsv"), truth)
    print(f"wrote {a.N} sequences x {a.m} positions")
    run.lap("simulate", t)


def cmd_bench(args, run: Run):
    t = time.perf_counter()
    truths = [bench.read_truth(p) for p in args.truth]
    if len(truths) not in (1, len(args.rankings)):
        raise UsageError("give one --truth file, or one per ranking file")
    per_method = {}
    for n, path in enumerate(args.rankings):
        truth = truths[0] if len(truths) == 1 else truths[n]
        for method, scored in bench.read_ranking(path).items():
            curve = bench.roc_curve(scored["score"], truth, args.direction)
            row = {"auc": curve.auc, "type1": math.nan, "power": math.nan}
            if scored["p"] is not None:
                row["type1"], row["power"] = bench.rate_at_level(scored["p"], truth, args.alpha)
            per_method.setdefault(method, []).append((row, curve))
    median = {m: {k: bench._nanmedian([r[k] for r, _ in rows]) for k in ("auc", "type1", "power")}
              for m, rows in per_method.items()}
    curves = {m: bench.median_curve([c for _, c in rows]) if len(rows) > 1 else rows[0][1]
              for m, rows in per_method.items()}
    bench.write_roc_points(run.path("roc.tsv"), curves)
    bench.write_auc_table(run.path("auc.tsv"), median)
    summary = {"alpha": args.alpha, "n_rankings": len(args.rankings), "median": median,
               "per_file": {m: [r for r, _ in rows] for m, rows in per_method.items()}}
    with open(run.path("summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=bench._json_default)
        fh.write("\n")
    for m in sorted(median):
        print(f"{m}\tauc={median[m]['auc']:.4f}")
    run.lap("bench", t)


def cmd_features(args, run: Run):
    t = time.perf_counter()
    a = _load(args)
    muts, effects = features.read_mutants(args.mutants)
    if args.wildtype:
        wt = args.wildtype.strip().upper()
    elif args.wildtype_id:
        ids = dict(zip(a.ids, a.sequences))
        if args.wildtype_id not in ids:
            raise DataError(f"wild type id {args.wildtype_id!r} not in alignment")
        wt = ids[args.wildtype_id]
    else:
        wt = a.sequences[0]
    enc = encode(a, args.max_gap_frac)
    if args.method == "psicov":
        cmap = features.precision_map(baselines.graphical_lasso(enc, rho=args.glasso_rho), enc)
    else:
        spec = _spec(args, enc)
        cache = inference.one_vs_rest_all(enc, spec, args.tol, args.max_iter, args.threads)
        pvals = None
        if args.p_max is not None:
            res = inference.test_all_pairs(enc, spec, _options(args), cache=cache)
            pvals = {r.key(): r.p for r in res if not r.excluded}
        cmap = features.partial_cov_map(cache, pvalues=pvals, p_max=args.p_max)
    t = run.lap("map", t)
    rows = features.delta_features(muts, wt, cmap)
    features.write_features(rows, run.path("features.csv"))
    if effects is not None:
        ok = [k for k, e in enumerate(effects) if not math.isnan(e)]
        for name in ("deltaC", "deltaM"):
            rho = features.spearman([getattr(rows[k], name) for k in ok], [effects[k] for k in ok])
            print(f"spearman({name}, effect) = {rho:.4f}")
    run.lap("features", t)


# ---------------------------------------------------------------------------
# parser


def _common(p, msa=True):
    if msa:
        p.add_argument("--msa", required=True, help="alignment file (FASTA, Stockholm or raw rows)")
        p.add_argument("--format", choices=("fasta", "stockholm", "raw"), default=None,
                       help="alignment format (default: from extension or content)")
        p.add_argument("--trim", type=float, default=0.0,
                       help="rare-residue trimming threshold (default 0: off)")
        p.add_argument("--max-gap-frac", type=float, default=1.0,
                       help="drop sequences with a larger gap fraction (default 1.0)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _penalty(p, tuning=True):
    p.add_argument("--A", type=float, default=2.0, help="penalty constant A (default 2)")
    p.add_argument("--C", type=float, default=0.07, help="penalty constant C (default 0.07)")
    if tuning:
        p.add_argument("--tune-c", action="store_true",
                       help="choose C by cross-validation on a subset of positions")
        p.add_argument("--tune-frac", type=float, default=0.1,
                       help="fraction of positions used by --tune-c (default 0.1)")
    p.add_argument("--tol", type=float, default=1e-6, help="solver tolerance (default 1e-6)")
    p.add_argument("--max-iter", type=int, default=1000, help="solver sweep limit (default 1000)")
    p.add_argument("--threads", type=int, default=inference.default_threads(),
                   help="pair-sweep threads (default: CATPARC_THREADS or all cores)")


def _tails(p):
    p.add_argument("--alpha", type=float, default=0.05, help="nominal level (default 0.05)")
    p.add_argument("--tail", choices=("chisq", "weighted"), default="chisq",
                   help="p-value used for ranking and BH (default chisq)")
    p.add_argument("--weighted", action="store_true",
                   help="also compute weighted chi-squared p-values")
    p.add_argument("--tail-approx", choices=("imhof", "satterthwaite"), default="imhof",
                   help="weighted chi-squared tail evaluation (default imhof)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="catparc", description="Partial-correlation inference for sequence alignments.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("encode", help="one-hot encode and standardize an alignment")
    _common(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("contacts", help="test every position pair")
    _common(p)
    _penalty(p)
    _tails(p)
    p.add_argument("--K", type=float, default=None,
                   help="also write graph.tsv with pairs where T >= K log m")
    p.set_defaults(func=cmd_contacts)

    p = sub.add_parser("aa-pairs", help="residue-level statistics for selected pairs")
    _common(p)
    _penalty(p)
    _tails(p)
    p.add_argument("--pair", action="append", help="1-based pair i,j (repeatable)")
    p.add_argument("--top", type=int, default=0, help="also analyse the k top-ranked pairs")
    p.add_argument("--grouping", default=None,
                   help="residue grouping file (default: 8-group reduced alphabet)")
    p.set_defaults(func=cmd_aa_pairs)

    p = sub.add_parser("baselines", help="MI, PSICOV, l2 and linf scores in ranking format")
    _common(p)
    _penalty(p, tuning=False)
    p.add_argument("--methods", default="mi,psicov,l2,linf",
                   help="comma-separated subset of catparc,l2,linf,mi,psicov")
    p.add_argument("--glasso-rho", type=float, default=0.01,
                   help="graphical lasso penalty (default 0.01)")
    p.add_argument("--tail-approx", choices=("imhof", "satterthwaite"), default="imhof")
    p.set_defaults(func=cmd_baselines)

    p = sub.add_parser("simulate", help="generate an alignment with known truth")
    _common(p, msa=False)
    p.add_argument("--mode", choices=("permute", "latent_gaussian", "multinomial", "potts"),
                   required=True)
    p.add_argument("--source", help="source alignment for --mode permute")
    p.add_argument("--positions", help="1-based inclusive source range, e.g. 25-94")
    p.add_argument("--trim", type=float, default=0.0, help="trimming threshold for the source")
    p.add_argument("--u", type=int, default=6, help="number of groups (default 6)")
    p.add_argument("--h", type=int, default=5, help="positions per group (default 5)")
    p.add_argument("--N", type=int, default=2000, help="sequences to draw (default 2000)")
    p.add_argument("--r", default="0.0", help="within-group latent correlation(s)")
    p.add_argument("--quantiles", default="0.3333333333,0.6666666667",
                   help="comma-separated cut probabilities")
    p.add_argument("--gap-category", action="store_true",
                   help="emit the lowest latent category as gap")
    p.add_argument("--tables", help="JSON list of per-group joint probability tables")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="ROC/AUC summary of rankings against a truth table")
    _common(p, msa=False)
    p.add_argument("--truth", nargs="+", required=True, help="truth TSV(s): i j contact")
    p.add_argument("--rankings", nargs="+", required=True,
                   help="ranking TSV(s): method i j score [statistic p]")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--direction", choices=("higher", "lower"), default="higher")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("features", help="coupling features for mutant sequences")
    _common(p)
    _penalty(p)
    _tails(p)
    p.add_argument("--mutants", required=True, help="CSV with columns id,sequence[,effect]")
    p.add_argument("--wildtype", help="wild-type sequence (aligned)")
    p.add_argument("--wildtype-id", help="alignment id of the wild type (default: first row)")
    p.add_argument("--method", choices=("catparc", "psicov"), default="catparc")
    p.add_argument("--glasso-rho", type=float, default=0.01)
    p.add_argument("--p-max", type=float, default=None,
                   help="keep only pairs with p <= p-max in the coupling sums")
    p.set_defaults(func=cmd_features)
    return ap


_INPUT_KEYS = ("msa", "source", "truth", "rankings", "mutants", "grouping", "tables")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    collector = _Collect()
    logging.getLogger().addHandler(collector)
    try:
        run = Run(args, {k: getattr(args, k, None) for k in _INPUT_KEYS})
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            args.func(args, run)
        seen = collector.messages + [str(w.message) for w in caught]
        for msg in dict.fromkeys(str(w.message) for w in caught):
            sys.stderr.write(f"warning: {msg}\n")
        run.write_manifest(list(dict.fromkeys(seen)))
        return EXIT_OK
    except (UsageError, ParameterError) as exc:
        sys.stderr.write(f"catparc: error: {exc}\n")
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        sys.stderr.write(f"catparc: data error: {exc}\n")
        return EXIT_DATA
    except NumericError as exc:
        sys.stderr.write(f"catparc: numeric failure: {exc}\n")
        return EXIT_NUMERIC
    except ValueError as exc:
        sys.stderr.write(f"catparc: data error: {exc}\n")
        return EXIT_DATA
    finally:
        logging.getLogger().removeHandler(collector)


if __name__ == "__main__":
    sys.exit(main())
