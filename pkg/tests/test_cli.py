import json
import subprocess
import sys

import pytest

from catparc.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    code = main(["simulate", "--mode", "latent_gaussian", "--u", "2", "--h", "3", "--N", "600",
                 "--r", "0.6", "--quantiles", "0.3,0.6", "--seed", "3", "--out", str(out)])
    assert code == EXIT_OK
    return out


def _lines(path):
    return path.read_text().splitlines()


def test_simulate_writes_alignment_truth_and_manifest(simulated):
    assert _lines(simulated / "alignment.fa")[0].startswith(">")
    assert _lines(simulated / "truth.tsv")[0] == "i\tj\tcontact"
    assert len(_lines(simulated / "truth.tsv")) == 1 + 15
    man = json.loads((simulated / "manifest.json").read_text())
    assert man["command"] == "simulate" and man["seed"] == 3
    assert set(man["outputs"]) == {"alignment.fa", "truth.tsv"}
    assert {"numpy", "scipy", "catparc"} <= set(man["versions"])


def test_contacts_then_bench(simulated, tmp_path):
    out = tmp_path / "c"
    code = main(["contacts", "--msa", str(simulated / "alignment.fa"), "--out", str(out),
                 "--tail", "weighted", "--K", "5", "--threads", "1"])
    assert code == EXIT_OK
    pairs = _lines(out / "pairs.tsv")
    assert pairs[0].split("\t")[:4] == ["i", "j", "d_i", "d_j"]
    assert len(pairs) == 1 + 15
    assert (out / "graph.tsv").exists()
    man = json.loads((out / "manifest.json").read_text())
    assert str(simulated / "alignment.fa") in man["inputs"]
    assert len(man["inputs"][str(simulated / "alignment.fa")]) == 64
    b = tmp_path / "b"
    code = main(["bench", "--truth", str(simulated / "truth.tsv"), "--rankings",
                 str(out / "ranking.tsv"), "--out", str(b)])
    assert code == EXIT_OK
    auc = _lines(b / "auc.tsv")
    assert auc[0] == "method\tauc\ttype1\tpower"
    assert float(auc[1].split("\t")[1]) > 0.9
    assert json.loads((b / "summary.json").read_text())["n_rankings"] == 1


def test_contacts_is_deterministic_across_threads(simulated, tmp_path):
    outs = []
    for t in ("1", "3"):
        out = tmp_path / t
        assert main(["contacts", "--msa", str(simulated / "alignment.fa"), "--out", str(out),
                     "--threads", t]) == EXIT_OK
        outs.append((out / "pairs.tsv").read_text())
    assert outs[0] == outs[1]


def test_baselines_and_aa_pairs(simulated, tmp_path):
    msa = str(simulated / "alignment.fa")
    assert main(["baselines", "--msa", msa, "--out", str(tmp_path / "b"),
                 "--methods", "mi,psicov,l2,linf"]) == EXIT_OK
    for m in ("mi", "psicov", "l2", "linf"):
        assert _lines(tmp_path / "b" / f"ranking_{m}.tsv")[0].startswith("method\ti\tj")
    assert main(["aa-pairs", "--msa", msa, "--out", str(tmp_path / "a"), "--pair", "1,2",
                 "--top", "1"]) == EXIT_OK
    assert _lines(tmp_path / "a" / "aa_1_2.tsv")[0] == "res_i\tres_j\tz\tp\tbh_adj_p"
    assert (tmp_path / "a" / "aa_group_strength.tsv").exists()


def test_features_with_effects(simulated, tmp_path, capsys):
    seqs = [l for l in _lines(simulated / "alignment.fa") if not l.startswith(">")]
    wt = seqs[0]
    rows = ["id,sequence,effect"]
    for k, s in enumerate(seqs[1:6]):
        rows.append(f"m{k},{s},{k * 0.1}")
    csv = tmp_path / "m.csv"
    csv.write_text("\n".join(rows) + "\n")
    out = tmp_path / "f"
    assert main(["features", "--msa", str(simulated / "alignment.fa"), "--mutants", str(csv),
                 "--out", str(out)]) == EXIT_OK
    lines = _lines(out / "features.csv")
    assert lines[0] == "id,deltaC,deltaM,n_mutations,unseen_count"
    assert len(lines) == 6
    assert "spearman(deltaC, effect)" in capsys.readouterr().out
    assert main(["features", "--msa", str(simulated / "alignment.fa"), "--mutants", str(csv),
                 "--wildtype", wt, "--method", "psicov", "--out", str(tmp_path / "g")]) == EXIT_OK


def test_usage_errors_exit_64(tmp_path, simulated):
    assert main(["contacts"]) == EXIT_USAGE
    assert main(["nope"]) == EXIT_USAGE
    assert main(["aa-pairs", "--msa", str(simulated / "alignment.fa"),
                 "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["simulate", "--mode", "permute", "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["simulate", "--mode", "latent_gaussian", "--r", "-0.9", "--out",
                 str(tmp_path)]) == EXIT_USAGE


def test_data_errors_exit_2(tmp_path):
    bad = tmp_path / "bad.fa"
    bad.write_text(">a\nACD\n>b\nAC\n")
    assert main(["contacts", "--msa", str(bad), "--out", str(tmp_path / "o")]) == EXIT_DATA
    assert main(["contacts", "--msa", str(tmp_path / "missing.fa"),
                 "--out", str(tmp_path / "o")]) == EXIT_DATA


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "catparc", "--help"], capture_output=True,
                          text=True)
    assert proc.returncode == 0 and "contacts" in proc.stdout
