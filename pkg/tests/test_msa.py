import io
import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catparc import (Alignment, encode, one_hot_encode, parse_alignment, read_alignment,
                     trim_rare_residues, write_fasta)
from catparc.errors import DegenerateDataError, EmptyInputError, FormatError
from catparc.msa import AMINO_ACIDS, filter_gappy


FASTA = """>a desc
ACD-
>b
AC.E
>c
acdE
"""

STOCKHOLM = """# STOCKHOLM 1.0
#=GF ID test
a  AC
b  AC
a  D-
b  .E
//
"""


def test_fasta_parsing_normalises_case_and_dots():
    a = parse_alignment(FASTA, "fasta")
    assert a.ids == ("a", "b", "c")
    assert a.sequences == ("ACD-", "AC-E", "ACDE")
    assert a.n_unknown == 0


def test_stockholm_interleaved_blocks_are_joined():
    a = parse_alignment(STOCKHOLM, "stockholm")
    assert a.ids == ("a", "b")
    assert a.sequences == ("ACD-", "AC-E")


def test_raw_rows_format():
    a = parse_alignment("ACD\nACE\n\n", "raw-rows")
    assert a.sequences == ("ACD", "ACE")
    assert a.ids == ("seq1", "seq2")


def test_unknown_symbols_become_gaps_with_warning():
    with pytest.warns(UserWarning, match="unknown"):
        a = parse_alignment(">a\nAXB\n>b\nACD\n")
    assert a.sequences[0] == "A--"
    assert a.n_unknown == 2


def test_ragged_alignment_rejected():
    with pytest.raises(FormatError):
        parse_alignment(">a\nAC\n>b\nACD\n")


def test_empty_input_rejected():
    with pytest.raises(EmptyInputError):
        parse_alignment("", "fasta")


def test_stockholm_without_header_rejected():
    with pytest.raises(FormatError):
        parse_alignment("a AC\nb AD\n", "stockholm")


def test_fasta_roundtrip(tmp_path):
    a = parse_alignment(FASTA)
    path = tmp_path / "x.fa"
    write_fasta(a, path)
    b = read_alignment(path)
    assert b.sequences == a.sequences and b.ids == a.ids


def test_format_guessed_from_content(tmp_path):
    path = tmp_path / "x.msa"
    path.write_text(STOCKHOLM)
    assert read_alignment(path).sequences == ("ACD-", "AC-E")


def _brute_trim(seqs, threshold):
    rows = list(range(len(seqs)))
    while True:
        n = len(rows)
        bad = set()
        for pos in range(len(seqs[0])):
            counts = {}
            for r in rows:
                counts[seqs[r][pos]] = counts.get(seqs[r][pos], 0) + 1
            for r in rows:
                ch = seqs[r][pos]
                if ch != "-" and counts[ch] / n < threshold:
                    bad.add(r)
        if not bad:
            return rows
        rows = [r for r in rows if r not in bad]
        if not rows:
            return rows


alignments = st.integers(2, 6).flatmap(
    lambda m: st.lists(st.text(alphabet="ACDE-", min_size=m, max_size=m), min_size=3, max_size=25))


@settings(max_examples=60, deadline=None)
@given(alignments, st.sampled_from([0.05, 0.1, 0.2, 0.3]))
def test_trimming_matches_brute_force_and_is_idempotent(seqs, threshold):
    a = Alignment(tuple(seqs), tuple(f"s{k}" for k in range(len(seqs))))
    expected = _brute_trim(seqs, threshold)
    if not expected:
        with pytest.raises(DegenerateDataError):
            trim_rare_residues(a, threshold)
        return
    t = trim_rare_residues(a, threshold)
    assert list(t.sequences) == [seqs[r] for r in expected]
    assert trim_rare_residues(t, threshold).sequences == t.sequences


def test_encoding_column_count_and_standardisation():
    seqs = ("AC-", "AD-", "GCK", "GDK", "ACA")
    a = Alignment(seqs, tuple("abcde"))
    enc = one_hot_encode(a)
    # every observed non-gap residue that is not constant gets one column
    mat = np.array([list(s) for s in seqs])
    expected = sum(0 < int((mat[:, pos] == res).sum()) < len(seqs)
                   for pos in range(mat.shape[1]) for res in AMINO_ACIDS)
    assert enc.D == expected == 6
    assert enc.d == [2, 2, 2]
    s = encode(a)
    assert np.allclose(s.X.mean(axis=0), 0, atol=1e-12)
    assert np.allclose((s.X ** 2).mean(axis=0), 1, atol=1e-12)


def test_all_constant_position_is_dropped():
    a = parse_alignment(">a\nAC\n>b\nAD\n>c\nAE\n")
    with pytest.warns(UserWarning):
        enc = one_hot_encode(a)
    assert enc.positions == (1,)
    assert enc.dropped_positions == (0,)


def test_gap_filter_removes_gappy_rows():
    a = parse_alignment(">a\nAC--\n>b\nACDE\n>c\nGCDE\n")
    assert filter_gappy(a, 0.4).ids == ("b", "c")


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 30), st.integers(2, 5), st.integers(0, 10 ** 6))
def test_block_layout_is_contiguous(N, m, seed):
    rng = np.random.default_rng(seed)
    seqs = ["".join(rng.choice(list("ACDG-"), size=m)) for _ in range(N)]
    a = Alignment(tuple(seqs), tuple(map(str, range(N))))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            enc = one_hot_encode(a)
        except DegenerateDataError:
            return
    stops = [b for _, b in enc.bounds]
    starts = [a_ for a_, _ in enc.bounds]
    assert starts[0] == 0 and stops[-1] == enc.D
    assert all(s == e for s, e in zip(starts[1:], stops[:-1]))
    assert set(enc.positions).isdisjoint(enc.dropped_positions)
