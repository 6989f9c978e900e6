"""Alignment parsing, rare-residue trimming and one-hot encoding.

Positions are 0-based throughout the Python API. Only the file writers
convert to 1-based numbering.
"""

from __future__ import annotations

import io
import json
import logging
import os
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateDataError, EmptyInputError, FormatError

logger = logging.getLogger(__name__)

AMINO_ACIDS = "ACDEFGHIKLMNPQRSTVWY"
GAP = "-"
ALPHABET = AMINO_ACIDS + GAP

_FORMATS = ("fasta", "stockholm", "raw")
_EXTENSIONS = {
    ".fa": "fasta", ".fasta": "fasta", ".fas": "fasta", ".afa": "fasta", ".a2m": "fasta",
    ".sto": "stockholm", ".stk": "stockholm", ".stockholm": "stockholm",
    ".txt": "raw", ".aln": "raw", ".raw": "raw",
}


@dataclass(frozen=True)
class Alignment:
    """Equal-length sequences over the 20 amino acids plus gap.

    Attributes
    ----------
    sequences : tuple of str
        Upper-case aligned sequences.
    ids : tuple of str
        Sequence identifiers, one per sequence.
    n_unknown : int
        Number of symbols that were not in the alphabet and were mapped to
        gap while parsing.
    """

    sequences: tuple
    ids: tuple
    n_unknown: int = 0

    def __post_init__(self):
        if len(self.sequences) == 0:
            raise EmptyInputError("alignment has no sequences")
        if len(self.ids) != len(self.sequences):
            raise FormatError("ids and sequences differ in length")
        lengths = {len(s) for s in self.sequences}
        if len(lengths) != 1:
            raise FormatError(f"ragged alignment: sequence lengths {sorted(lengths)}")
        if lengths.pop() < 2:
            raise FormatError("alignment must have at least 2 positions")

    @property
    def N(self) -> int:
        return len(self.sequences)

    @property
    def m(self) -> int:
        return len(self.sequences[0])

    def matrix(self) -> np.ndarray:
        """N x m array of single-character strings."""
        return np.array([list(s) for s in self.sequences], dtype="<U1")

    def subset(self, rows) -> "Alignment":
        rows = list(rows)
        return Alignment(tuple(self.sequences[r] for r in rows),
                         tuple(self.ids[r] for r in rows), self.n_unknown)

    def columns(self, cols) -> "Alignment":
        cols = list(cols)
        seqs = tuple("".join(s[c] for c in cols) for s in self.sequences)
        return Alignment(seqs, self.ids, self.n_unknown)

    @classmethod
    def from_matrix(cls, mat, ids=None) -> "Alignment":
        mat = np.asarray(mat)
        seqs = tuple("".join(row) for row in mat)
        if ids is None:
            ids = tuple(f"seq{k + 1}" for k in range(len(seqs)))
        return cls(seqs, tuple(ids))


def _normalise(seq: str) -> tuple[str, int]:
    seq = seq.upper().replace(".", GAP)
    unknown = sum(1 for ch in seq if ch not in ALPHABET)
    if unknown:
        seq = "".join(ch if ch in ALPHABET else GAP for ch in seq)
    return seq, unknown


def _read_fasta(lines: Iterable[str]):
    ids, chunks = [], []
    for line in lines:
        line = line.strip()
        if not line:
            continue
        if line.startswith(">"):
            ids.append(line[1:].split()[0] if line[1:].strip() else f"seq{len(ids) + 1}")
            chunks.append([])
        else:
            if not ids:
                raise FormatError("FASTA sequence data before first '>' header")
            chunks[-1].append(line.replace(" ", ""))
    return ids, ["".join(c) for c in chunks]


def _read_stockholm(lines: Iterable[str]):
    order, parts = [], {}
    seen_header = False
    for line in lines:
        s = line.strip()
        if not s:
            continue
        if s.startswith("# STOCKHOLM"):
            seen_header = True
            continue
        if s == "//":
            break
        if s.startswith("#"):
            continue
        fields = s.split()
        if len(fields) != 2:
            raise FormatError(f"bad Stockholm sequence line: {s[:60]!r}")
        name, seq = fields
        if name not in parts:
            order.append(name)
            parts[name] = []
        parts[name].append(seq)
    if not seen_header and order:
        raise FormatError("missing '# STOCKHOLM 1.0' header")
    return order, ["".join(parts[n]) for n in order]


def _read_raw(lines: Iterable[str]):
    seqs = [line.strip() for line in lines if line.strip()]
    return [f"seq{k + 1}" for k in range(len(seqs))], seqs


def parse_alignment(stream, format: str = "fasta") -> Alignment:
    """Parse an alignment from text, bytes or an open file.

    Parameters
    ----------
    stream : str, bytes or file-like
        Alignment content. A ``str`` is treated as content, not a path; use
        :func:`read_alignment` for files.
    format : {"fasta", "stockholm", "raw"}
        ``"raw"`` means one sequence per line (``"raw-rows"`` is accepted too).

    Returns
    -------
    Alignment
        Symbols are upper-cased, '.' becomes gap and any other letter outside
        the alphabet becomes gap (counted in ``n_unknown``).
    """
    if format == "raw-rows":
        format = "raw"
    if format not in _FORMATS:
        raise ValueError(f"unknown alignment format {format!r}")
    if isinstance(stream, bytes):
        stream = stream.decode("utf-8")
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = {"fasta": _read_fasta, "stockholm": _read_stockholm, "raw": _read_raw}[format]
    ids, seqs = reader(stream)
    if not seqs:
        raise EmptyInputError("no sequences found in input")
    cleaned, unknown = [], 0
    for s in seqs:
        c, u = _normalise(s)
        cleaned.append(c)
        unknown += u
    if unknown:
        warnings.warn(f"{unknown} unknown residue symbol(s) mapped to gap", stacklevel=2)
    return Alignment(tuple(cleaned), tuple(ids), unknown)


def guess_format(path) -> str:
    ext = os.path.splitext(str(path))[1].lower()
    if ext in _EXTENSIONS:
        return _EXTENSIONS[ext]
    with open(path, encoding="utf-8") as fh:
        head = fh.readline()
    if head.startswith(">"):
        return "fasta"
    if head.startswith("# STOCKHOLM"):
        return "stockholm"
    return "raw"


def read_alignment(path, format: str | None = None) -> Alignment:
    """Read an alignment file, guessing the format from extension or content."""
    fmt = format or guess_format(path)
    with open(path, encoding="utf-8") as fh:
        return parse_alignment(fh, fmt)


def write_fasta(a: Alignment, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for name, seq in zip(a.ids, a.sequences):
            fh.write(f">{name}\n{seq}\n")


def filter_gappy(a: Alignment, max_gap_frac: float = 1.0) -> Alignment:
    """Drop sequences whose gap fraction exceeds ``max_gap_frac``."""
    if max_gap_frac >= 1.0:
        return a
    mat = a.matrix()
    keep = np.flatnonzero((mat == GAP).mean(axis=1) <= max_gap_frac)
    if keep.size == 0:
        raise DegenerateDataError("gap filter removed every sequence")
    return a.subset(keep)


def trim_rare_residues(a: Alignment, threshold: float) -> Alignment:
    """Remove sequences carrying rare residues until nothing changes.

    A residue is rare at a position when its proportion among the current
    sequences is below ``threshold``. Every sequence carrying a rare residue
    anywhere is dropped, proportions are recomputed on the survivors, and the
    process repeats until it reaches a fixed point.
    """
    if not 0 <= threshold < 1:
        raise ValueError("threshold must lie in [0, 1)")
    mat = a.matrix()
    rows = np.arange(a.N)
    while True:
        cur = mat[rows]
        n = cur.shape[0]
        bad = np.zeros(n, dtype=bool)
        for pos in range(cur.shape[1]):
            col = cur[:, pos]
            letters, inverse, counts = np.unique(col, return_inverse=True, return_counts=True)
            rare = (counts / n < threshold) & (letters != GAP)
            if rare.any():
                bad |= rare[inverse]
        if not bad.any():
            break
        rows = rows[~bad]
        if rows.size == 0:
            raise DegenerateDataError("trimming removed every sequence")
    if rows.size == a.N:
        return a
    return a.subset(rows)


@dataclass(frozen=True, eq=False)
class EncodedMatrix:
    """Column-blocked design matrix, one contiguous block per position.

    Attributes
    ----------
    X : ndarray, shape (N, D)
        Indicator matrix, standardized when ``standardized`` is True.
    bounds : tuple of (int, int)
        Half-open column range of each retained position.
    column_labels : tuple of (int, str)
        ``(original position, residue)`` for every column.
    positions : tuple of int
        Original alignment index of each retained position.
    col_mean, col_sd : ndarray
        Standardization constants (zeros/ones before standardization).
    dropped_positions : tuple of int
        Original positions removed because no column survived.
    n_positions : int
        Number of positions in the source alignment.
    """

    X: np.ndarray
    bounds: tuple
    column_labels: tuple
    positions: tuple
    col_mean: np.ndarray
    col_sd: np.ndarray
    dropped_positions: tuple = ()
    n_positions: int = 0
    standardized: bool = False
    _gram: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def D(self) -> int:
        return self.X.shape[1]

    @property
    def m(self) -> int:
        return len(self.bounds)

    @property
    def d(self) -> list:
        return [b - a for a, b in self.bounds]

    @property
    def groups(self) -> list:
        """Column-index ranges, one per retained position."""
        return [range(a, b) for a, b in self.bounds]

    def cols(self, k: int) -> slice:
        a, b = self.bounds[k]
        return slice(a, b)

    def block(self, k: int) -> np.ndarray:
        return self.X[:, self.cols(k)]

    def residues(self, k: int) -> list:
        return [self.column_labels[c][1] for c in self.groups[k]]

    def index_of(self, position: int) -> int:
        """Encoded index of an original alignment position."""
        try:
            return self.positions.index(position)
        except ValueError:
            raise KeyError(f"position {position} is not encoded") from None

    def gram(self) -> np.ndarray:
        """X^T X / N, cached."""
        if "G" not in self._gram:
            self._gram["G"] = self.X.T @ self.X / self.N
        return self._gram["G"]

    @classmethod
    def from_matrix(cls, Z, group_sizes: Sequence[int], standardize: bool = True) -> "EncodedMatrix":
        """Wrap an arbitrary real matrix with a block partition.

        Useful for continuous data; residue labels are column ordinals.
        """
        Z = np.asarray(Z, dtype=float)
        sizes = list(group_sizes)
        if sum(sizes) != Z.shape[1]:
            raise ValueError("group sizes must sum to the number of columns")
        bounds, labels, start = [], [], 0
        for k, s in enumerate(sizes):
            bounds.append((start, start + s))
            labels.extend((k, str(t)) for t in range(s))
            start += s
        enc = cls(Z, tuple(bounds), tuple(labels), tuple(range(len(sizes))),
                  np.zeros(Z.shape[1]), np.ones(Z.shape[1]), (), len(sizes), False)
        return standardize_columns(enc) if standardize else enc


def one_hot_encode(a: Alignment, max_gap_frac: float = 1.0) -> EncodedMatrix:
    """Indicator columns per (position, observed amino acid), gaps dropped.

    Constant columns (residue in every sequence, or none) are removed and a
    position left without columns is dropped with a warning. The result is
    not yet standardized; see :func:`standardize_columns`.
    """
    a = filter_gappy(a, max_gap_frac)
    if a.N < 3:
        raise DegenerateDataError(f"need at least 3 sequences, got {a.N}")
    mat = a.matrix()
    N = a.N
    blocks, bounds, labels, positions, dropped = [], [], [], [], []
    start = 0
    for pos in range(a.m):
        col = mat[:, pos]
        cols = []
        for res in AMINO_ACIDS:
            ind = col == res
            n_res = int(ind.sum())
            if 0 < n_res < N:
                cols.append((res, ind))
        if not cols:
            dropped.append(pos)
            continue
        blocks.append(np.column_stack([c[1] for c in cols]).astype(float))
        bounds.append((start, start + len(cols)))
        labels.extend((pos, c[0]) for c in cols)
        positions.append(pos)
        start += len(cols)
    if dropped:
        warnings.warn(f"{len(dropped)} position(s) without variable residues dropped: "
                      f"{dropped[:10]}{'...' if len(dropped) > 10 else ''}", stacklevel=2)
    if not blocks:
        raise DegenerateDataError("no position has a variable residue")
    X = np.hstack(blocks)
    D = X.shape[1]
    return EncodedMatrix(X, tuple(bounds), tuple(labels), tuple(positions),
                         np.zeros(D), np.ones(D), tuple(dropped), a.m, False)


def standardize_columns(enc: EncodedMatrix) -> EncodedMatrix:
    """Center columns and scale to unit variance (denominator N)."""
    X = enc.X
    mean = X.mean(axis=0)
    Xc = X - mean
    sd = np.sqrt((Xc ** 2).mean(axis=0))
    if np.any(sd == 0):
        raise DegenerateDataError("constant column cannot be standardized")
    Xs = Xc / sd
    # second pass removes the O(eps) residual mean left by the division
    Xs -= Xs.mean(axis=0)
    return EncodedMatrix(Xs, enc.bounds, enc.column_labels, enc.positions, mean, sd,
                         enc.dropped_positions, enc.n_positions, True)


def encode(a: Alignment, max_gap_frac: float = 1.0) -> EncodedMatrix:
    """One-hot encode then standardize."""
    return standardize_columns(one_hot_encode(a, max_gap_frac))


def write_encoded(enc: EncodedMatrix, tsv_path, json_path=None) -> None:
    """Dump X as TSV with ``pos:res`` headers (1-based) and a JSON sidecar."""
    header = "\t".join(f"{p + 1}:{r}" for p, r in enc.column_labels)
    np.savetxt(tsv_path, enc.X, delimiter="\t", header=header, comments="", fmt="%.10g")
    if json_path is None:
        return
    meta = {
        "N": enc.N,
        "D": enc.D,
        "n_positions": enc.n_positions,
        "positions": [p + 1 for p in enc.positions],
        "groups": [[a, b] for a, b in enc.bounds],
        "dropped_positions": [p + 1 for p in enc.dropped_positions],
        "col_mean": enc.col_mean.tolist(),
        "col_sd": enc.col_sd.tolist(),
    }
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
