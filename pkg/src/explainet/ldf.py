"""Local discrete feature vectors and their quaternary encoding.

An LDF vector holds the indices of the top-ranked neurons of a
hypercolumn, ordered by activation strength.  Since softmax is strictly
order preserving, ranking the raw activations gives the identical
vector.  For motif discovery each index is rendered as ceil(log4 c_out)
base-4 digits, most significant first, and the digits of all indices are
concatenated; digit 0..3 maps to letter A, C, G, T for FASTA interop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ops import argsort_desc

ALPHABET = "ACGT"
_LETTER_TO_DIGIT = {c: i for i, c in enumerate(ALPHABET)}


def digits_per_index(c_out: int) -> int:
    if c_out < 2:
        raise ValueError("need at least two neurons per hypercolumn")
    return max(1, math.ceil(math.log(c_out, 4)))


def extract_ldf(a: np.ndarray, c_ldf: int) -> np.ndarray:
    """Indices of the c_ldf strongest activations, strongest first."""
    a = np.asarray(a)
    if c_ldf > a.shape[-1]:
        raise ValueError(f"c_ldf {c_ldf} exceeds hypercolumn width {a.shape[-1]}")
    return argsort_desc(a)[..., :c_ldf]


def encode_quaternary(indices: np.ndarray, c_out: int) -> np.ndarray:
    """Base-4 digit sequence of an LDF vector (works on batched input)."""
    idx = np.asarray(indices)
    if idx.max(initial=0) >= c_out:
        raise ValueError(f"index {idx.max()} out of range for c_out={c_out}")
    k = digits_per_index(c_out)
    shifts = np.arange(k - 1, -1, -1) * 2
    digits = (idx[..., None] >> shifts) & 3
    return digits.reshape(*idx.shape[:-1], idx.shape[-1] * k)


def decode_quaternary(digits: np.ndarray, c_out: int) -> np.ndarray:
    k = digits_per_index(c_out)
    d = np.asarray(digits)
    if d.shape[-1] % k != 0:
        raise ValueError(f"digit count {d.shape[-1]} not a multiple of {k}")
    groups = d.reshape(*d.shape[:-1], d.shape[-1] // k, k)
    weights = 4 ** np.arange(k - 1, -1, -1)
    out = (groups * weights).sum(axis=-1)
    if out.max(initial=0) >= c_out:
        raise ValueError("decoded index out of range")
    return out


def digits_to_letters(digits: np.ndarray) -> str:
    return "".join(ALPHABET[d] for d in np.asarray(digits))


def letters_to_digits(text: str) -> np.ndarray:
    try:
        return np.array([_LETTER_TO_DIGIT[c] for c in text], dtype=np.int64)
    except KeyError as e:
        raise ValueError(f"invalid sequence letter {e.args[0]!r}") from None


@dataclass
class LdfVocabulary:
    """Unique quaternary-encoded LDF sequences of one level with counts."""
    level: int
    c_out: int
    c_ldf: int
    sequences: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=np.int8))
    counts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __len__(self):
        return len(self.counts)


def unique_with_counts(digit_rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    rows = np.ascontiguousarray(digit_rows.astype(np.int8))
    seqs, counts = np.unique(rows, axis=0, return_counts=True)
    return seqs, counts


def collect_vocabulary(model, images: np.ndarray, level: int, c_ldf: int,
                       batch_size: int = 256) -> LdfVocabulary:
    """Count unique LDFs over every spatial position of one level.

    `level` is 1-based; the model must be trained and is run in infer
    mode.  Samples are processed in index order so parallel variants
    would merge deterministically.
    """
    chunks = []
    c_out = None
    for i in range(0, len(images), batch_size):
        _, levels, _ = model.forward(images[i:i + batch_size].astype(model.dtype),
                                     capture_levels=True)
        act = levels[level - 1]
        c_out = act.shape[-1]
        ldfs = extract_ldf(act, c_ldf)
        digits = encode_quaternary(ldfs.reshape(-1, c_ldf), c_out)
        chunks.append(digits.astype(np.int8))
    allrows = np.concatenate(chunks, axis=0)
    seqs, counts = unique_with_counts(allrows)
    return LdfVocabulary(level, c_out, c_ldf, seqs, counts)


def export_fasta(vocab: LdfVocabulary) -> str:
    """One record per unique LDF; id carries level and occurrence count."""
    if len(vocab) == 0:
        raise ValueError("empty vocabulary")
    lines = []
    for i, (seq, count) in enumerate(zip(vocab.sequences, vocab.counts)):
        lines.append(f">L{vocab.level}_{i} count={int(count)}")
        lines.append(digits_to_letters(seq))
    return "\n".join(lines) + "\n"


def import_fasta(text: str) -> tuple[np.ndarray, np.ndarray]:
    """Parse FASTA back into (digit rows, counts); inverse of export."""
    seqs: list[np.ndarray] = []
    counts: list[int] = []
    count = 1
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith(";"):
            continue
        if line.startswith(">"):
            count = 1
            for tok in line.split():
                if tok.startswith("count="):
                    count = int(tok[6:])
        else:
            seqs.append(letters_to_digits(line))
            counts.append(count)
    if not seqs:
        raise ValueError("no sequences in FASTA input")
    return np.stack(seqs).astype(np.int8), np.array(counts, dtype=np.int64)
