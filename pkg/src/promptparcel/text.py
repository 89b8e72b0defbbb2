"""Deterministic text primitives: token counting, hashed n-gram embeddings,
cosine similarity, BLEU, and ROUGE-L.

Everything here is pure and reproducible across runs and platforms: the
tokenizer is a fixed regex, the embedder hashes character 3-grams with
FNV-1a 64, and the similarity metrics are computed from scratch so no
vocabulary files or network access are needed.
"""

import functools
import math
import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch

DEFAULT_DIM = 256

_BLEU_EPS = 1e-9
_MAX_BLEU_ORDER = 4

# A token is a maximal run of word characters or a single non-space
# punctuation mark.
_TOKEN_RE = re.compile(r"\w+|[^\w\s]")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_FNV_MASK = 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class EmbeddingVector:
    """L2-normalized hashed-3-gram vector. ``source_len`` is the number of
    3-grams extracted before hashing (0 means the zero vector)."""

    values: np.ndarray
    source_len: int

    @property
    def dim(self) -> int:
        return len(self.values)


def tokenize(text: str) -> list[str]:
    """Split casefolded text into word runs and punctuation marks."""
    return _TOKEN_RE.findall(text.casefold())


def surface_tokens(text: str) -> list[str]:
    """Same segmentation as tokenize() but with original casing kept."""
    return _TOKEN_RE.findall(text)


def tokenize_count(text: str) -> int:
    """Approximate token count: word runs plus non-space punctuation."""
    return len(_TOKEN_RE.findall(text))


def fnv1a_64(data: bytes) -> int:
    """FNV-1a 64-bit hash, bit-exact across builds."""
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _FNV_MASK
    return h


def char_ngrams(text: str, n: int = 3) -> list[str]:
    s = text.casefold()
    return [s[i : i + n] for i in range(len(s) - n + 1)]


@functools.lru_cache(maxsize=1 << 16)
def _bucket(gram: str, dim: int) -> int:
    return fnv1a_64(gram.encode("utf-8")) % dim


def embed_text(text: str, dim: int = DEFAULT_DIM) -> EmbeddingVector:
    """Hash character 3-grams of the casefolded text into ``dim`` buckets
    and L2-normalize the counts.

    Empty or sub-3-character text has no features and maps to the zero
    vector; everything else has unit norm.
    """
    if dim < 8:
        raise ValueError(f"embedding dim must be >= 8, got {dim}")
    grams = char_ngrams(text)
    values = np.zeros(dim, dtype=np.float64)
    for gram in grams:
        values[_bucket(gram, dim)] += 1.0
    norm = float(np.linalg.norm(values))
    if norm > 0:
        values /= norm
    return EmbeddingVector(values=values, source_len=len(grams))


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Dot product of two unit-or-zero vectors, clamped into [-1, 1]."""
    if a.dim != b.dim:
        raise DimensionMismatch(f"dimensions differ: {a.dim} vs {b.dim}")
    value = float(np.dot(a.values, b.values))
    return max(-1.0, min(1.0, value))


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu_score(candidate: str, reference: str) -> float:
    """Sentence BLEU of ``candidate`` against a single reference.

    Modified n-gram precisions for n up to min(4, candidate length) are
    combined by geometric mean and scaled by the brevity penalty
    min(1, exp(1 - ref_len/cand_len)). A precision whose match count is
    zero is replaced by 1e-9 instead of zeroing the whole score. An empty
    candidate scores 0.
    """
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand:
        return 0.0
    max_n = min(_MAX_BLEU_ORDER, len(cand))
    log_sum = 0.0
    for n in range(1, max_n + 1):
        cand_counts = _ngram_counts(cand, n)
        ref_counts = _ngram_counts(ref, n)
        matches = sum(min(count, ref_counts[gram]) for gram, count in cand_counts.items())
        total = len(cand) - n + 1
        precision = matches / total if matches > 0 else _BLEU_EPS
        log_sum += math.log(precision)
    geo_mean = math.exp(log_sum / max_n)
    brevity = min(1.0, math.exp(1.0 - len(ref) / len(cand)))
    return brevity * geo_mean


def _lcs_length(a: list[str], b: list[str]) -> int:
    # Single-row DP keeps memory at O(min(n, m)).
    if len(b) > len(a):
        a, b = b, a
    if not b:
        return 0
    row = [0] * (len(b) + 1)
    for x in a:
        prev = 0
        for j, y in enumerate(b, start=1):
            cur = row[j]
            row[j] = prev + 1 if x == y else max(row[j], row[j - 1])
            prev = cur
    return row[-1]


def rouge_l_score(candidate: str, reference: str) -> float:
    """ROUGE-L F1 over token sequences: 2PR/(P+R) with P = LCS/cand_len
    and R = LCS/ref_len; 0 when either side is empty or LCS is 0."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand or not ref:
        return 0.0
    lcs = _lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    return 2.0 * precision * recall / (precision + recall)
