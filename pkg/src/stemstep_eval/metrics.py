"""Text-overlap scoring: ROUGE-N, ROUGE-L, METEOR, TF-IDF cosine, and
greedy embedding match.

All metrics share one tokenizer (lowercased alphanumeric runs) so that
scores are comparable across metrics. Every score lands in [0, 1].
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional, Protocol, Sequence

import numpy as np

from . import kernels

Tokens = list[str]

_TOKEN_RE = re.compile(r"[a-z0-9]+")

# Above this many tokens per side the METEOR aligner switches from the
# exhaustive minimum-chunk search to the greedy block kernel.
EXACT_ALIGN_LIMIT = 10


def tokenize(text: str) -> Tokens:
    """Lowercase and split into alphanumeric runs; drops everything else."""
    return _TOKEN_RE.findall(text.lower())


def _intern(*seqs: Sequence[str]) -> list[list[int]]:
    """Map token sequences onto small shared integer ids for the kernels."""
    table: dict[str, int] = {}
    out = []
    for seq in seqs:
        out.append([table.setdefault(tok, len(table)) for tok in seq])
    return out


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float


def _prf(precision: float, recall: float) -> PRF:
    if precision + recall == 0.0:
        return PRF(precision, recall, 0.0)
    return PRF(precision, recall, 2.0 * precision * recall / (precision + recall))


# ---------------------------------------------------------------------------
# ROUGE


def rouge_n(candidate: Tokens, reference: Tokens, n: int) -> PRF:
    """Clipped n-gram overlap precision/recall/F1."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    cand_grams = Counter(tuple(candidate[i : i + n]) for i in range(len(candidate) - n + 1))
    ref_grams = Counter(tuple(reference[i : i + n]) for i in range(len(reference) - n + 1))
    total_c = sum(cand_grams.values())
    total_r = sum(ref_grams.values())
    if total_c == 0 or total_r == 0:
        return PRF(0.0, 0.0, 0.0)
    overlap = sum(min(count, ref_grams[gram]) for gram, count in cand_grams.items())
    return _prf(overlap / total_c, overlap / total_r)


def lcs_length(a: Tokens, b: Tokens) -> int:
    """Longest common subsequence length between two token sequences."""
    a_ids, b_ids = _intern(a, b)
    return kernels.lcs_length(a_ids, b_ids)


def rouge_l(candidate: Tokens, reference: Tokens) -> PRF:
    """LCS-based precision/recall/F1."""
    if not candidate or not reference:
        return PRF(0.0, 0.0, 0.0)
    lcs = lcs_length(candidate, reference)
    return _prf(lcs / len(candidate), lcs / len(reference))


# ---------------------------------------------------------------------------
# METEOR


def _exact_min_chunks(c_ids: list[int], r_ids: list[int]) -> int:
    """Minimum chunk count over all maximum exact-match alignments.

    Exhaustive search over reference-position subsets, memoized on
    (candidate index, used-reference bitmask, chunk-continuation index).
    Only called for short inputs; cost grows exponentially with length.
    """
    n, m = len(c_ids), len(r_ids)
    positions: dict[int, list[int]] = {}
    for j, t in enumerate(r_ids):
        positions.setdefault(t, []).append(j)
    count_c = Counter(c_ids)
    need = {t: min(count, len(positions.get(t, ()))) for t, count in count_c.items()}
    need_total = sum(need.values())
    term_mask = {t: sum(1 << j for j in js) for t, js in positions.items()}
    # suffix[i][t]: occurrences of t in c_ids[i:]
    suffix: list[Counter] = [Counter() for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        suffix[i] = suffix[i + 1].copy()
        suffix[i][c_ids[i]] += 1

    big = need_total + 1
    memo: dict[tuple[int, int, int], int] = {}

    def rec(i: int, mask: int, cont_j: int) -> int:
        if mask.bit_count() == need_total:
            return 0
        if i == n:
            return big
        key = (i, mask, cont_j)
        hit = memo.get(key)
        if hit is not None:
            return hit
        t = c_ids[i]
        left = need.get(t, 0) - (mask & term_mask.get(t, 0)).bit_count()
        best = big
        if left > 0:
            for j in positions[t]:
                if mask >> j & 1:
                    continue
                cost = 0 if j == cont_j else 1
                nxt = j + 1 if j + 1 < m else -1
                got = cost + rec(i + 1, mask | (1 << j), nxt)
                if got < best:
                    best = got
        if suffix[i + 1][t] >= left:
            got = rec(i + 1, mask, -1)
            if got < best:
                best = got
        memo[key] = best
        return best

    return rec(0, 0, -1)


def meteor_alignment(candidate: Tokens, reference: Tokens) -> tuple[int, int]:
    """Exact-match unigram alignment: (matched unigrams, chunk count).

    Matches are maximized first (the per-token min-count bound), then the
    number of contiguous match chunks is minimized — exactly for inputs
    up to EXACT_ALIGN_LIMIT tokens per side, greedily beyond that.
    """
    if not candidate or not reference:
        return 0, 0
    c_ids, r_ids = _intern(candidate, reference)
    count_c = Counter(c_ids)
    count_r = Counter(r_ids)
    matches = sum(min(count, count_r[t]) for t, count in count_c.items())
    if matches == 0:
        return 0, 0
    if len(c_ids) <= EXACT_ALIGN_LIMIT and len(r_ids) <= EXACT_ALIGN_LIMIT:
        return matches, _exact_min_chunks(c_ids, r_ids)
    greedy_matches, chunks = kernels.greedy_align(c_ids, r_ids)
    assert greedy_matches == matches
    return matches, chunks


def meteor(candidate: Tokens, reference: Tokens) -> float:
    """METEOR with exact-match unigrams: Fmean weighted 9:1 toward recall,
    fragmentation penalty 0.5 * (chunks / matches)^3."""
    matches, chunks = meteor_alignment(candidate, reference)
    if matches == 0:
        return 0.0
    precision = matches / len(candidate)
    recall = matches / len(reference)
    fmean = 10.0 * precision * recall / (recall + 9.0 * precision)
    penalty = 0.5 * (chunks / matches) ** 3
    return fmean * (1.0 - penalty)


# ---------------------------------------------------------------------------
# TF-IDF cosine


@dataclass(frozen=True)
class IdfModel:
    doc_count: int
    idf: dict[str, float]

    def idf_for(self, term: str) -> float:
        got = self.idf.get(term)
        if got is not None:
            return got
        # df = 0 case of the fitted formula
        return math.log((1.0 + self.doc_count) / 1.0) + 1.0


@dataclass(frozen=True)
class TfIdfVector:
    weights: dict[str, float]
    norm: float


def fit_idf(corpus: Iterable[Tokens]) -> IdfModel:
    """Smoothed idf: ln((1 + N) / (1 + df)) + 1, always positive."""
    df: Counter = Counter()
    doc_count = 0
    for doc in corpus:
        doc_count += 1
        df.update(set(doc))
    if doc_count == 0:
        raise ValueError("cannot fit idf on an empty corpus")
    idf = {term: math.log((1.0 + doc_count) / (1.0 + count)) + 1.0 for term, count in df.items()}
    return IdfModel(doc_count=doc_count, idf=idf)


def vectorize(model: IdfModel, doc: Tokens) -> TfIdfVector:
    """Raw term count times idf; Euclidean norm cached on the vector."""
    counts = Counter(doc)
    weights = {term: count * model.idf_for(term) for term, count in counts.items()}
    norm = math.sqrt(sum(w * w for w in weights.values()))
    return TfIdfVector(weights=weights, norm=norm)


def cosine_similarity(a: TfIdfVector, b: TfIdfVector) -> float:
    """dot(a, b) / (|a| |b|), 0.0 when either side is empty; clamped to [0, 1]."""
    if a.norm == 0.0 or b.norm == 0.0:
        return 0.0
    small, large = (a.weights, b.weights) if len(a.weights) <= len(b.weights) else (b.weights, a.weights)
    dot = 0.0
    for term, weight in small.items():
        other = large.get(term)
        if other is not None:
            dot += weight * other
    return min(1.0, max(0.0, dot / (a.norm * b.norm)))


def text_cosine(candidate: str, reference: str, idf: Optional[IdfModel] = None) -> float:
    """TF-IDF cosine of two raw texts; fits idf on the pair when none given."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if idf is None:
        idf = fit_idf([cand, ref])
    return cosine_similarity(vectorize(idf, cand), vectorize(idf, ref))


# ---------------------------------------------------------------------------
# Greedy embedding match


class TokenEmbedder(Protocol):
    """Maps a token sequence to one fixed-dimension vector per token."""

    def embed(self, tokens: Sequence[str]) -> np.ndarray: ...


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return matrix / norms


def embed_score(candidate: Tokens, reference: Tokens, embedder: TokenEmbedder) -> PRF:
    """Greedy max-cosine token matching: precision over candidate tokens,
    recall over reference tokens, harmonic-mean F1."""
    if not candidate or not reference:
        return PRF(0.0, 0.0, 0.0)
    cand_vecs = _unit_rows(np.asarray(embedder.embed(candidate), dtype=np.float64))
    ref_vecs = _unit_rows(np.asarray(embedder.embed(reference), dtype=np.float64))
    sim = cand_vecs @ ref_vecs.T
    precision = float(sim.max(axis=1).mean())
    recall = float(sim.max(axis=0).mean())
    return _prf(precision, recall)


# ---------------------------------------------------------------------------
# Combined report


@dataclass(frozen=True)
class MetricReport:
    rouge1: PRF
    rouge2: PRF
    rougeL: PRF
    meteor: float
    tfidf_cosine: float
    embed_f1: Optional[float] = None

    def to_dict(self) -> dict:
        out = {
            "rouge1": vars(self.rouge1),
            "rouge2": vars(self.rouge2),
            "rougeL": vars(self.rougeL),
            "meteor": self.meteor,
            "tfidf_cosine": self.tfidf_cosine,
        }
        if self.embed_f1 is not None:
            out["embed_f1"] = self.embed_f1
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "MetricReport":
        return cls(
            rouge1=PRF(**raw["rouge1"]),
            rouge2=PRF(**raw["rouge2"]),
            rougeL=PRF(**raw["rougeL"]),
            meteor=raw["meteor"],
            tfidf_cosine=raw["tfidf_cosine"],
            embed_f1=raw.get("embed_f1"),
        )


def score_pair(
    candidate: str,
    reference: str,
    idf: Optional[IdfModel] = None,
    embedder: Optional[TokenEmbedder] = None,
) -> MetricReport:
    """Score one candidate/reference pair with every metric.

    When no idf model is supplied the TF-IDF cosine falls back to an idf
    fitted on just the two texts.
    """
    cand = tokenize(candidate)
    ref = tokenize(reference)
    pair_idf = idf if idf is not None else fit_idf([cand, ref])
    return MetricReport(
        rouge1=rouge_n(cand, ref, 1),
        rouge2=rouge_n(cand, ref, 2),
        rougeL=rouge_l(cand, ref),
        meteor=meteor(cand, ref),
        tfidf_cosine=cosine_similarity(vectorize(pair_idf, cand), vectorize(pair_idf, ref)),
        embed_f1=(embed_score(cand, ref, embedder).f1 if embedder is not None else None),
    )
