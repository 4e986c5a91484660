"""Scoring: sentence BLEU-4 (smoothing method 4), token-copy rate,
BERTScore over pluggable embeddings, and correlation statistics.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Protocol, Sequence

import numpy as np
import requests

from .errors import HarnessError


class DegenerateInputError(HarnessError):
    pass


class EmptyDescriptionError(HarnessError):
    pass


class EmptySequenceError(HarnessError):
    pass


class ProviderUnavailableError(HarnessError):
    pass


class DimensionMismatchError(HarnessError):
    pass


@dataclass(frozen=True)
class BleuScore:
    value: float  # 0..100
    precisions: tuple[float, float, float, float]  # smoothed p1..p4
    brevity_penalty: float


@dataclass(frozen=True)
class PCopy:
    value: float  # 0..1
    tokenizer_id: str
    matched: int
    total: int


@dataclass(frozen=True)
class BertScoreResult:
    precision: float  # 0..100
    recall: float
    f1: float


_SMOOTH_K = 5


def bleu4(candidate: Sequence[str], reference: Sequence[str]) -> BleuScore:
    """Sentence BLEU-4 with smoothing method 4, on a 0-100 scale.

    Modified n-gram precisions (clipped counts) for n = 1..4; a zero-match
    order n on a candidate longer than one token is smoothed to
    ln(len(candidate)) / (2^k * 5) over that order's n-gram count, where k
    numbers the zero-match orders from 1. Brevity penalty exp(1 - r/c) when
    the candidate is shorter than the reference. No unigram match at all
    scores 0. An empty candidate scores 0.
    """
    if not reference:
        raise DegenerateInputError("reference must be non-empty")
    counts: list[tuple[int, int]] = []
    for order in range(1, 5):
        if len(candidate) >= order:
            hyp = Counter(
                tuple(candidate[i : i + order])
                for i in range(len(candidate) - order + 1)
            )
            ref: Counter = Counter(
                tuple(reference[i : i + order])
                for i in range(len(reference) - order + 1)
            )
            clipped = sum(min(c, ref[g]) for g, c in hyp.items())
            total = sum(hyp.values())
        else:
            clipped, total = 0, 0
        counts.append((clipped, max(1, total)))

    c, r = len(candidate), len(reference)
    if c == 0:
        return BleuScore(0.0, (0.0, 0.0, 0.0, 0.0), 0.0)
    bp = 1.0 if c > r else math.exp(1 - r / c)
    if counts[0][0] == 0:
        return BleuScore(0.0, tuple(n / d for n, d in counts), bp)

    smoothed: list = []
    incvnt = 1
    for clipped, total in counts:
        if clipped == 0 and c > 1:
            numerator = 1 / (2**incvnt * _SMOOTH_K / math.log(c))
            smoothed.append(numerator / total)
            incvnt += 1
        else:
            smoothed.append(Fraction(clipped, total))
    s = math.fsum(0.25 * math.log(p) for p in smoothed if p > 0)
    value = bp * math.exp(s) * 100
    return BleuScore(value, tuple(float(p) for p in smoothed), bp)


def split_description(text: str, lowercase: bool = False) -> list[str]:
    """Whitespace tokenization used for BLEU over descriptions."""
    return text.lower().split() if lowercase else text.split()


def p_copy(
    code_subwords: Sequence[str],
    desc_subwords: Sequence[str],
    tokenizer_id: str = "fallback",
) -> PCopy:
    """Fraction of description subword tokens whose strings also occur among
    the code's subword tokens."""
    if not desc_subwords:
        raise EmptyDescriptionError("description has no subword tokens")
    code_set = set(code_subwords)
    matched = sum(1 for tok in desc_subwords if tok in code_set)
    return PCopy(
        value=matched / len(desc_subwords),
        tokenizer_id=tokenizer_id,
        matched=matched,
        total=len(desc_subwords),
    )


class EmbeddingProvider(Protocol):
    """Maps a token sequence to one vector per token, deterministically."""

    provider_id: str

    def embed(self, tokens: Sequence[str]) -> np.ndarray: ...


def _stable_index(token: str, dim: int) -> int:
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % dim


class HashedOneHotProvider:
    """Deterministic test provider: token -> unit basis vector at
    sha256(token) mod dim."""

    def __init__(self, dim: int = 256) -> None:
        self.dim = dim
        self.provider_id = f"onehot-{dim}"

    def embed(self, tokens: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(tokens), self.dim))
        for i, tok in enumerate(tokens):
            out[i, _stable_index(tok, self.dim)] = 1.0
        return out


class RemoteEmbeddingProvider:
    """Client for an HTTP embedding service: POST {"tokens": [...]} and get
    back {"vectors": [[...], ...]}, one vector per token."""

    def __init__(
        self,
        url: str,
        api_key: str | None = None,
        timeout: float = 30.0,
        max_retries: int = 3,
        backoff: float = 0.5,
    ) -> None:
        self.url = url
        self.api_key = api_key
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self.provider_id = f"remote:{url}"

    def embed(self, tokens: Sequence[str]) -> np.ndarray:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = json.dumps({"tokens": list(tokens)})
        last: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                resp = requests.post(
                    self.url, data=payload, headers=headers, timeout=self.timeout
                )
                if resp.status_code >= 500:
                    raise ProviderUnavailableError(
                        f"embedding service returned {resp.status_code}"
                    )
                resp.raise_for_status()
                data = resp.json()
                vectors = data.get("vectors") if isinstance(data, dict) else None
                if vectors is None or len(vectors) != len(tokens):
                    raise DimensionMismatchError(
                        "embedding service returned a wrong-length vector list"
                    )
                return np.asarray(vectors, dtype=float)
            except DimensionMismatchError:
                raise
            except (requests.RequestException, ProviderUnavailableError) as exc:
                last = exc
                if attempt + 1 < self.max_retries:
                    time.sleep(self.backoff * 2**attempt)
        raise ProviderUnavailableError(
            f"embedding service unavailable after {self.max_retries} attempts: {last}"
        )


def embed(tokens: Sequence[str], provider: EmbeddingProvider) -> np.ndarray:
    """One L2-normalized vector per token."""
    if not tokens:
        return np.zeros((0, 0))
    vectors = np.asarray(provider.embed(tokens), dtype=float)
    if vectors.ndim != 2 or vectors.shape[0] != len(tokens):
        raise DimensionMismatchError(
            f"provider returned shape {vectors.shape} for {len(tokens)} tokens"
        )
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise DimensionMismatchError("provider returned a zero vector")
    return vectors / norms


def bertscore(x: np.ndarray, x_hat: np.ndarray) -> BertScoreResult:
    """Greedy-matching precision/recall/F1 over unit-norm token embeddings.

    `x` is the reference sequence, `x_hat` the candidate. Recall averages
    each reference token's best match among candidate tokens; precision
    averages each candidate token's best match among reference tokens
    (normalized by the candidate length). Reported on a 0-100 scale.
    """
    if x.size == 0 or x_hat.size == 0:
        raise EmptySequenceError("bertscore needs non-empty embedding sequences")
    sim = x @ x_hat.T
    recall = float(sim.max(axis=1).mean())
    precision = float(sim.max(axis=0).mean())
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
    return BertScoreResult(precision * 100, recall * 100, f1 * 100)


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    if len(xs) != len(ys) or len(xs) < 2:
        raise DegenerateInputError("need two equal-length samples of size >= 2")
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    dx = x - x.mean()
    dy = y - y.mean()
    denom = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if denom == 0:
        raise DegenerateInputError("zero variance input")
    return float(dx @ dy) / denom


def _average_ranks(values: Sequence[float]) -> list[float]:
    """1-based ranks; ties share the average of their positions."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson correlation over average-tied ranks."""
    if len(xs) != len(ys) or len(xs) < 2:
        raise DegenerateInputError("need two equal-length samples of size >= 2")
    return pearson(_average_ranks(xs), _average_ranks(ys))


Scorer = Callable[[str, str], float]


def bleu_scorer(candidate_text: str, reference_text: str) -> float:
    return bleu4(split_description(candidate_text), split_description(reference_text)).value


def bertscore_scorer(provider: EmbeddingProvider, tokenize) -> Scorer:
    def score(candidate_text: str, reference_text: str) -> float:
        ref_tokens = tokenize(reference_text)
        cand_tokens = tokenize(candidate_text)
        if not ref_tokens or not cand_tokens:
            return 0.0
        return bertscore(embed(ref_tokens, provider), embed(cand_tokens, provider)).f1

    return score
