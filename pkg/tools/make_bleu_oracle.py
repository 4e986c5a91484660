#!/usr/bin/env python3
"""Regenerate tests/data/bleu_oracle.jsonl, the frozen expectations for the
sentence-BLEU implementation.

The oracle here is written independently of the package: n-grams are counted
by explicit position scans (no Counter), precisions are kept as exact
rationals, and only the smoothing/brevity steps use the float expressions of
the reference algorithm (NLTK 3.8.1 sentence_bleu with SmoothingFunction
method4, k=5). When that library is importable, every frozen value is
cross-checked against it before writing; the internal package mirror does
not carry it, so the transcription below is the committed source of truth.

Usage: python tools/make_bleu_oracle.py [output-path]
"""

from __future__ import annotations

import json
import math
import random
import sys
from fractions import Fraction
from pathlib import Path

SEED = 240517
PAIR_COUNT = 500
MAX_LEN = 40
VOCAB_SIZE = 50
SMOOTH_K = 5


def ngram_counts(tokens: list[str], order: int) -> dict[tuple[str, ...], int]:
    counts: dict[tuple[str, ...], int] = {}
    for i in range(len(tokens) - order + 1):
        gram = tuple(tokens[i : i + order])
        counts[gram] = counts.get(gram, 0) + 1
    return counts


def modified_precision(candidate, reference, order):
    """(clipped matches, total candidate n-grams, denominator floored at 1)."""
    cand = ngram_counts(candidate, order)
    ref = ngram_counts(reference, order)
    clipped = 0
    for gram, count in cand.items():
        limit = ref.get(gram, 0)
        clipped += count if count <= limit else limit
    total = sum(cand.values())
    return clipped, max(1, total)


def reference_bleu(candidate: list[str], reference: list[str]) -> float:
    """Sentence BLEU-4, method-4 smoothing, on a 0-100 scale."""
    pairs = [modified_precision(candidate, reference, n) for n in (1, 2, 3, 4)]
    if pairs[0][0] == 0:
        return 0.0
    hyp_len = len(candidate)
    smoothed = []
    incvnt = 1
    for clipped, total in pairs:
        if clipped == 0 and hyp_len > 1:
            numerator = 1 / (2**incvnt * SMOOTH_K / math.log(hyp_len))
            smoothed.append(numerator / total)
            incvnt += 1
        else:
            smoothed.append(Fraction(clipped, total))
    ref_len = len(reference)
    bp = 1.0 if hyp_len > ref_len else math.exp(1 - ref_len / hyp_len)
    s = math.fsum(0.25 * math.log(p) for p in smoothed if p > 0)
    return bp * math.exp(s) * 100


def try_nltk_check(cases) -> bool:
    try:
        from nltk.translate.bleu_score import SmoothingFunction, sentence_bleu
    except ImportError:
        return False
    smoother = SmoothingFunction().method4
    for case in cases:
        got = sentence_bleu(
            [case["reference"]], case["candidate"], smoothing_function=smoother
        ) * 100
        assert abs(got - case["bleu"]) <= 1e-9, (case, got)
    return True


def random_pair(rng: random.Random, vocab: list[str]) -> tuple[list[str], list[str]]:
    style = rng.randrange(3)
    ref_len = rng.randint(1, MAX_LEN)
    reference = [rng.choice(vocab) for _ in range(ref_len)]
    if style == 0:
        cand_len = rng.randint(1, MAX_LEN)
        candidate = [rng.choice(vocab) for _ in range(cand_len)]
    elif style == 1:
        # mutate the reference so higher-order n-grams sometimes survive
        candidate = list(reference)
        for _ in range(rng.randint(0, max(1, ref_len // 3))):
            op = rng.randrange(3)
            pos = rng.randrange(len(candidate)) if candidate else 0
            if op == 0 and candidate:
                candidate[pos] = rng.choice(vocab)
            elif op == 1:
                candidate.insert(pos, rng.choice(vocab))
            elif candidate and len(candidate) > 1:
                del candidate[pos]
    else:
        candidate = list(reference)
        rng.shuffle(candidate)
    return candidate, reference


def build_cases() -> list[dict]:
    rng = random.Random(SEED)
    vocab = [f"w{i:02d}" for i in range(VOCAB_SIZE)]
    cases = []
    for idx in range(PAIR_COUNT):
        candidate, reference = random_pair(rng, vocab)
        cases.append(
            {
                "kind": "random",
                "index": idx,
                "candidate": candidate,
                "reference": reference,
                "bleu": reference_bleu(candidate, reference),
            }
        )
    for length in range(1, MAX_LEN + 1):
        tokens = [vocab[i % VOCAB_SIZE] for i in range(length)]
        cases.append(
            {
                "kind": "identity",
                "index": length,
                "candidate": tokens,
                "reference": list(tokens),
                "bleu": reference_bleu(tokens, tokens),
            }
        )
    for name, candidate, reference in [
        ("the-cat-sat", "the cat sat".split(), "dogs bark loudly".split()),
    ]:
        cases.append(
            {
                "kind": "fixed",
                "index": name,
                "candidate": candidate,
                "reference": reference,
                "bleu": reference_bleu(candidate, reference),
            }
        )
    return cases


def main() -> int:
    out_path = Path(sys.argv[1]) if len(sys.argv) > 1 else (
        Path(__file__).resolve().parent.parent / "tests" / "data" / "bleu_oracle.jsonl"
    )
    cases = build_cases()
    checked = try_nltk_check(cases)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"seed": SEED, "pairs": PAIR_COUNT, "max_len": MAX_LEN,
                             "vocab_size": VOCAB_SIZE,
                             "cross_checked_against_nltk": checked}) + "\n")
        for case in cases:
            fh.write(json.dumps(case) + "\n")
    print(f"wrote {len(cases)} cases to {out_path} "
          f"(nltk cross-check: {'yes' if checked else 'unavailable'})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
