"""Aggregate analyses over scored run records: copy-rate buckets, copied
token-type attribution, corresponding-vs-random score distributions,
correlations, and the CSV/SVG report.
"""

from __future__ import annotations

import csv
import random
import re
import statistics
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import Example, RunRecord
from .errors import HarnessError
from .metrics import DegenerateInputError, Scorer, bleu_scorer, pearson, spearman
from .pylex import Category, Role, RoleToken, classify_roles, lex
from .subtok import Tokenizer
from .svgplot import grouped_bars
from .transform import Variant


class TooFewRecordsError(HarnessError):
    pass


ZERO_BUCKET = "=0"
BUCKET_LABELS = (ZERO_BUCKET,) + tuple(
    f"({low},{low + 10}]" for low in range(0, 100, 10)
)


def bucket_label_from_counts(matched: int, total: int) -> str:
    """Bucket by the exact ratio matched/total (avoids float edge effects)."""
    if total <= 0:
        raise ValueError("total must be positive")
    if matched == 0:
        return ZERO_BUCKET
    for low in range(0, 100, 10):
        if low * total < 100 * matched <= (low + 10) * total:
            return f"({low},{low + 10}]"
    raise ValueError(f"copy rate {matched}/{total} outside [0, 1]")


def bucket_label(value: float) -> str:
    """Float variant of bucket_label_from_counts for pre-divided rates."""
    if value < 0 or value > 1:
        raise ValueError(f"copy rate {value} outside [0, 1]")
    if value == 0:
        return ZERO_BUCKET
    for low in range(0, 100, 10):
        if low < value * 100 <= low + 10:
            return f"({low},{low + 10}]"
    return BUCKET_LABELS[-1]


@dataclass(frozen=True)
class Bucket:
    label: str
    record_keys: tuple[tuple[str, str, str], ...]


def bucketize(records: Sequence[RunRecord]) -> list[Bucket]:
    """Partition records into the zero bucket plus ten copy-rate deciles,
    keyed by the reference description's copy rate."""
    members: dict[str, list[tuple[str, str, str]]] = {
        label: [] for label in BUCKET_LABELS
    }
    for rec in records:
        m = rec.metrics
        if m is None or m.p_copy_reference is None:
            raise ValueError(f"record {rec.key} has no reference copy rate")
        if m.p_copy_reference_matched is not None and m.p_copy_reference_total:
            label = bucket_label_from_counts(
                m.p_copy_reference_matched, m.p_copy_reference_total
            )
        else:
            label = bucket_label(m.p_copy_reference)
        members[label].append(rec.key)
    return [Bucket(label, tuple(members[label])) for label in BUCKET_LABELS]


ATTRIBUTION_CATEGORIES = (
    "function_name",
    "identifier",
    "keyword",
    "comment",
    "string",
    "number",
    "operator_delimiter",
)

# When a description subword could have come from several kinds of code
# token, attribute it to the first of these that applies.
_SOURCE_PRIORITY = (
    "function_name",
    "identifier",
    "comment",
    "string",
    "keyword",
    "number",
    "operator_delimiter",
)


@dataclass(frozen=True)
class CopyAttribution:
    """Subword counts per token type: everything in the code, the subset
    copied into the reference, and the subset copied into the generation."""

    code_tokens: dict
    copied_to_reference: dict
    copied_to_generated: dict


def _attribution_category(rt: RoleToken) -> str | None:
    cat = rt.base.category
    if cat in (Category.WHITESPACE, Category.NEWLINE):
        return None
    if rt.role is Role.FUNCTION_NAME:
        return "function_name"
    if cat is Category.IDENTIFIER:
        return "identifier"
    if cat is Category.KEYWORD:
        return "keyword"
    if cat is Category.COMMENT:
        return "comment"
    if cat is Category.STRING:
        return "string"
    if cat is Category.NUMBER:
        return "number"
    return "operator_delimiter"


def attribute_copies(
    ex: Example,
    generated: str,
    tokenize: Tokenizer,
    roles: Sequence[RoleToken] | None = None,
) -> CopyAttribution:
    """Attribute each copied description subword to the token type of a code
    token whose own subword decomposition contains it."""
    if roles is None:
        roles = classify_roles(lex(ex.code))
    code_counts: Counter = Counter({c: 0 for c in ATTRIBUTION_CATEGORIES})
    source_category: dict[str, str] = {}
    rank = {c: i for i, c in enumerate(_SOURCE_PRIORITY)}
    for rt in roles:
        category = _attribution_category(rt)
        if category is None:
            continue
        subwords = tokenize(rt.base.lexeme)
        code_counts[category] += len(subwords)
        for sw in subwords:
            best = source_category.get(sw)
            if best is None or rank[category] < rank[best]:
                source_category[sw] = category

    def copied(text: str) -> Counter:
        counts: Counter = Counter({c: 0 for c in ATTRIBUTION_CATEGORIES})
        for sw in tokenize(text):
            category = source_category.get(sw)
            if category is not None:
                counts[category] += 1
        return counts

    return CopyAttribution(
        code_tokens=dict(code_counts),
        copied_to_reference=dict(copied(ex.reference)),
        copied_to_generated=dict(copied(generated)),
    )


class PairingMode(str, Enum):
    REF_VS_OWN_GEN = "ref-vs-own-gen"
    REF_VS_RANDOM_GEN = "ref-vs-random-gen"
    REF_VS_REF = "ref-vs-ref"
    GEN_VS_GEN = "gen-vs-gen"


HIST_BIN_WIDTH = 5
HIST_BINS = 100 // HIST_BIN_WIDTH


@dataclass(frozen=True)
class DistSummary:
    count: int
    mean: float
    median: float
    q1: float
    q3: float
    bins: tuple[int, ...]  # HIST_BINS counts over [0, 100], width 5


def summarize_scores(scores: Sequence[float]) -> DistSummary:
    if len(scores) < 2:
        raise TooFewRecordsError("need at least two scores to summarize")
    bins = [0] * HIST_BINS
    for s in scores:
        idx = min(int(s // HIST_BIN_WIDTH), HIST_BINS - 1)
        bins[idx] += 1
    q1, med, q3 = statistics.quantiles(scores, n=4, method="inclusive")
    return DistSummary(
        count=len(scores),
        mean=statistics.fmean(scores),
        median=med,
        q1=q1,
        q3=q3,
        bins=tuple(bins),
    )


def derangement(n: int, rng: random.Random) -> list[int]:
    """Seeded permutation of range(n) with no fixed points."""
    if n < 2:
        raise TooFewRecordsError("derangement needs n >= 2")
    perm = list(range(n))
    rng.shuffle(perm)
    for i in range(n):
        if perm[i] == i:
            j = (i + 1) % n
            perm[i], perm[j] = perm[j], perm[i]
    return perm


def paired_vs_random(
    pairs: Sequence[tuple[str, str]],
    pairing: PairingMode,
    seed: int,
    scorer: Scorer = bleu_scorer,
) -> DistSummary:
    """Score distribution for corresponding or randomly re-paired texts.

    `pairs` holds (reference, generated) texts, one per record. Random
    pairings use a seeded derangement so no record meets itself.
    """
    if len(pairs) < 2:
        raise TooFewRecordsError("need at least two records")
    refs = [p[0] for p in pairs]
    gens = [p[1] for p in pairs]
    if pairing is PairingMode.REF_VS_OWN_GEN:
        scores = [scorer(g, r) for r, g in zip(refs, gens)]
    else:
        perm = derangement(len(pairs), random.Random(seed))
        if pairing is PairingMode.REF_VS_RANDOM_GEN:
            scores = [scorer(gens[perm[i]], refs[i]) for i in range(len(pairs))]
        elif pairing is PairingMode.REF_VS_REF:
            scores = [scorer(refs[perm[i]], refs[i]) for i in range(len(pairs))]
        else:
            scores = [scorer(gens[perm[i]], gens[i]) for i in range(len(pairs))]
    return summarize_scores(scores)


def correlate(
    records: Sequence[RunRecord], metric_a: str, metric_b: str
) -> tuple[float, float]:
    """(Pearson, Spearman) over per-record score pairs; records missing
    either score are skipped."""
    xs: list[float] = []
    ys: list[float] = []
    for rec in records:
        if rec.metrics is None:
            continue
        a = getattr(rec.metrics, metric_a)
        b = getattr(rec.metrics, metric_b)
        if a is None or b is None:
            continue
        xs.append(a)
        ys.append(b)
    if len(xs) < 2:
        raise DegenerateInputError("fewer than two records with both metrics")
    return pearson(xs, ys), spearman(xs, ys)


_VARIANT_ORDER = {v.value: i for i, v in enumerate(Variant)}


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", text)


def _fnum(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def _mean_of(values: list[float]) -> float | None:
    return statistics.fmean(values) if values else None


def emit_report(
    records: Sequence[RunRecord],
    examples: Mapping[tuple[str, str], Example],
    out_dir: str | Path,
    tokenize: Tokenizer,
    seed: int,
    extra_scorers: Mapping[str, Scorer] | None = None,
) -> list[Path]:
    """Write summary/bucket/attribution CSVs and SVG histograms.

    `examples` maps (variant, example_id) to the Example whose code the
    model saw. Output is a pure function of (records, examples, seed), so
    identical runs produce byte-identical files.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    scored = [r for r in records if r.metrics is not None]
    groups: dict[tuple[str, str], list[RunRecord]] = {}
    for rec in scored:
        groups.setdefault((rec.model_id, rec.variant), []).append(rec)
    group_keys = sorted(
        groups, key=lambda k: (k[0], _VARIANT_ORDER.get(k[1], 99), k[1])
    )

    def write_csv(name: str, header: list[str], rows: list[list[str]]) -> None:
        path = out_dir / name
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        written.append(path)

    # summary.csv: per-variant / per-model score means
    rows = []
    for model_id, variant in group_keys:
        recs = groups[(model_id, variant)]
        rows.append(
            [
                model_id,
                variant,
                str(len(recs)),
                _fnum(_mean_of([r.metrics.bleu4 for r in recs if r.metrics.bleu4 is not None])),
                _fnum(_mean_of([r.metrics.bertscore_f1 for r in recs if r.metrics.bertscore_f1 is not None])),
                _fnum(_mean_of([r.metrics.p_copy_reference for r in recs if r.metrics.p_copy_reference is not None])),
                _fnum(_mean_of([r.metrics.p_copy_generated for r in recs if r.metrics.p_copy_generated is not None])),
            ]
        )
    write_csv(
        "summary.csv",
        ["model_id", "variant", "records", "mean_bleu4", "mean_bertscore_f1",
         "mean_p_copy_reference", "mean_p_copy_generated"],
        rows,
    )

    # buckets.csv: BLEU per reference-copy-rate bucket
    rows = []
    bucket_medians: dict[tuple[str, str], list[float]] = {}
    for model_id, variant in group_keys:
        recs = groups[(model_id, variant)]
        by_key = {r.key: r for r in recs}
        medians = []
        for bucket in bucketize(recs):
            bleus = [
                by_key[k].metrics.bleu4
                for k in bucket.record_keys
                if by_key[k].metrics.bleu4 is not None
            ]
            rows.append(
                [
                    model_id,
                    variant,
                    bucket.label,
                    str(len(bucket.record_keys)),
                    _fnum(_mean_of(bleus)),
                    _fnum(statistics.median(bleus) if bleus else None),
                ]
            )
            medians.append(statistics.median(bleus) if bleus else 0.0)
        bucket_medians[(model_id, variant)] = medians
    write_csv(
        "buckets.csv",
        ["model_id", "variant", "bucket", "count", "mean_bleu4", "median_bleu4"],
        rows,
    )

    # attribution.csv: copied token types, summed over examples
    rows = []
    for model_id, variant in group_keys:
        totals = {
            field: Counter({c: 0 for c in ATTRIBUTION_CATEGORIES})
            for field in ("code", "reference", "generated")
        }
        for rec in groups[(model_id, variant)]:
            ex = examples.get((rec.variant, rec.example_id))
            if ex is None:
                continue
            attribution = attribute_copies(ex, rec.generated, tokenize)
            totals["code"].update(attribution.code_tokens)
            totals["reference"].update(attribution.copied_to_reference)
            totals["generated"].update(attribution.copied_to_generated)
        for category in ATTRIBUTION_CATEGORIES:
            rows.append(
                [
                    model_id,
                    variant,
                    category,
                    str(totals["code"][category]),
                    str(totals["reference"][category]),
                    str(totals["generated"][category]),
                ]
            )
    write_csv(
        "attribution.csv",
        ["model_id", "variant", "category", "code_subwords",
         "copied_to_reference", "copied_to_generated"],
        rows,
    )

    # distributions.csv + SVGs: corresponding vs randomly re-paired scores
    scorers: dict[str, Scorer] = {"bleu4": bleu_scorer}
    if extra_scorers:
        scorers.update(extra_scorers)
    rows = []
    models = sorted({model_id for model_id, _ in group_keys})
    for model_id in models:
        recs = groups.get((model_id, Variant.ORIGINAL.value), [])
        pairs = [
            (examples[(r.variant, r.example_id)].reference, r.generated)
            for r in recs
            if (r.variant, r.example_id) in examples
        ]
        if len(pairs) < 2:
            continue
        for metric_name in sorted(scorers):
            series = []
            for pairing in (PairingMode.REF_VS_OWN_GEN, PairingMode.REF_VS_RANDOM_GEN,
                            PairingMode.REF_VS_REF, PairingMode.GEN_VS_GEN):
                summary = paired_vs_random(pairs, pairing, seed, scorers[metric_name])
                rows.append(
                    [
                        model_id,
                        metric_name,
                        pairing.value,
                        str(summary.count),
                        _fnum(summary.mean),
                        _fnum(summary.median),
                        _fnum(summary.q1),
                        _fnum(summary.q3),
                    ]
                )
                if pairing in (PairingMode.REF_VS_OWN_GEN, PairingMode.REF_VS_RANDOM_GEN):
                    series.append((pairing.value, [float(b) for b in summary.bins]))
            svg_path = out_dir / f"{metric_name}_paired_{_slug(model_id)}.svg"
            bin_labels = [
                f"{i * HIST_BIN_WIDTH}-{(i + 1) * HIST_BIN_WIDTH}"
                for i in range(HIST_BINS)
            ]
            svg_path.write_text(
                grouped_bars(
                    f"{metric_name}: corresponding vs random pairs ({model_id})",
                    bin_labels,
                    series,
                ),
                encoding="utf-8",
            )
            written.append(svg_path)
    write_csv(
        "distributions.csv",
        ["model_id", "metric", "pairing", "count", "mean", "median", "q1", "q3"],
        rows,
    )

    # p_copy histograms and per-bucket BLEU medians, per model+variant
    for model_id, variant in group_keys:
        recs = groups[(model_id, variant)]
        ref_counts = Counter(b.label for b in bucketize(recs) for _ in b.record_keys)
        ref_hist = [0] * len(BUCKET_LABELS)
        gen_hist = [0] * len(BUCKET_LABELS)
        for bucket_idx, label in enumerate(BUCKET_LABELS):
            ref_hist[bucket_idx] = ref_counts.get(label, 0)
        for rec in recs:
            m = rec.metrics
            if m.p_copy_generated is None:
                continue
            if m.p_copy_generated_matched is not None and m.p_copy_generated_total:
                label = bucket_label_from_counts(
                    m.p_copy_generated_matched, m.p_copy_generated_total
                )
            else:
                label = bucket_label(m.p_copy_generated)
            gen_hist[BUCKET_LABELS.index(label)] += 1
        name = f"pcopy_{_slug(model_id)}_{_slug(variant)}.svg"
        path = out_dir / name
        path.write_text(
            grouped_bars(
                f"copy-rate distribution ({model_id}, {variant})",
                list(BUCKET_LABELS),
                [
                    ("reference", [float(v) for v in ref_hist]),
                    ("generated", [float(v) for v in gen_hist]),
                ],
            ),
            encoding="utf-8",
        )
        written.append(path)
        path = out_dir / f"bleu_buckets_{_slug(model_id)}_{_slug(variant)}.svg"
        path.write_text(
            grouped_bars(
                f"median BLEU-4 per copy-rate bucket ({model_id}, {variant})",
                list(BUCKET_LABELS),
                [("median BLEU-4", bucket_medians[(model_id, variant)])],
            ),
            encoding="utf-8",
        )
        written.append(path)
    return written
