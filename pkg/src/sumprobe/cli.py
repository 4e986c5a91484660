"""Command-line front end: transform -> generate -> score -> analyze.

Stages hand off through files in the run directory, so each stage can be
re-run independently and a full pipeline is reproducible byte-for-byte from
(corpus, config, seed, cache):

    out/variants/<variant>.jsonl   transformed corpora
    out/rejects.jsonl              filtered-out examples with reasons
    out/errors_<stage>.jsonl       record-level errors per stage
    out/runs.jsonl                 one record per (example, variant, model)
    out/cache/                     LLM response cache
    out/report/                    CSV + SVG report

Configuration comes from an INI file plus flag overrides; only the API key
is read from the environment (SUMPROBE_API_KEY).
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import llmgen, metrics
from .analysis import bucket_label_from_counts, emit_report
from .corpus import (
    EvalRecord,
    Example,
    RunRecord,
    filter_corpus,
    load_corpus,
    load_run,
    save_run,
)
from .errors import HarnessError
from .metrics import HashedOneHotProvider, RemoteEmbeddingProvider, bertscore_scorer
from .subtok import code_subwords, tokenizer_from_spec
from .transform import Variant, apply_variant, donor_assignment

log = logging.getLogger(__name__)

API_KEY_ENV = "SUMPROBE_API_KEY"

_VARIANT_ORDER = {v.value: i for i, v in enumerate(Variant)}


class PrerequisiteError(HarnessError):
    """An upstream stage has not produced its artifact yet."""


@dataclass
class RunConfig:
    corpus_path: str = ""
    split: str = "test"
    train_path: str = ""
    min_tokens: int = 3
    max_tokens: int = 256
    variants: list[str] = field(default_factory=lambda: [v.value for v in Variant])
    model_id: str = ""
    endpoint: str = ""
    mock: str = ""
    temperature: float = 0.0
    gen_max_tokens: int = 128
    shots: int = llmgen.DEFAULT_SHOT_COUNT
    tokenizer: str = "fallback"
    embedding_endpoint: str = ""
    embedding_dim: int = 256
    seed: int | None = None
    out_dir: str = "out"
    jobs: int = 4
    max_errors: int = 0
    lowercase_bleu: bool = False
    report_dir: str = ""

    def require_seed(self) -> int:
        if self.seed is None:
            raise HarnessError("a seed is required (--seed or [run] seed = ...)")
        return self.seed

    @property
    def out(self) -> Path:
        return Path(self.out_dir)

    @property
    def variants_dir(self) -> Path:
        return self.out / "variants"

    @property
    def runs_path(self) -> Path:
        return self.out / "runs.jsonl"

    @property
    def cache_dir(self) -> Path:
        return self.out / "cache"

    @property
    def report(self) -> Path:
        return Path(self.report_dir) if self.report_dir else self.out / "report"


_CONFIG_FIELDS = {
    ("corpus", "path"): ("corpus_path", str),
    ("corpus", "split"): ("split", str),
    ("corpus", "train_path"): ("train_path", str),
    ("corpus", "min_tokens"): ("min_tokens", int),
    ("corpus", "max_tokens"): ("max_tokens", int),
    ("run", "seed"): ("seed", int),
    ("run", "out"): ("out_dir", str),
    ("run", "jobs"): ("jobs", int),
    ("run", "variants"): ("variants", lambda s: [v.strip() for v in s.split(",") if v.strip()]),
    ("run", "max_errors"): ("max_errors", int),
    ("model", "id"): ("model_id", str),
    ("model", "endpoint"): ("endpoint", str),
    ("model", "mock"): ("mock", str),
    ("model", "temperature"): ("temperature", float),
    ("model", "max_tokens"): ("gen_max_tokens", int),
    ("model", "shots"): ("shots", int),
    ("tokenizer", "spec"): ("tokenizer", str),
    ("embedding", "endpoint"): ("embedding_endpoint", str),
    ("embedding", "dim"): ("embedding_dim", int),
    ("report", "dir"): ("report_dir", str),
    ("report", "lowercase_bleu"): ("lowercase_bleu", lambda s: s.lower() in ("1", "true", "yes")),
}


def load_config(path: str | None) -> RunConfig:
    config = RunConfig()
    if not path:
        return config
    parser = configparser.ConfigParser(interpolation=None)
    read = parser.read(path)
    if not read:
        raise HarnessError(f"cannot read config file {path}")
    for (section, option), (attr, conv) in _CONFIG_FIELDS.items():
        if parser.has_option(section, option):
            try:
                setattr(config, attr, conv(parser.get(section, option)))
            except ValueError as exc:
                raise HarnessError(f"bad config value {section}.{option}: {exc}") from exc
    return config


def _parse_variants(names: list[str]) -> list[Variant]:
    if not names or "all" in names:
        return list(Variant)
    out = []
    for name in names:
        try:
            out.append(Variant(name))
        except ValueError:
            valid = ", ".join(v.value for v in Variant)
            raise HarnessError(f"unknown variant {name!r} (expected one of: {valid})")
    return out


def _write_jsonl(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        "".join(json.dumps(row, ensure_ascii=False) + "\n" for row in rows),
        encoding="utf-8",
        newline="\n",
    )


def _record_sort_key(rec: RunRecord):
    return (rec.model_id, _VARIANT_ORDER.get(rec.variant, 99), rec.variant, rec.example_id)


def cmd_transform(config: RunConfig) -> int:
    seed = config.require_seed()
    if not config.corpus_path:
        raise HarnessError("transform needs a corpus (--corpus or [corpus] path)")
    variants = _parse_variants(config.variants)
    examples, line_errors = load_corpus(config.corpus_path, config.split)
    accepted, rejected = filter_corpus(examples, config.min_tokens, config.max_tokens)
    config.out.mkdir(parents=True, exist_ok=True)
    _write_jsonl(
        config.out / "rejects.jsonl",
        [{"id": ex.id, "reason": decision.reason.value} for ex, decision in rejected],
    )

    errors = [
        {"stage": "transform", "where": f"{err.path}:{err.line_number}", "error": err.message}
        for err in line_errors
    ]
    donors: dict[str, str] = {}
    if Variant.ADVERSARIAL_NAMES in variants:
        donors = donor_assignment(accepted, seed)
    for variant in variants:
        rows = []
        for ex in accepted:
            try:
                if variant is Variant.ADVERSARIAL_NAMES:
                    donor = donors.get(ex.id)
                    if donor is None:
                        raise HarnessError("no usable donor name in the corpus")
                    transformed = apply_variant(ex, variant, donor)
                else:
                    transformed = apply_variant(ex, variant)
            except HarnessError as exc:
                errors.append(
                    {"stage": "transform", "where": f"{ex.id}/{variant.value}", "error": str(exc)}
                )
                continue
            rows.append(
                {"id": transformed.id, "code": transformed.code, "docstring": transformed.reference}
            )
        _write_jsonl(config.variants_dir / f"{variant.value}.jsonl", rows)
    _write_jsonl(config.out / "errors_transform.jsonl", errors)
    for err in errors:
        log.warning("transform error at %s: %s", err["where"], err["error"])
    print(f"transform: {len(accepted)} accepted, {len(rejected)} rejected, "
          f"{len(errors)} errors, {len(variants)} variant file(s)")
    return 0 if len(errors) <= config.max_errors else 1


def _load_variant_examples(config: RunConfig, variant_value: str) -> list[Example]:
    path = config.variants_dir / f"{variant_value}.jsonl"
    if not path.exists():
        raise PrerequisiteError(
            f"missing {path}; run `sumprobe transform` first"
        )
    examples, errors = load_corpus(path, config.split)
    if errors:
        raise HarnessError(f"{path}: {len(errors)} unreadable lines")
    return examples


def _present_variants(config: RunConfig) -> list[str]:
    if not config.variants_dir.exists():
        raise PrerequisiteError(
            f"missing {config.variants_dir}; run `sumprobe transform` first"
        )
    names = [p.stem for p in config.variants_dir.glob("*.jsonl")]
    return sorted(names, key=lambda n: (_VARIANT_ORDER.get(n, 99), n))


def cmd_generate(config: RunConfig) -> int:
    seed = config.require_seed()
    if not config.model_id:
        raise HarnessError("generate needs a model id (--model or [model] id)")
    shots: list[tuple[str, str]] = []
    if config.train_path:
        train_examples, _ = load_corpus(config.train_path, "train")
        train_accepted, _ = filter_corpus(train_examples, config.min_tokens, config.max_tokens)
        shots = llmgen.select_shots(train_accepted, config.shots, seed)
    elif not config.mock:
        log.warning("no [corpus] train_path configured; prompting zero-shot")

    cache = llmgen.GenerationCache(config.cache_dir)
    new_records: list[RunRecord] = []
    errors: list[dict] = []
    for variant_value in _present_variants(config):
        examples = _load_variant_examples(config, variant_value)
        if config.mock:
            if config.mock != "echo":
                raise HarnessError(f"unknown mock {config.mock!r} (only 'echo')")
            client: llmgen.CompletionClient = llmgen.EchoClient(
                {ex.id: ex.reference for ex in examples}
            )
        else:
            if not config.endpoint:
                raise HarnessError(
                    "generate needs an endpoint (--endpoint or [model] endpoint) "
                    "unless --mock echo is used"
                )
            client = llmgen.ChatCompletionsClient(
                config.endpoint, api_key=os.environ.get(API_KEY_ENV)
            )

        def run_one(ex: Example) -> RunRecord:
            usable_shots = [s for s in shots if s[0] != ex.code]
            prompt = llmgen.build_prompt(ex, usable_shots)
            req = llmgen.GenRequest(
                model_id=config.model_id,
                prompt=prompt.render(),
                temperature=config.temperature,
                max_tokens=config.gen_max_tokens,
                example_id=ex.id,
            )
            resp = llmgen.generate(req, client, cache)
            return RunRecord(
                example_id=ex.id,
                variant=variant_value,
                model_id=config.model_id,
                generated=resp.text,
            )

        with ThreadPoolExecutor(max_workers=max(1, config.jobs)) as pool:
            futures = [(ex, pool.submit(run_one, ex)) for ex in examples]
            for ex, future in futures:
                try:
                    new_records.append(future.result())
                except HarnessError as exc:
                    errors.append(
                        {"stage": "generate", "where": f"{ex.id}/{variant_value}", "error": str(exc)}
                    )

    merged: dict[tuple[str, str, str], RunRecord] = {}
    if config.runs_path.exists():
        merged = {rec.key: rec for rec in load_run(config.runs_path)}
    for rec in new_records:
        merged[rec.key] = rec
    ordered = sorted(merged.values(), key=_record_sort_key)
    save_run(ordered, config.runs_path)
    _write_jsonl(config.out / "errors_generate.jsonl", errors)
    for err in errors:
        log.warning("generate error at %s: %s", err["where"], err["error"])
    print(f"generate: {len(new_records)} generations for model {config.model_id}, "
          f"{len(errors)} errors, run file {config.runs_path}")
    return 0


def cmd_score(config: RunConfig) -> int:
    if not config.runs_path.exists():
        raise PrerequisiteError(
            f"missing {config.runs_path}; run `sumprobe generate` first"
        )
    records = load_run(config.runs_path)
    tokenize = tokenizer_from_spec(config.tokenizer)
    if config.embedding_endpoint:
        provider: metrics.EmbeddingProvider = RemoteEmbeddingProvider(
            config.embedding_endpoint, api_key=os.environ.get(API_KEY_ENV)
        )
    else:
        provider = HashedOneHotProvider(config.embedding_dim)

    examples: dict[tuple[str, str], Example] = {}
    for variant_value in sorted({rec.variant for rec in records}):
        for ex in _load_variant_examples(config, variant_value):
            examples[(variant_value, ex.id)] = ex

    errors: list[dict] = []
    scored: list[RunRecord] = []
    for rec in records:
        ex = examples.get((rec.variant, rec.example_id))
        if ex is None:
            errors.append(
                {"stage": "score", "where": f"{rec.example_id}/{rec.variant}",
                 "error": "example missing from variant corpus"}
            )
            scored.append(rec)
            continue
        try:
            scored.append(_score_record(rec, ex, tokenize, provider, config.lowercase_bleu))
        except HarnessError as exc:
            errors.append(
                {"stage": "score", "where": f"{rec.example_id}/{rec.variant}", "error": str(exc)}
            )
            scored.append(rec)
    scored.sort(key=_record_sort_key)
    save_run(scored, config.runs_path)
    _write_jsonl(config.out / "errors_score.jsonl", errors)
    for err in errors:
        log.warning("score error at %s: %s", err["where"], err["error"])
    print(f"score: {len(scored)} records scored with tokenizer "
          f"{tokenize.tokenizer_id}, {len(errors)} errors")
    return 0 if len(errors) <= config.max_errors else 1


def _score_record(
    rec: RunRecord,
    ex: Example,
    tokenize,
    provider: metrics.EmbeddingProvider,
    lowercase_bleu: bool,
) -> RunRecord:
    reference = ex.reference
    generated = rec.generated
    bleu = metrics.bleu4(
        metrics.split_description(generated, lowercase_bleu),
        metrics.split_description(reference, lowercase_bleu),
    )
    code_sw = code_subwords(ex.code, tokenize)
    ref_sw = tokenize(reference)
    gen_sw = tokenize(generated)
    ref_copy = metrics.p_copy(code_sw, ref_sw, tokenize.tokenizer_id)
    eval_rec = EvalRecord(
        bleu4=bleu.value,
        p_copy_reference=ref_copy.value,
        p_copy_reference_matched=ref_copy.matched,
        p_copy_reference_total=ref_copy.total,
        tokenizer_id=tokenize.tokenizer_id,
        bucket=bucket_label_from_counts(ref_copy.matched, ref_copy.total),
    )
    if gen_sw:
        gen_copy = metrics.p_copy(code_sw, gen_sw, tokenize.tokenizer_id)
        eval_rec.p_copy_generated = gen_copy.value
        eval_rec.p_copy_generated_matched = gen_copy.matched
        eval_rec.p_copy_generated_total = gen_copy.total
        bert = metrics.bertscore(
            metrics.embed(ref_sw, provider), metrics.embed(gen_sw, provider)
        )
        eval_rec.bertscore_precision = bert.precision
        eval_rec.bertscore_recall = bert.recall
        eval_rec.bertscore_f1 = bert.f1
    else:
        eval_rec.bertscore_precision = 0.0
        eval_rec.bertscore_recall = 0.0
        eval_rec.bertscore_f1 = 0.0
    return RunRecord(
        example_id=rec.example_id,
        variant=rec.variant,
        model_id=rec.model_id,
        generated=rec.generated,
        metrics=eval_rec,
    )


def cmd_analyze(config: RunConfig) -> int:
    seed = config.require_seed()
    if not config.runs_path.exists():
        raise PrerequisiteError(
            f"missing {config.runs_path}; run `sumprobe generate` and `sumprobe score` first"
        )
    records = load_run(config.runs_path)
    if not records:
        raise PrerequisiteError(
            f"{config.runs_path} is empty; run `sumprobe generate` first"
        )
    unscored = [rec for rec in records if rec.metrics is None]
    if unscored:
        raise PrerequisiteError(
            f"{len(unscored)} record(s) have no scores; run `sumprobe score` first"
        )
    tokenize = tokenizer_from_spec(config.tokenizer)
    provider = HashedOneHotProvider(config.embedding_dim)
    examples: dict[tuple[str, str], Example] = {}
    for variant_value in sorted({rec.variant for rec in records}):
        for ex in _load_variant_examples(config, variant_value):
            examples[(variant_value, ex.id)] = ex
    written = emit_report(
        records,
        examples,
        config.report,
        tokenize,
        seed,
        extra_scorers={"bertscore_f1": bertscore_scorer(provider, tokenize)},
    )
    print(f"analyze: wrote {len(written)} file(s) to {config.report}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sumprobe",
        description="Probe how much code-summarization quality depends on "
        "code/description token overlap.",
    )
    parser.add_argument("--config", help="INI config file; flags override it")
    parser.add_argument("--seed", type=int, help="seed for all randomized steps (required)")
    parser.add_argument("--jobs", type=int, help="parallel workers for generation")
    parser.add_argument("--out", help="run directory (default: out)")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transform", help="filter the corpus and emit code variants")
    p.add_argument("--corpus", help="JSONL corpus with code/docstring fields")
    p.add_argument("--split", choices=("train", "dev", "test"))
    p.add_argument("--variant", action="append",
                   help="variant name or 'all' (repeatable)")
    p.add_argument("--min-tokens", type=int, help="min description tokens (default 3)")
    p.add_argument("--max-tokens", type=int, help="max description tokens (default 256)")
    p.add_argument("--max-errors", type=int, help="tolerated record errors (default 0)")
    p.add_argument("--skip-lang-filter", action="store_true",
                   help="accepted for compatibility; language detection is not "
                        "implemented, so non-English descriptions always pass")

    p = sub.add_parser("generate", help="elicit summaries from an LLM endpoint")
    p.add_argument("--model", help="model id recorded in run records")
    p.add_argument("--mock", choices=("echo",), help="use a mock client instead of HTTP")
    p.add_argument("--endpoint", help="chat-completions endpoint URL")
    p.add_argument("--shots-corpus", help="JSONL training corpus for few-shot examples")
    p.add_argument("--shots", type=int, help="few-shot example count (default 10)")
    p.add_argument("--temperature", type=float, help="decoding temperature (default 0)")
    p.add_argument("--gen-max-tokens", type=int, help="max new tokens (default 128)")

    p = sub.add_parser("score", help="score generations (BLEU, BERTScore, copy rate)")
    p.add_argument("--tokenizer", help="'fallback' or path to a vocab JSON file")
    p.add_argument("--embedding-endpoint", help="remote embedding service URL")
    p.add_argument("--embedding-dim", type=int, help="hashed one-hot dimension (default 256)")
    p.add_argument("--lowercase-bleu", action="store_true",
                   help="lowercase descriptions before BLEU tokenization")
    p.add_argument("--max-errors", type=int, help="tolerated record errors (default 0)")

    p = sub.add_parser("analyze", help="aggregate scored records into a report")
    p.add_argument("--report", help="report directory (default: <out>/report)")
    p.add_argument("--tokenizer", help="'fallback' or path to a vocab JSON file")
    return parser


_FLAG_OVERRIDES = [
    # (args attribute, config attribute)
    ("seed", "seed"),
    ("jobs", "jobs"),
    ("out", "out_dir"),
    ("corpus", "corpus_path"),
    ("split", "split"),
    ("min_tokens", "min_tokens"),
    ("max_tokens", "max_tokens"),
    ("max_errors", "max_errors"),
    ("model", "model_id"),
    ("mock", "mock"),
    ("endpoint", "endpoint"),
    ("shots_corpus", "train_path"),
    ("shots", "shots"),
    ("temperature", "temperature"),
    ("gen_max_tokens", "gen_max_tokens"),
    ("tokenizer", "tokenizer"),
    ("embedding_endpoint", "embedding_endpoint"),
    ("embedding_dim", "embedding_dim"),
    ("report", "report_dir"),
]


def config_from_args(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config)
    for arg_name, attr in _FLAG_OVERRIDES:
        value = getattr(args, arg_name, None)
        if value is not None:
            setattr(config, attr, value)
    if getattr(args, "variant", None):
        config.variants = [v.value for v in _parse_variants(args.variant)]
    if getattr(args, "lowercase_bleu", False):
        config.lowercase_bleu = True
    return config


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = config_from_args(args)
        command = {
            "transform": cmd_transform,
            "generate": cmd_generate,
            "score": cmd_score,
            "analyze": cmd_analyze,
        }[args.command]
        return command(config)
    except HarnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
