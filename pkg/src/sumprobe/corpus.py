"""Corpus loading, filtering, and run-record persistence.

Corpora are JSON Lines with CodeSearchNet-style field names: `code` holds
the source snippet, `docstring` the reference description. Run files are
JSON Lines of per-(example, variant, model) records.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import HarnessError
from .pylex import UnlexableError, lex


class CorpusError(HarnessError):
    pass


class DuplicateRunKeyError(CorpusError):
    def __init__(self, key: tuple[str, str, str]) -> None:
        super().__init__(
            "duplicate run record for (example_id, variant, model_id) = "
            f"{key!r}"
        )
        self.key = key


class FilterReason(str, Enum):
    EMPTY = "empty"
    HAS_URL = "has_url"
    TOO_SHORT = "too_short"
    TOO_LONG = "too_long"
    UNLEXABLE = "unlexable"


@dataclass(frozen=True)
class Example:
    """One corpus entry: code snippet plus its reference description."""

    id: str
    code: str
    reference: str
    origin: dict = field(default_factory=dict)


@dataclass(frozen=True)
class FilterDecision:
    accepted: bool
    reason: FilterReason | None = None

    def __post_init__(self) -> None:
        if self.accepted == (self.reason is not None):
            raise ValueError("accepted must be true iff reason is absent")


@dataclass(frozen=True)
class LineError:
    """A corpus line that could not be turned into an Example."""

    path: str
    line_number: int
    message: str


@dataclass
class EvalRecord:
    """Scores for one generation; None means the score was not computed."""

    bleu4: float | None = None
    bertscore_precision: float | None = None
    bertscore_recall: float | None = None
    bertscore_f1: float | None = None
    p_copy_reference: float | None = None
    p_copy_reference_matched: int | None = None
    p_copy_reference_total: int | None = None
    p_copy_generated: float | None = None
    p_copy_generated_matched: int | None = None
    p_copy_generated_total: int | None = None
    tokenizer_id: str = ""
    bucket: str | None = None


@dataclass
class RunRecord:
    example_id: str
    variant: str
    model_id: str
    generated: str
    metrics: EvalRecord | None = None

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.example_id, self.variant, self.model_id)

    def to_dict(self) -> dict:
        out = asdict(self)
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "RunRecord":
        metrics = raw.get("metrics")
        return cls(
            example_id=raw["example_id"],
            variant=raw["variant"],
            model_id=raw["model_id"],
            generated=raw["generated"],
            metrics=EvalRecord(**metrics) if metrics is not None else None,
        )


def load_corpus(
    path: str | Path, split: str = "test"
) -> tuple[list[Example], list[LineError]]:
    """Read a JSONL corpus; every line becomes an Example or a LineError.

    Lines must be JSON objects with string `code` and `docstring` fields.
    An `id` field is used when present; otherwise ids are `path:lineno`.
    Unknown fields are preserved in Example.origin.
    """
    path = Path(path)
    if split not in ("train", "dev", "test"):
        raise CorpusError(f"unknown split {split!r}")
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CorpusError(f"cannot read corpus {path}: {exc}") from exc

    examples: list[Example] = []
    errors: list[LineError] = []
    seen_ids: set[str] = set()
    for lineno, raw_line in enumerate(data.split(b"\n"), start=1):
        if not raw_line.strip():
            continue

        def err(message: str) -> None:
            errors.append(LineError(str(path), lineno, message))

        try:
            line = raw_line.decode("utf-8")
        except UnicodeDecodeError as exc:
            err(f"invalid UTF-8: {exc}")
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            err(f"malformed JSON: {exc}")
            continue
        if not isinstance(obj, dict):
            err("line is not a JSON object")
            continue
        code = obj.get("code")
        reference = obj.get("docstring")
        if not isinstance(code, str):
            err("missing or non-string field 'code'")
            continue
        if not isinstance(reference, str):
            err("missing or non-string field 'docstring'")
            continue
        ex_id = str(obj["id"]) if "id" in obj else f"{path}:{lineno}"
        if ex_id in seen_ids:
            err(f"duplicate id {ex_id!r}")
            continue
        seen_ids.add(ex_id)
        origin = {k: v for k, v in obj.items() if k not in ("code", "docstring", "id")}
        origin.setdefault("split", split)
        examples.append(Example(id=ex_id, code=code, reference=reference, origin=origin))
    return examples, errors


def filter_example(
    ex: Example, min_tokens: int = 3, max_tokens: int = 256
) -> FilterDecision:
    """Accept or reject one example.

    Rejections: empty code or description, an "http://" marker in the
    description, a description outside [min_tokens, max_tokens] whitespace
    tokens (bounds inclusive), or code the lexer refuses.
    """
    if not ex.reference.strip() or not ex.code.strip():
        return FilterDecision(False, FilterReason.EMPTY)
    if "http://" in ex.reference:
        return FilterDecision(False, FilterReason.HAS_URL)
    count = len(ex.reference.split())
    if count < min_tokens:
        return FilterDecision(False, FilterReason.TOO_SHORT)
    if count > max_tokens:
        return FilterDecision(False, FilterReason.TOO_LONG)
    try:
        lex(ex.code)
    except UnlexableError:
        return FilterDecision(False, FilterReason.UNLEXABLE)
    return FilterDecision(True)


def filter_corpus(
    examples: Iterable[Example], min_tokens: int = 3, max_tokens: int = 256
) -> tuple[list[Example], list[tuple[Example, FilterDecision]]]:
    accepted: list[Example] = []
    rejected: list[tuple[Example, FilterDecision]] = []
    for ex in examples:
        decision = filter_example(ex, min_tokens, max_tokens)
        if decision.accepted:
            accepted.append(ex)
        else:
            rejected.append((ex, decision))
    return accepted, rejected


def save_run(records: Sequence[RunRecord], path: str | Path) -> None:
    """Write run records as JSONL; duplicate keys are refused up front."""
    path = Path(path)
    seen: set[tuple[str, str, str]] = set()
    for rec in records:
        if rec.key in seen:
            raise DuplicateRunKeyError(rec.key)
        seen.add(rec.key)
    lines = [json.dumps(rec.to_dict(), ensure_ascii=False) for rec in records]
    try:
        path.write_text(
            "".join(line + "\n" for line in lines), encoding="utf-8", newline="\n"
        )
    except OSError as exc:
        raise CorpusError(f"cannot write run file {path}: {exc}") from exc


def load_run(path: str | Path) -> list[RunRecord]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read run file {path}: {exc}") from exc
    records: list[RunRecord] = []
    seen: set[tuple[str, str, str]] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = RunRecord.from_dict(json.loads(line))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise CorpusError(f"{path}:{lineno}: bad run record: {exc}") from exc
        if rec.key in seen:
            raise DuplicateRunKeyError(rec.key)
        seen.add(rec.key)
        records.append(rec)
    return records
