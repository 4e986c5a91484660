"""Probing harness for lexical-overlap effects in code summarization.

The package turns a JSONL corpus of (code, description) pairs into
transformed corpus variants, elicits summaries from an LLM endpoint (or a
mock), scores them (BLEU-4, BERTScore, token-copy rate), and aggregates the
results into CSV/SVG reports.
"""

__version__ = "0.1.0"
