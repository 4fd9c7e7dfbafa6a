"""Corpus records, text normalization, and concept-in-text matching.

Everything downstream (constraint labeling, decoding, evaluation) agrees on
one notion of token identity: whitespace tokens after an explicit
normalization policy. Concept matching is token-level contiguous
subsequence containment, never raw substring search, so "rome" does not
match inside "syndrome".
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

MISSING_CATEGORIES = ("Spell", "Miss", "NER", "Knowledge")

_EDGE_PUNCT = string.punctuation


class CorpusError(ValueError):
    """Raised for malformed corpus files or records."""


@dataclass(frozen=True)
class NormalizationPolicy:
    """Flags applied before tokenization.

    ``normalize`` is idempotent under every flag combination. When
    ``collapse_whitespace`` is off, only the plain space character delimits
    tokens and other whitespace survives inside tokens verbatim.
    """

    casefold: bool = True
    collapse_whitespace: bool = True
    strip_punctuation_edges: bool = True


DEFAULT_POLICY = NormalizationPolicy()


def tokenize(text: str, policy: NormalizationPolicy = DEFAULT_POLICY) -> list[str]:
    """Split ``text`` into normalized tokens; empty tokens never survive."""
    if policy.casefold:
        text = text.casefold()
    if policy.collapse_whitespace:
        parts = text.split()
    else:
        parts = [p for p in text.split(" ") if p]
    if policy.strip_punctuation_edges:
        parts = [p.strip(_EDGE_PUNCT) for p in parts]
        parts = [p for p in parts if p]
    return parts


def normalize(text: str, policy: NormalizationPolicy = DEFAULT_POLICY) -> str:
    """Single-space join of the policy's tokens; normalize(normalize(s)) == normalize(s)."""
    return " ".join(tokenize(text, policy))


def concept_in_text(concept: str, text: str, policy: NormalizationPolicy = DEFAULT_POLICY) -> bool:
    """True iff the concept's token sequence occurs contiguously in the text's tokens.

    A concept that normalizes to zero tokens is vacuously contained.
    """
    needle = tokenize(concept, policy)
    if not needle:
        return True
    hay = tokenize(text, policy)
    n = len(needle)
    return any(hay[i : i + n] == needle for i in range(len(hay) - n + 1))


@dataclass
class CorpusExample:
    """One source/target pair with optional system output and concept annotations.

    ``gold_concepts`` holds one surface form per concept. ``missing_categories``
    maps a gold concept to the annotated reason it is absent from the source
    (one of ``MISSING_CATEGORIES``). ``output_concepts`` carries output-side
    concept annotations for precision scoring when available.
    """

    id: str
    source: str
    target: str | None = None
    system_output: str | None = None
    gold_concepts: list[str] = field(default_factory=list)
    extracted_constraints: list[str] | None = None
    output_concepts: list[str] | None = None
    missing_categories: dict[str, str] | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise CorpusError("example id must be non-empty")
        for concept in self.gold_concepts:
            if not concept or not concept.strip():
                raise CorpusError(f"example {self.id}: empty gold concept")
        if self.missing_categories is not None:
            for concept, category in self.missing_categories.items():
                if category not in MISSING_CATEGORIES:
                    raise CorpusError(
                        f"example {self.id}: unknown missing category {category!r}"
                    )
                if concept not in self.gold_concepts:
                    raise CorpusError(
                        f"example {self.id}: missing category for unknown concept {concept!r}"
                    )


_REQUIRED_FIELDS = ("id", "source")
_OPTIONAL_FIELDS = (
    "target",
    "system_output",
    "gold_concepts",
    "extracted_constraints",
    "output_concepts",
    "missing_categories",
)


def example_from_record(record: dict) -> CorpusExample:
    """Build an example from a parsed record; unknown keys are tolerated."""
    for name in _REQUIRED_FIELDS:
        if name not in record:
            raise CorpusError(f"missing field {name}")
    return CorpusExample(
        id=record["id"],
        source=record["source"],
        target=record.get("target"),
        system_output=record.get("system_output"),
        gold_concepts=list(record.get("gold_concepts") or []),
        extracted_constraints=record.get("extracted_constraints"),
        output_concepts=record.get("output_concepts"),
        missing_categories=record.get("missing_categories"),
    )


def example_to_record(example: CorpusExample) -> dict:
    """Serializable record; optional fields that are absent stay absent."""
    record: dict = {"id": example.id, "source": example.source}
    if example.target is not None:
        record["target"] = example.target
    if example.system_output is not None:
        record["system_output"] = example.system_output
    if example.gold_concepts:
        record["gold_concepts"] = list(example.gold_concepts)
    if example.extracted_constraints is not None:
        record["extracted_constraints"] = list(example.extracted_constraints)
    if example.output_concepts is not None:
        record["output_concepts"] = list(example.output_concepts)
    if example.missing_categories is not None:
        record["missing_categories"] = dict(example.missing_categories)
    return record


def load_corpus(path: str | Path) -> list[CorpusExample]:
    """Read a line-delimited JSON corpus, preserving file order.

    Raises :class:`CorpusError` naming the offending line for malformed
    records and the offending id for duplicates. Blank lines are rejected
    rather than skipped: every line must be one self-contained record.
    """
    path = Path(path)
    examples: list[CorpusExample] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                raise CorpusError(f"line {lineno}: blank line")
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise CorpusError(f"line {lineno}: record is not an object")
            try:
                example = example_from_record(record)
            except CorpusError as exc:
                raise CorpusError(f"line {lineno}: {exc}") from exc
            if example.id in seen:
                raise CorpusError(f"line {lineno}: duplicate id {example.id}")
            seen.add(example.id)
            examples.append(example)
    return examples


def save_corpus(examples: Iterable[CorpusExample], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for example in examples:
            handle.write(json.dumps(example_to_record(example), ensure_ascii=False))
            handle.write("\n")
