"""Constraint extraction: gold-label creation and score-threshold filtering.

Gold constraint labels come from mapping target-side gold concepts into
the source. Automatic constraints come from externally scored candidate
spans (or the built-in surface heuristic when none are supplied), kept
only when the score clears a threshold and the span actually occurs in
the source.
"""

from __future__ import annotations

import json
import math
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .corpus import (
    DEFAULT_POLICY,
    CorpusError,
    CorpusExample,
    NormalizationPolicy,
    concept_in_text,
    normalize,
    tokenize,
)
from .metrics import PRF, prf_from_counts

_EDGE_PUNCT = string.punctuation

GOLD_MAPPED = "gold-mapped"
PREDICTED = "predicted"


@dataclass(frozen=True)
class ConstraintLabel:
    """A constraint surface anchored to a token span of the source."""

    surface: str
    source_span: tuple[int, int]
    origin: str = GOLD_MAPPED


@dataclass(frozen=True)
class ScoredCandidate:
    surface: str
    score: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.score):
            raise ValueError(f"candidate {self.surface!r} has non-finite score")


def _find_spans(
    needle: list[str], haystack: list[str], first_only: bool
) -> list[tuple[int, int]]:
    spans = []
    n = len(needle)
    for i in range(len(haystack) - n + 1):
        if haystack[i : i + n] == needle:
            spans.append((i, i + n))
            if first_only:
                break
    return spans


def label_gold_constraints(
    example: CorpusExample,
    policy: NormalizationPolicy = DEFAULT_POLICY,
    occurrences: str = "first",
) -> tuple[list[ConstraintLabel], list[str]]:
    """Map gold concepts into the source, returning labels and the concepts
    that could not be found. ``occurrences`` selects the first span per
    concept or all of them."""
    if occurrences not in ("first", "all"):
        raise ValueError(f"unknown occurrences mode {occurrences!r}")
    source_tokens = tokenize(example.source, policy)
    labels: list[ConstraintLabel] = []
    unmapped: list[str] = []
    for concept in example.gold_concepts:
        needle = tokenize(concept, policy)
        spans = _find_spans(needle, source_tokens, occurrences == "first") if needle else []
        if not spans:
            unmapped.append(concept)
            continue
        for span in spans:
            labels.append(
                ConstraintLabel(surface=" ".join(needle), source_span=span, origin=GOLD_MAPPED)
            )
    return labels, unmapped


def extract_constraints(
    source: str,
    candidates: Sequence[ScoredCandidate],
    threshold: float,
    policy: NormalizationPolicy = DEFAULT_POLICY,
) -> list[str]:
    """Candidates scoring at or above the threshold and present in the
    source, deduplicated by normalized surface, ordered by score descending."""
    kept: dict[str, float] = {}
    order: list[str] = []
    for candidate in candidates:
        if candidate.score < threshold:
            continue
        surface = normalize(candidate.surface, policy)
        if not surface or not concept_in_text(surface, source, policy):
            continue
        if surface not in kept:
            kept[surface] = candidate.score
            order.append(surface)
        else:
            kept[surface] = max(kept[surface], candidate.score)
    # Stable sort keeps first-appearance order among equal scores.
    return sorted(order, key=lambda s: -kept[s])


def heuristic_candidates(
    source: str,
    policy: NormalizationPolicy = DEFAULT_POLICY,
) -> list[ScoredCandidate]:
    """Surface stand-in for a trained span scorer: runs of capitalized
    tokens and digit-bearing tokens, scored by position and span length."""
    raw = source.split()
    total = len(raw)
    candidates: list[ScoredCandidate] = []

    def is_capitalized(token: str) -> bool:
        stripped = token.strip(_EDGE_PUNCT)
        return bool(stripped) and stripped[0].isalpha() and stripped[0].isupper()

    def has_digit(token: str) -> bool:
        return any(ch.isdigit() for ch in token)

    def emit(span_tokens: list[str], start: int) -> None:
        surface = " ".join(t.strip(_EDGE_PUNCT) for t in span_tokens).strip()
        if not surface or not tokenize(surface, policy):
            return
        length_score = min(len(span_tokens), 3) / 3
        position_score = 1.0 - start / total
        candidates.append(ScoredCandidate(surface, (length_score + position_score) / 2))

    i = 0
    while i < total:
        if is_capitalized(raw[i]):
            j = i
            while j < total and is_capitalized(raw[j]):
                j += 1
            emit(raw[i:j], i)
            i = j
        else:
            if has_digit(raw[i]):
                emit([raw[i]], i)
            i += 1
    return candidates


def eval_extraction(
    predicted: Sequence[str],
    gold: Sequence[str],
    policy: NormalizationPolicy = DEFAULT_POLICY,
) -> PRF:
    """Exact set match after normalization; symmetric under swapping the
    arguments with precision and recall exchanged."""
    pred_set = {normalize(s, policy) for s in predicted} - {""}
    gold_set = {normalize(s, policy) for s in gold} - {""}
    return prf_from_counts(len(pred_set & gold_set), len(pred_set), len(gold_set))


def load_candidate_file(path: str | Path) -> dict[str, list[ScoredCandidate]]:
    """Read line-delimited {id, candidates: [{surface, score}...]} records."""
    by_id: dict[str, list[ScoredCandidate]] = {}
    with Path(path).open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                raise CorpusError(f"line {lineno}: blank line")
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            if "id" not in record or "candidates" not in record:
                raise CorpusError(f"line {lineno}: record needs id and candidates")
            if record["id"] in by_id:
                raise CorpusError(f"line {lineno}: duplicate id {record['id']}")
            try:
                by_id[record["id"]] = [
                    ScoredCandidate(c["surface"], float(c["score"]))
                    for c in record["candidates"]
                ]
            except (KeyError, TypeError, ValueError) as exc:
                raise CorpusError(f"line {lineno}: bad candidate ({exc})") from exc
    return by_id
