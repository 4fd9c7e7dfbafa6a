"""Concept-level evaluation: availability, fulfillment, preservation, ROUGE.

Availability asks how many gold concepts can be found in the source;
fulfillment asks how many made it into the system output; preservation
scores precision/recall over the source-available gold concepts. Ratios
are micro-averages (summed counts over the corpus) by default, with macro
(mean of per-example ratios) behind a flag, and every report records which
averaging produced it.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .corpus import (
    DEFAULT_POLICY,
    MISSING_CATEGORIES,
    CorpusExample,
    NormalizationPolicy,
    concept_in_text,
    normalize,
    tokenize,
)

AVERAGING_MODES = ("micro", "macro")
PRESERVATION_MODES = ("enforced-constraints", "output-concepts")


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float


def prf_from_counts(true_positives: int, num_predicted: int, num_gold: int) -> PRF:
    """Shared precision/recall convention: both sides empty is vacuously
    perfect (1/1/1); an empty side against a non-empty one scores 0."""
    if num_predicted == 0 and num_gold == 0:
        return PRF(1.0, 1.0, 1.0)
    precision = true_positives / num_predicted if num_predicted else 0.0
    recall = true_positives / num_gold if num_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return PRF(precision, recall, f1)


@dataclass
class ConceptStatsReport:
    mean_num_concepts: float
    availability: float
    fulfillment_all: float | None = None
    fulfillment_available: float | None = None
    averaging: str = "micro"
    num_examples: int = 0
    num_with_concepts: int = 0
    per_example: list[dict] = field(default_factory=list)


def _example_counts(example: CorpusExample, policy: NormalizationPolicy) -> dict:
    concepts = example.gold_concepts
    in_source = [c for c in concepts if concept_in_text(c, example.source, policy)]
    counts = {
        "id": example.id,
        "num_concepts": len(concepts),
        "num_in_source": len(in_source),
    }
    if example.system_output is not None:
        in_output = [c for c in concepts if concept_in_text(c, example.system_output, policy)]
        counts["num_in_output"] = len(in_output)
        counts["num_in_both"] = len(
            [c for c in in_source if concept_in_text(c, example.system_output, policy)]
        )
    return counts


def _ratio(numerators: list[int], denominators: list[int], averaging: str) -> float | None:
    if averaging == "micro":
        denom = sum(denominators)
        return sum(numerators) / denom if denom else None
    ratios = [n / d for n, d in zip(numerators, denominators) if d]
    return sum(ratios) / len(ratios) if ratios else None


def availability_stats(
    corpus: Sequence[CorpusExample],
    policy: NormalizationPolicy = DEFAULT_POLICY,
    averaging: str = "micro",
) -> ConceptStatsReport:
    """Fraction of gold concepts findable in the source input."""
    if averaging not in AVERAGING_MODES:
        raise ValueError(f"unknown averaging {averaging!r}")
    rows = [_example_counts(e, policy) for e in corpus]
    with_concepts = [r for r in rows if r["num_concepts"]]
    if not with_concepts:
        raise ValueError("no examples with gold concepts")
    availability = _ratio(
        [r["num_in_source"] for r in with_concepts],
        [r["num_concepts"] for r in with_concepts],
        averaging,
    )
    return ConceptStatsReport(
        mean_num_concepts=sum(r["num_concepts"] for r in rows) / len(rows),
        availability=availability,
        averaging=averaging,
        num_examples=len(rows),
        num_with_concepts=len(with_concepts),
        per_example=rows,
    )


def fulfillment_stats(
    corpus: Sequence[CorpusExample],
    policy: NormalizationPolicy = DEFAULT_POLICY,
    averaging: str = "micro",
) -> ConceptStatsReport:
    """Availability plus the fraction of gold concepts present in the output,
    over all gold concepts and over the source-available ones."""
    missing = [e.id for e in corpus if e.system_output is None]
    if missing:
        raise ValueError(f"examples missing system_output: {', '.join(missing)}")
    report = availability_stats(corpus, policy, averaging)
    rows = [r for r in report.per_example if r["num_concepts"]]
    report.fulfillment_all = _ratio(
        [r["num_in_output"] for r in rows], [r["num_concepts"] for r in rows], averaging
    )
    report.fulfillment_available = _ratio(
        [r["num_in_both"] for r in rows], [r["num_in_source"] for r in rows], averaging
    )
    return report


def estimate_actual_missing(availability: float, miss_fraction: float) -> float:
    """Share of gold concepts genuinely absent from the source: the
    unavailable share scaled by the fraction of misses annotated as real."""
    for name, value in (("availability", availability), ("miss_fraction", miss_fraction)):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
    return (1.0 - availability) * miss_fraction


def missing_category_stats(
    corpus: Sequence[CorpusExample],
    policy: NormalizationPolicy = DEFAULT_POLICY,
) -> dict:
    """Roll annotated missing-concept categories up into corpus shares.

    Raises if an annotated concept is actually present in its source under
    the active policy: categories only explain genuinely unmatched concepts.
    """
    counts: Counter = Counter()
    for example in corpus:
        for concept, category in (example.missing_categories or {}).items():
            if concept_in_text(concept, example.source, policy):
                raise ValueError(
                    f"example {example.id}: concept {concept!r} has a missing "
                    "category but is present in the source"
                )
            counts[category] += 1
    total = sum(counts.values())
    return {
        "counts": {cat: counts.get(cat, 0) for cat in MISSING_CATEGORIES},
        "fractions": {
            cat: (counts.get(cat, 0) / total if total else 0.0)
            for cat in MISSING_CATEGORIES
        },
        "total_annotated": total,
    }


@dataclass
class PreservationReport:
    precision: float | None
    recall: float | None
    f1: float | None
    mode: str
    averaging: str = "micro"
    num_examples: int = 0
    num_excluded: int = 0  # examples with no source-available gold concept


def preservation_prf(
    corpus: Sequence[CorpusExample],
    mode: str = "enforced-constraints",
    policy: NormalizationPolicy = DEFAULT_POLICY,
    averaging: str = "micro",
) -> PreservationReport:
    """Precision/recall over gold concepts available in the source input.

    Recall counts source-available gold concepts that reached the output.
    The predicted set is either the enforced constraints present in the
    output, or explicit output-side concept annotations; only
    output-present predictions count toward precision's denominator.
    """
    if mode not in PRESERVATION_MODES:
        raise ValueError(f"unknown preservation mode {mode!r}")
    if averaging not in AVERAGING_MODES:
        raise ValueError(f"unknown averaging {averaging!r}")
    tp_r: list[int] = []
    gold_n: list[int] = []
    tp_p: list[int] = []
    pred_n: list[int] = []
    excluded = 0
    for example in corpus:
        if example.system_output is None:
            raise ValueError(f"example {example.id} has no system_output")
        output = example.system_output
        gold_in_source = {
            normalize(c, policy)
            for c in example.gold_concepts
            if concept_in_text(c, example.source, policy)
        }
        matched = {c for c in gold_in_source if concept_in_text(c, output, policy)}
        if not gold_in_source:
            excluded += 1
        if mode == "enforced-constraints":
            if example.extracted_constraints is None:
                raise ValueError(
                    f"example {example.id} has no extracted_constraints for "
                    "enforced-constraints mode"
                )
            raw_predictions = example.extracted_constraints
        else:
            if example.output_concepts is None:
                raise ValueError(
                    f"example {example.id} has no output-side concept annotations "
                    "for output-concepts mode"
                )
            raw_predictions = example.output_concepts
        predicted = {
            normalize(c, policy)
            for c in raw_predictions
            if concept_in_text(c, output, policy)
        }
        tp_r.append(len(matched))
        gold_n.append(len(gold_in_source))
        tp_p.append(len(predicted & gold_in_source & matched))
        pred_n.append(len(predicted))
    precision = _ratio(tp_p, pred_n, averaging)
    recall = _ratio(tp_r, gold_n, averaging)
    if precision is None or recall is None:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return PreservationReport(
        precision=precision,
        recall=recall,
        f1=f1,
        mode=mode,
        averaging=averaging,
        num_examples=len(corpus),
        num_excluded=excluded,
    )


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        current = [0] * (len(b) + 1)
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                current[j] = previous[j - 1] + 1
            else:
                current[j] = max(previous[j], current[j - 1])
        previous = current
    return previous[len(b)]


def rouge(
    candidate: str,
    reference: str,
    variant: int | str = 1,
    policy: NormalizationPolicy = DEFAULT_POLICY,
) -> PRF:
    """ROUGE-1/2 via clipped n-gram overlap, ROUGE-L via whole-text LCS.

    Both sides empty (at the n-gram level) is scored 1/1/1 so identity is
    exact for every variant; one-sided emptiness scores 0.
    """
    cand = tokenize(candidate, policy)
    ref = tokenize(reference, policy)
    if variant in ("L", "l"):
        lcs = _lcs_length(cand, ref)
        return prf_from_counts(lcs, len(cand), len(ref))
    n = int(variant)
    if n < 1:
        raise ValueError(f"unknown rouge variant {variant!r}")
    cand_counts = _ngrams(cand, n)
    ref_counts = _ngrams(ref, n)
    overlap = sum(min(count, ref_counts[gram]) for gram, count in cand_counts.items())
    return prf_from_counts(overlap, sum(cand_counts.values()), sum(ref_counts.values()))


def rouge_corpus(
    pairs: Iterable[tuple[str, str]],
    variant: int | str,
    policy: NormalizationPolicy = DEFAULT_POLICY,
) -> PRF:
    """Mean of per-pair scores (the usual reporting convention for ROUGE)."""
    scores = [rouge(c, r, variant, policy) for c, r in pairs]
    if not scores:
        raise ValueError("no candidate/reference pairs to score")
    n = len(scores)
    return PRF(
        precision=sum(s.precision for s in scores) / n,
        recall=sum(s.recall for s in scores) / n,
        f1=sum(s.f1 for s in scores) / n,
    )
