"""Beam search over the scorer contract: plain, hard-constrained, and denoised.

The constrained modes partition the beam into banks indexed by the number
of satisfied constraint tokens. Per step, candidates come from three
sources: the global top-B extensions, every hypothesis's unmet constraint
tokens, and every hypothesis's single best extension. ``dba`` admits the
end token only once a hypothesis has met every constraint; ``ddba``
additionally filters injected constraint tokens by their step probability
and (with the relaxed end policy) lets any hypothesis finish.

``max_len`` bounds the number of content tokens; the end token may still
be emitted one step after that bound, so a length-saturated hypothesis can
finish but not grow.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .constraints import (
    Constraint,
    ConstraintTrie,
    TrackerState,
    advance,
    build_trie,
    initial_state,
    is_complete,
    unmet_next_tokens,
)
from .scorers import Scorer, StepScores

MODES = ("plain", "dba", "ddba")
LENGTH_NORMS = ("off", "divide-by-length")
EOS_POLICIES = ("relaxed", "gated")

#: Constrained-search overhead grows with the beam; sizes above this warn.
RECOMMENDED_MAX_BEAM = 20


@dataclass(frozen=True)
class DecodeConfig:
    beam_size: int = 10
    max_len: int = 32
    length_normalization: str = "off"
    mode: str = "plain"
    trace: bool = False

    def __post_init__(self) -> None:
        if self.beam_size < 1:
            raise ValueError("beam_size must be at least 1")
        if self.max_len < 0:
            raise ValueError("max_len must be non-negative")
        if self.length_normalization not in LENGTH_NORMS:
            raise ValueError(f"unknown length_normalization {self.length_normalization!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.beam_size > RECOMMENDED_MAX_BEAM:
            warnings.warn(
                f"beam_size {self.beam_size} exceeds the recommended maximum "
                f"of {RECOMMENDED_MAX_BEAM}",
                stacklevel=2,
            )


@dataclass(frozen=True)
class DenoiseConfig:
    """Step-level constraint denoising knobs.

    ``tau`` thresholds the constraint token's step probability (not log).
    ``tau=0`` with ``eos_policy="gated"`` reproduces hard-constrained
    search exactly. ``satisfaction_tiebreak`` is an uncited extension that
    prefers finished outputs satisfying more constraint tokens; it is off
    by default and winner selection is pure score.
    """

    tau: float = 0.05
    eos_policy: str = "relaxed"
    satisfaction_tiebreak: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau < 1.0:
            raise ValueError("tau must lie in [0, 1)")
        if self.eos_policy not in EOS_POLICIES:
            raise ValueError(f"unknown eos_policy {self.eos_policy!r}")


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple[int, ...]
    logprob: float
    tracker: TrackerState
    finished: bool = False

    @property
    def satisfied_token_count(self) -> int:
        return self.tracker.satisfied_token_count


@dataclass
class Beam:
    """Hypotheses partitioned by satisfied-token count; bank b holds count b."""

    banks: list[list[Hypothesis]]
    capacity: int

    def live(self) -> list[Hypothesis]:
        return [h for bank in self.banks for h in bank if not h.finished]

    def finished(self) -> list[Hypothesis]:
        return [h for bank in self.banks for h in bank if h.finished]

    def occupancies(self) -> list[int]:
        return [len(bank) for bank in self.banks]


@dataclass(frozen=True)
class DecodeResult:
    tokens: tuple[int, ...]
    logprob: float
    satisfied_constraints: tuple[Constraint, ...]
    satisfied_token_count: int
    finished: bool
    trace: tuple[dict, ...] | None = None


@dataclass
class CandidateSet:
    """Extended hypotheses for one step plus the denoising bookkeeping."""

    hypotheses: list[Hypothesis]
    injected: list[dict] = field(default_factory=list)
    filtered: list[dict] = field(default_factory=list)


def _rank_key(h: Hypothesis):
    """Total order: higher logprob, then fewer tokens, then lexicographically
    smaller token ids, finished before unfinished."""
    return (-h.logprob, len(h.tokens), h.tokens, not h.finished)


def _selection_key(h: Hypothesis, length_normalization: str):
    score = h.logprob
    if length_normalization == "divide-by-length":
        emitted = len(h.tokens) + (1 if h.finished else 0)
        score = h.logprob / max(1, emitted)
    return (-score, len(h.tokens), h.tokens, not h.finished)


def _extend(h: Hypothesis, token: int, logprob: float, trie: ConstraintTrie, eos_id: int) -> Hypothesis:
    tracker = advance(h.tracker, token, trie)
    if token == eos_id:
        return Hypothesis(h.tokens, h.logprob + logprob, tracker, finished=True)
    return Hypothesis(h.tokens + (token,), h.logprob + logprob, tracker, finished=False)


def step_candidates(
    live: Sequence[Hypothesis],
    scores: StepScores,
    trie: ConstraintTrie,
    mode: str,
    denoise: DenoiseConfig | None = None,
    *,
    eos_id: int,
    beam_size: int,
    saturated: bool = False,
) -> CandidateSet:
    """Union of the three per-step candidate sources, deduplicated.

    ``saturated`` marks steps where content growth is exhausted and only
    the end token may be emitted. Rows of ``scores`` align 1:1 with
    ``live``.
    """
    if scores.num_rows != len(live):
        raise ValueError("score rows must align with live hypotheses")
    rows = scores.logprobs
    vocab_size = rows.shape[1]
    eos_gated = mode == "dba" or (
        mode == "ddba" and denoise is not None and denoise.eos_policy == "gated"
    )
    complete = [is_complete(h.tracker, trie) for h in live]

    all_ids = np.arange(vocab_size)
    content_ids = np.concatenate([all_ids[:eos_id], all_ids[eos_id + 1 :]])
    chosen: dict[tuple[int, int], Hypothesis] = {}
    injected: list[dict] = []
    filtered: list[dict] = []

    def admit(i: int, token: int) -> Hypothesis:
        key = (i, token)
        if key not in chosen:
            chosen[key] = _extend(live[i], token, float(rows[i, token]), trie, eos_id)
        return chosen[key]

    def pair_key(pair: tuple[int, int]):
        # Mirrors _rank_key on the would-be extension without building it.
        i, token = pair
        logprob = live[i].logprob + float(rows[i, token])
        if token == eos_id:
            return (-logprob, len(live[i].tokens), live[i].tokens, False)
        extended = live[i].tokens + (token,)
        return (-logprob, len(extended), extended, True)

    # Sources 1 and 3: pool each row's top candidates, then keep the global
    # top-B of the pool under the full ranking order, plus each row's best.
    pool: list[tuple[int, int]] = []
    for i, h in enumerate(live):
        eos_ok = not eos_gated or complete[i]
        if saturated:
            ids = np.array([eos_id]) if eos_ok else np.array([], dtype=int)
        elif eos_ok:
            ids = all_ids
        else:
            ids = content_ids
        # Probability-zero extensions are not candidates here; only the
        # unconditional constraint-injection source may introduce them.
        ids = ids[np.isfinite(rows[i, ids])]
        if ids.size == 0:
            continue
        # Score descending, end token first on ties, then lower token id:
        # the same tie order _rank_key induces for same-prefix extensions.
        order = np.lexsort((ids, (ids != eos_id).astype(int), -rows[i, ids]))
        top = ids[order[:beam_size]]
        pool.extend((i, int(t)) for t in top)
        admit(i, int(top[0]))  # source 3: single best per hypothesis

    for i, token in sorted(pool, key=pair_key)[:beam_size]:  # source 1: global top-B
        admit(i, token)

    # Source 2: per-hypothesis unmet constraint tokens, denoised in ddba mode.
    if not saturated and mode in ("dba", "ddba"):
        for i, h in enumerate(live):
            for token in sorted(unmet_next_tokens(h.tracker, trie)):
                prob = math.exp(rows[i, token])
                if mode == "ddba" and denoise is not None and prob < denoise.tau:
                    filtered.append({"hyp": i, "token": token, "prob": prob})
                    continue
                injected.append({"hyp": i, "token": token, "prob": prob})
                admit(i, token)

    ordered = sorted(chosen.values(), key=_rank_key)
    return CandidateSet(hypotheses=ordered, injected=injected, filtered=filtered)


def allocate_banks(candidates: Sequence[Hypothesis], beam_size: int, num_banks: int) -> Beam:
    """Route candidates to banks and trim to the beam size.

    Every bank initially keeps at most ceil(B / num_banks) hypotheses by
    score. Unused slots are handed out round-robin from the highest-index
    bank downward; when banks outnumber the beam, slots are withdrawn
    round-robin from the lowest-index bank upward, so hypotheses closer to
    full satisfaction are favored in both directions.
    """
    banks: list[list[Hypothesis]] = [[] for _ in range(num_banks)]
    for h in candidates:
        banks[h.satisfied_token_count].append(h)
    for bank in banks:
        bank.sort(key=_rank_key)

    avail = [len(bank) for bank in banks]
    target = min(beam_size, sum(avail))
    quota = math.ceil(beam_size / num_banks)
    keep = [min(quota, a) for a in avail]
    total = sum(keep)
    while total < target:
        for b in range(num_banks - 1, -1, -1):
            if total == target:
                break
            if keep[b] < avail[b]:
                keep[b] += 1
                total += 1
    while total > target:
        for b in range(num_banks):
            if total == target:
                break
            if keep[b] > 0:
                keep[b] -= 1
                total -= 1
    return Beam(banks=[bank[:k] for bank, k in zip(banks, keep)], capacity=beam_size)


def _pick_winner(
    finished: list[Hypothesis],
    live: list[Hypothesis],
    mode: str,
    config: DecodeConfig,
    denoise: DenoiseConfig | None,
) -> Hypothesis:
    relaxed = mode == "plain" or (
        mode == "ddba" and denoise is not None and denoise.eos_policy == "relaxed"
    )
    if finished:
        if not relaxed:
            # Gated end token: every finished hypothesis sits in the top bank.
            top = max(h.satisfied_token_count for h in finished)
            candidates = [h for h in finished if h.satisfied_token_count == top]
        else:
            candidates = finished
        if denoise is not None and denoise.satisfaction_tiebreak:
            best_count = max(h.satisfied_token_count for h in candidates)
            candidates = [h for h in candidates if h.satisfied_token_count == best_count]
        return min(candidates, key=lambda h: _selection_key(h, config.length_normalization))
    if relaxed:
        pool = live
    else:
        top = max(h.satisfied_token_count for h in live)
        pool = [h for h in live if h.satisfied_token_count == top]
    return min(pool, key=lambda h: _selection_key(h, config.length_normalization))


def _decode(
    scorer: Scorer,
    prompt: Sequence[int],
    constraints: Sequence[Constraint],
    config: DecodeConfig,
    denoise: DenoiseConfig | None,
) -> DecodeResult:
    trie = build_trie(constraints, scorer.vocab)
    num_banks = trie.total_tokens + 1
    eos_id = scorer.vocab.eos_id
    prompt = list(prompt)

    live: list[Hypothesis] = [Hypothesis((), 0.0, initial_state(trie), False)]
    finished: list[Hypothesis] = []
    last_live = live
    trace: list[dict] | None = [] if config.trace else None

    for step in range(config.max_len + 1):
        if not live:
            break
        last_live = live
        saturated = step == config.max_len
        scores = scorer.score_step([prompt + list(h.tokens) for h in live])
        cands = step_candidates(
            live,
            scores,
            trie,
            config.mode,
            denoise,
            eos_id=eos_id,
            beam_size=config.beam_size,
            saturated=saturated,
        )
        if not cands.hypotheses:
            live = []
            break
        beam = allocate_banks(cands.hypotheses, config.beam_size, num_banks)
        if trace is not None:
            trace.append(
                {
                    "step": step,
                    "injected": cands.injected,
                    "filtered": cands.filtered,
                    "banks": beam.occupancies(),
                }
            )
        finished.extend(beam.finished())
        live = beam.live()

    winner = _pick_winner(finished, live or last_live, config.mode, config, denoise)
    satisfied = tuple(constraints[i] for i in sorted(winner.tracker.satisfied))
    return DecodeResult(
        tokens=winner.tokens,
        logprob=winner.logprob,
        satisfied_constraints=satisfied,
        satisfied_token_count=winner.satisfied_token_count,
        finished=winner.finished,
        trace=tuple(trace) if trace is not None else None,
    )


def beam_search(scorer: Scorer, prompt: Sequence[int], config: DecodeConfig) -> DecodeResult:
    """Standard beam search; returns the best finished hypothesis, or the
    best unfinished one flagged ``finished=False`` if none finished."""
    if config.mode != "plain":
        raise ValueError("beam_search requires mode='plain'")
    return _decode(scorer, prompt, (), config, None)


def decode_dba(
    scorer: Scorer,
    prompt: Sequence[int],
    constraints: Sequence[Constraint],
    config: DecodeConfig,
) -> DecodeResult:
    """Hard-constrained search: the end token is admitted only for
    hypotheses that satisfied every constraint, so every finished result
    contains every constraint."""
    if config.mode != "dba":
        raise ValueError("decode_dba requires mode='dba'")
    return _decode(scorer, prompt, constraints, config, None)


def decode_ddba(
    scorer: Scorer,
    prompt: Sequence[int],
    constraints: Sequence[Constraint],
    config: DecodeConfig,
    denoise: DenoiseConfig | None = None,
) -> DecodeResult:
    """Denoised constrained search: constraint-token injection is filtered
    by step probability, and with the relaxed end policy the winner is the
    best finished hypothesis across all banks by pure score."""
    if config.mode != "ddba":
        raise ValueError("decode_ddba requires mode='ddba'")
    return _decode(scorer, prompt, constraints, config, denoise or DenoiseConfig())
