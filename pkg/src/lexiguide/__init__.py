"""Lexically constrained decoding and concept-preservation evaluation."""

from .constraints import (
    Constraint,
    ConstraintError,
    ConstraintTrie,
    TrackerState,
    advance,
    build_trie,
    compile_constraints,
    initial_state,
    is_complete,
    replay,
    unmet_next_tokens,
)
from .corpus import (
    CorpusError,
    CorpusExample,
    NormalizationPolicy,
    concept_in_text,
    load_corpus,
    normalize,
    save_corpus,
    tokenize,
)
from .decoding import (
    Beam,
    DecodeConfig,
    DecodeResult,
    DenoiseConfig,
    Hypothesis,
    allocate_banks,
    beam_search,
    decode_dba,
    decode_ddba,
    step_candidates,
)
from .scorers import (
    BOS_ID,
    NGramModel,
    RemoteScorer,
    RemoteScorerError,
    StepScores,
    TableScorer,
    Vocabulary,
    train_ngram,
)

__version__ = "0.1.0"
