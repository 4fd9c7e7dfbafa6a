import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lexiguide.constraints import (
    Constraint,
    ConstraintError,
    advance,
    build_trie,
    compile_constraints,
    initial_state,
    is_complete,
    replay,
    unmet_next_tokens,
)
from lexiguide.scorers import Vocabulary

from helpers import contains_contiguous, disjoint_constraints

VOCAB = Vocabulary(("n", "y", "j", "q", "<eos>"), eos_id=4)
N, Y, J, Q = 0, 1, 2, 3


def make(*phrases):
    return [Constraint(surface=" ".join(VOCAB.tokens[t] for t in p), tokens=p) for p in phrases]


class TestBuildTrie:
    def test_empty_set(self):
        trie = build_trie([], VOCAB)
        assert trie.total_tokens == 0
        assert trie.node_count() == 1
        assert trie.terminal_count() == 0

    def test_two_phrases(self):
        trie = build_trie(make((N, Y), (Q,)), VOCAB)
        assert trie.node_count() - 1 == 3
        assert trie.terminal_count() == 2
        assert trie.total_tokens == 3

    def test_shared_prefix(self):
        trie = build_trie(make((N, Y), (N, J)), VOCAB)
        assert trie.node_count() - 1 == 3  # n shared, y and j split
        assert trie.terminal_count() == 2

    def test_duplicates_share_terminal_with_multiplicity(self):
        trie = build_trie(make((Q,), (Q,)), VOCAB)
        assert trie.terminal_count() == 1
        assert trie.total_tokens == 2
        assert trie.root.children[Q].terminal_ids == (0, 1)

    def test_out_of_vocabulary_names_surface(self):
        with pytest.raises(ConstraintError, match="n y"):
            build_trie([Constraint("n y", (N, 99))], VOCAB)

    def test_reserved_end_token_rejected(self):
        with pytest.raises(ConstraintError, match="reserved"):
            build_trie([Constraint("bad", (VOCAB.eos_id,))], VOCAB)


class TestCompileConstraints:
    def test_surfaces_tokenized_into_ids(self):
        compiled = compile_constraints(["n y", "q"], VOCAB)
        assert [c.tokens for c in compiled] == [(N, Y), (Q,)]

    def test_oov_word_names_surface(self):
        with pytest.raises(ConstraintError, match="'n z'"):
            compile_constraints(["n z"], VOCAB)

    def test_empty_surface_rejected(self):
        with pytest.raises(ConstraintError, match="normalizes to no tokens"):
            compile_constraints(["..."], VOCAB)


class TestAdvance:
    def test_walk_one_token(self):
        trie = build_trie(make((N, Y)), VOCAB)
        state = advance(initial_state(trie), N, trie)
        assert state.satisfied_token_count == 1
        assert state.node.depth == 1

    def test_terminal_satisfies_and_resets(self):
        trie = build_trie(make((N, Y)), VOCAB)
        state = replay([N, Y], trie)
        assert state.satisfied == {0}
        assert state.satisfied_token_count == 2
        assert state.node is trie.root

    def test_abandon_then_retry_satisfies_other_constraint(self):
        trie = build_trie(make((N, Y), (Q,)), VOCAB)
        state = replay([N, Q], trie)
        assert state.satisfied == {1}
        assert state.satisfied_token_count == 1
        assert state.node is trie.root

    def test_mismatch_can_restart_same_phrase(self):
        trie = build_trie(make((N, Y)), VOCAB)
        state = replay([N, N, Y], trie)
        assert state.satisfied == {0}

    def test_satisfied_constraints_never_unsatisfied(self):
        trie = build_trie(make((Q,), (N, Y)), VOCAB)
        state = replay([Q, N, J, Q, Y], trie)
        assert 0 in state.satisfied

    def test_dead_branches_not_walked(self):
        trie = build_trie(make((N, Y)), VOCAB)
        state = replay([N, Y, N], trie)
        # constraint done: a fresh n must not re-open the phrase
        assert state.node is trie.root
        assert state.satisfied_token_count == 2

    def test_duplicate_sequences_satisfied_one_per_match(self):
        trie = build_trie(make((Q,), (Q,)), VOCAB)
        state = replay([Q], trie)
        assert state.satisfied == {0}
        state = replay([Q, Q], trie)
        assert state.satisfied == {0, 1}
        assert state.satisfied_token_count == 2


class TestUnmetNextTokens:
    def test_root_children(self):
        trie = build_trie(make((N, Y), (Q,)), VOCAB)
        assert unmet_next_tokens(initial_state(trie), trie) == {N, Q}

    def test_mid_phrase_union(self):
        trie = build_trie(make((N, Y), (Q,)), VOCAB)
        state = advance(initial_state(trie), N, trie)
        assert unmet_next_tokens(state, trie) == {Y, N, Q}

    def test_all_satisfied_empty(self):
        trie = build_trie(make((N, Y), (Q,)), VOCAB)
        state = replay([N, Y, Q], trie)
        assert is_complete(state, trie)
        assert unmet_next_tokens(state, trie) == set()


token_seqs = st.lists(st.integers(min_value=0, max_value=3), max_size=24)


class TestTrackerProperties:
    @given(token_seqs)
    def test_replay_deterministic(self, seq):
        trie = build_trie(make((N, Y), (Q,), (J, N)), VOCAB)
        first = replay(seq, trie)
        second = replay(seq, trie)
        assert first.satisfied == second.satisfied
        assert first.satisfied_token_count == second.satisfied_token_count

    @given(token_seqs)
    def test_count_invariant_at_every_step(self, seq):
        constraints = make((N, Y), (Q,), (J, N))
        trie = build_trie(constraints, VOCAB)
        state = initial_state(trie)
        for token in seq:
            before = state.satisfied_token_count
            depth = state.node.depth
            state = advance(state, token, trie)
            delta = state.satisfied_token_count - before
            # +1 on extension, 0 on no-op, or an abandon drop of exactly the
            # abandoned depth (possibly +1 again from the root retry)
            assert delta in {1, 0, -depth, -depth + 1}
            expected = sum(len(constraints[i].tokens) for i in state.satisfied)
            assert state.satisfied_token_count == expected + state.node.depth
            assert 0 <= state.satisfied_token_count <= trie.total_tokens

    @settings(max_examples=200)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_matches_substring_oracle_for_disjoint_sets(self, seed):
        rng = np.random.default_rng(seed)
        phrases = disjoint_constraints(rng, content_vocab=4, max_constraints=2)
        constraints = make(*phrases)
        trie = build_trie(constraints, VOCAB)
        seq = [int(t) for t in rng.integers(0, 4, size=int(rng.integers(0, 16)))]
        state = replay(seq, trie)
        for index, constraint in enumerate(constraints):
            if contains_contiguous(seq, constraint.tokens):
                assert index in state.satisfied
            else:
                assert index not in state.satisfied
