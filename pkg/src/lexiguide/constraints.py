"""Multi-token lexical constraints: trie construction and satisfaction tracking.

A tracker walks the constraint trie as tokens are emitted. The number of
satisfied constraint tokens (completed phrases, plus the depth of any
phrase currently in progress) is the quantity that indexes the decoder's
beam banks.

Matching uses a single-step abandon-then-retry rule on mismatch: no
failure links, so a self-overlapping phrase can lose progress it could in
principle have kept. Constraint sets here are small (a handful of short
phrases), where the rule is exact for non-overlapping constraints.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Sequence

from .corpus import NormalizationPolicy, DEFAULT_POLICY, tokenize

if TYPE_CHECKING:
    from .scorers import Vocabulary


class ConstraintError(ValueError):
    """Raised for constraints that cannot be represented in the vocabulary."""


@dataclass(frozen=True)
class Constraint:
    """One lexical constraint: a surface form and its token ids."""

    surface: str
    tokens: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.tokens:
            raise ConstraintError(f"constraint {self.surface!r} has no tokens")


def compile_constraints(
    surfaces: Iterable[str],
    vocab: "Vocabulary",
    policy: NormalizationPolicy = DEFAULT_POLICY,
) -> list[Constraint]:
    """Tokenize surface strings into the active vocabulary.

    Raises :class:`ConstraintError` naming the surface when a token is
    out-of-vocabulary or the surface normalizes to nothing.
    """
    compiled = []
    for surface in surfaces:
        words = tokenize(surface, policy)
        if not words:
            raise ConstraintError(f"constraint {surface!r} normalizes to no tokens")
        ids = []
        for word in words:
            try:
                ids.append(vocab.id_of(word))
            except KeyError:
                raise ConstraintError(
                    f"constraint {surface!r}: token {word!r} not in vocabulary"
                ) from None
        compiled.append(Constraint(surface=surface, tokens=tuple(ids)))
    return compiled


class TrieNode:
    __slots__ = ("children", "depth", "terminal_ids", "subtree_ids")

    def __init__(self, depth: int) -> None:
        self.children: dict[int, TrieNode] = {}
        self.depth = depth
        self.terminal_ids: tuple[int, ...] = ()
        self.subtree_ids: frozenset[int] = frozenset()


@dataclass(frozen=True)
class ConstraintTrie:
    """Immutable prefix tree over constraint token sequences.

    Duplicate sequences share structure; each terminal records every
    constraint index ending there, so multiplicity survives deduplication.
    ``total_tokens`` counts tokens over all constraints, duplicates included.
    """

    root: TrieNode
    constraints: tuple[Constraint, ...]
    total_tokens: int

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    def node_count(self) -> int:
        count, stack = 0, [self.root]
        while stack:
            node = stack.pop()
            count += 1
            stack.extend(node.children.values())
        return count

    def terminal_count(self) -> int:
        count, stack = 0, [self.root]
        while stack:
            node = stack.pop()
            if node.terminal_ids:
                count += 1
            stack.extend(node.children.values())
        return count


def build_trie(constraints: Sequence[Constraint], vocab: "Vocabulary") -> ConstraintTrie:
    """Build the trie, validating every token id against the vocabulary."""
    root = TrieNode(0)
    for index, constraint in enumerate(constraints):
        for token in constraint.tokens:
            if not 0 <= token < len(vocab):
                raise ConstraintError(
                    f"constraint {constraint.surface!r}: token id {token} out of vocabulary"
                )
            if token == vocab.eos_id:
                raise ConstraintError(
                    f"constraint {constraint.surface!r} contains the reserved end token"
                )
        node = root
        for token in constraint.tokens:
            if token not in node.children:
                node.children[token] = TrieNode(node.depth + 1)
            node = node.children[token]
        node.terminal_ids = node.terminal_ids + (index,)

    def fill_subtrees(node: TrieNode) -> frozenset[int]:
        ids = set(node.terminal_ids)
        for child in node.children.values():
            ids |= fill_subtrees(child)
        node.subtree_ids = frozenset(ids)
        return node.subtree_ids

    fill_subtrees(root)
    total = sum(len(c.tokens) for c in constraints)
    return ConstraintTrie(root=root, constraints=tuple(constraints), total_tokens=total)


@dataclass(frozen=True)
class TrackerState:
    """Per-hypothesis satisfaction state: cheap to copy, never mutated.

    Invariant: ``satisfied_token_count`` equals the summed token lengths of
    satisfied constraints plus the depth of the active trie node.
    """

    satisfied: frozenset[int]
    node: TrieNode
    satisfied_token_count: int


def initial_state(trie: ConstraintTrie) -> TrackerState:
    return TrackerState(frozenset(), trie.root, 0)


def _live_child(node: TrieNode, token: int, satisfied: frozenset[int]) -> TrieNode | None:
    """Child reachable by ``token`` that can still complete an unmet constraint."""
    child = node.children.get(token)
    if child is not None and child.subtree_ids - satisfied:
        return child
    return None


def advance(state: TrackerState, token: int, trie: ConstraintTrie) -> TrackerState:
    """Consume one emitted token.

    Extensions of the active phrase add one satisfied token; reaching a
    terminal marks the lowest-index unmet constraint there as satisfied and
    resets to the root. A non-extending token abandons partial progress
    (the count drops by the abandoned depth) and is retried from the root,
    so one token can end one phrase and begin another.
    """
    satisfied, node, count = state.satisfied, state.node, state.satisfied_token_count
    child = _live_child(node, token, satisfied)
    if child is None and node.depth:
        count -= node.depth
        node = trie.root
        child = _live_child(node, token, satisfied)
    if child is None:
        if node is state.node and count == state.satisfied_token_count:
            return state
        return TrackerState(satisfied, node, count)
    count += 1
    unmet_here = [i for i in child.terminal_ids if i not in satisfied]
    if unmet_here:
        return TrackerState(satisfied | {min(unmet_here)}, trie.root, count)
    return TrackerState(satisfied, child, count)


def replay(tokens: Iterable[int], trie: ConstraintTrie) -> TrackerState:
    """Fold :func:`advance` over a token sequence from the empty state."""
    state = initial_state(trie)
    for token in tokens:
        state = advance(state, token, trie)
    return state


def unmet_next_tokens(state: TrackerState, trie: ConstraintTrie) -> set[int]:
    """Tokens that extend the active phrase or begin an unmet constraint.

    This is the per-hypothesis candidate set the constrained decoder
    injects. Branches leading only to already-satisfied constraints are
    excluded on both sides of the union.
    """
    out = {
        token
        for token, child in state.node.children.items()
        if child.subtree_ids - state.satisfied
    }
    out |= {
        token
        for token, child in trie.root.children.items()
        if child.subtree_ids - state.satisfied
    }
    return out


def is_complete(state: TrackerState, trie: ConstraintTrie) -> bool:
    return len(state.satisfied) == trie.num_constraints
