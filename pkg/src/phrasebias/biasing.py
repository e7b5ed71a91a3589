"""Token-level phrase trie with per-step bonus tracking and retraction.

Each target phrase is tokenized and inserted into a trie.  While decoding,
every hypothesis carries a :class:`BiasState`: the set of suffixes of its
token sequence that are partial (proper-prefix) matches of some phrase,
each with the bonus already paid for it.  Advancing a partial match earns
the per-token rate of the reached node; a partial match that cannot advance
is dropped and its accumulated bonus retracted; a match reaching the end of
a phrase banks its bonus permanently (and may keep going toward longer
phrases sharing the path).

Rates are tiered: every phrase in the list earns the base rate, and
phrases promoted by source-side matching earn the base rate plus the
selected bonus.  A node's rate is the best tier among the phrases whose
token path passes through it.

Defined accounting (validated by the brute-force rescans in the tests):

* an entry's pending bonus is ``matched_prefix_length * rate(node)`` as of
  its latest advance;
* completing a phrase adds the entry's pending bonus to the permanent
  ``completed`` pool, which is never retracted;
* the per-step delta always equals ``next.total - state.total`` where
  ``total = completed + sum(pending)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .phrases import MatchedSet
from .tokenizer import Vocabulary

_ROOT = 0


class Tier(enum.Enum):
    """Bonus tier of a phrase: listed only, or selected by source matching."""

    BASE = "base"
    SELECTED = "selected"


@dataclass(frozen=True)
class BiasingConfig:
    """Per-token bonus rates.

    ``list_bonus`` applies to every phrase in the list; ``selected_bonus``
    is added on top for promoted phrases.  Both must be non-negative.
    """

    list_bonus: float = 0.0
    selected_bonus: float = 0.0

    def __post_init__(self):
        if self.list_bonus < 0 or self.selected_bonus < 0:
            raise DataError(
                f"bonus rates must be non-negative, got ({self.list_bonus}, "
                f"{self.selected_bonus})"
            )

    @property
    def inert(self) -> bool:
        return self.list_bonus == 0.0 and self.selected_bonus == 0.0


@dataclass(frozen=True)
class BiasState:
    """Per-hypothesis match state: active partial matches plus banked bonus.

    ``active`` entries are ``(node, matched_length, pending_bonus)``; the
    state is immutable, so forking a beam hypothesis shares it safely.
    """

    active: tuple[tuple[int, int, float], ...] = ()
    completed: float = 0.0

    @property
    def total(self) -> float:
        return self.completed + sum(p for _, _, p in self.active)


EMPTY_STATE = BiasState()


class BiasTrie:
    """Trie over the token sequences of target phrases.

    Nodes are parallel arrays; node 0 is the root.  ``selected[n]`` is set
    when any promoted phrase's path passes through ``n``.  Structure is
    immutable during decoding: :meth:`clone` shares node structure and
    copies only the tier state, so per-utterance promotion is cheap.
    """

    def __init__(self, vocab: Vocabulary | None = None, vocab_size: int | None = None):
        self.vocab = vocab
        if vocab_size is None and vocab is not None:
            vocab_size = vocab.size
        self.vocab_size = vocab_size
        self.children: list[dict[int, int]] = [{}]
        self.depth: list[int] = [0]
        self.terminal: list[int] = [-1]  # phrase index or -1
        self.selected = bytearray(1)
        self.phrase_tokens: list[tuple[int, ...]] = []
        self.phrase_tier: list[Tier] = []
        self.phrase_index: dict[str, int] = {}  # target string -> phrase index
        self._shared_structure = False

    def __len__(self) -> int:
        return len(self.phrase_tokens)

    def _unshare(self) -> None:
        if self._shared_structure:
            self.children = [dict(d) for d in self.children]
            self.depth = list(self.depth)
            self.terminal = list(self.terminal)
            self._shared_structure = False

    def _insert_path(self, tokens: tuple[int, ...], selected: bool) -> int:
        """Insert a token path, returning its terminal node id."""
        self._unshare()
        node = _ROOT
        if selected:
            self.selected[_ROOT] = 1
        for token in tokens:
            nxt = self.children[node].get(token)
            if nxt is None:
                nxt = len(self.children)
                self.children.append({})
                self.depth.append(self.depth[node] + 1)
                self.terminal.append(-1)
                self.selected.append(0)
                self.children[node][token] = nxt
            node = nxt
            if selected:
                self.selected[node] = 1
        return node

    def _mark_selected(self, tokens: tuple[int, ...]) -> None:
        node = _ROOT
        self.selected[node] = 1
        for token in tokens:
            node = self.children[node][token]
            self.selected[node] = 1

    def add_phrase(self, target: str, tier: Tier, tokens: tuple[int, ...]) -> None:
        if not tokens:
            raise DataError(f"phrase tokenizes to empty sequence: {target!r}")
        if self.vocab_size is not None:
            bad = [t for t in tokens if not 0 <= t < self.vocab_size]
            if bad:
                raise DataError(f"phrase token out of range: {bad[0]}")
        existing = self.phrase_index.get(target)
        if existing is not None:
            if tier is Tier.SELECTED and self.phrase_tier[existing] is Tier.BASE:
                self.phrase_tier[existing] = Tier.SELECTED
                self._mark_selected(self.phrase_tokens[existing])
            return
        node = self._insert_path(tokens, selected=tier is Tier.SELECTED)
        index = len(self.phrase_tokens)
        self.phrase_tokens.append(tokens)
        self.phrase_tier.append(tier)
        self.terminal[node] = index
        self.phrase_index[target] = index

    def tier_of(self, target: str) -> Tier | None:
        index = self.phrase_index.get(target)
        return None if index is None else self.phrase_tier[index]

    def clone(self) -> "BiasTrie":
        """Structure-sharing copy; tier state (tiers, selected flags) is private.

        Inserting a new phrase into a clone lazily copies the node arrays,
        so clones never corrupt each other.
        """
        other = BiasTrie.__new__(BiasTrie)
        other.vocab = self.vocab
        other.vocab_size = self.vocab_size
        other.children = self.children
        other.depth = self.depth
        other.terminal = self.terminal
        other.selected = bytearray(self.selected)
        other.phrase_tokens = list(self.phrase_tokens)
        other.phrase_tier = list(self.phrase_tier)
        other.phrase_index = dict(self.phrase_index)
        other._shared_structure = True
        self._shared_structure = True
        return other

    def rate(self, node: int, config: BiasingConfig) -> float:
        if self.selected[node]:
            return config.list_bonus + config.selected_bonus
        return config.list_bonus

    def max_depth(self) -> int:
        return max(self.depth) if self.depth else 0


def build_trie(
    phrases: list[tuple[str, Tier]],
    vocab: Vocabulary,
) -> BiasTrie:
    """Tokenize target phrases and build the biasing trie.

    Duplicate targets are merged; a duplicate listed as SELECTED anywhere
    makes the merged phrase SELECTED.
    """
    trie = BiasTrie(vocab=vocab)
    for target, tier in phrases:
        trie.add_phrase(target, tier, tuple(vocab.encode(target)))
    return trie


def trie_from_token_phrases(
    phrases: list[tuple[tuple[int, ...], Tier]],
    vocab_size: int | None = None,
) -> BiasTrie:
    """Build a trie directly from token sequences (no tokenizer involved).

    Used by the decoder property tests, where the model's token space is
    tiny and phrases are raw id sequences.  Targets are keyed by the
    repr of their token tuple.
    """
    trie = BiasTrie(vocab=None, vocab_size=vocab_size)
    for tokens, tier in phrases:
        trie.add_phrase(f"tokens:{','.join(map(str, tokens))}", tier, tuple(tokens))
    return trie


def promote(trie: BiasTrie, selected: MatchedSet) -> BiasTrie:
    """Raise every matched target to the SELECTED tier; idempotent.

    Targets absent from the trie are inserted as SELECTED, which covers
    running with only the matched phrases loaded (base rate zero).
    """
    for _, pair in selected:
        index = trie.phrase_index.get(pair.target)
        if index is not None:
            if trie.phrase_tier[index] is Tier.BASE:
                trie.phrase_tier[index] = Tier.SELECTED
                trie._mark_selected(trie.phrase_tokens[index])
        else:
            if trie.vocab is None:
                raise DataError(
                    f"cannot insert unseen target {pair.target!r}: trie has no vocabulary"
                )
            trie.add_phrase(
                pair.target, Tier.SELECTED, tuple(trie.vocab.encode(pair.target))
            )
    return trie


def _node_gain(trie: BiasTrie, node: int, new_length: int, config: BiasingConfig) -> float:
    """Total-score gain of a match arriving at ``node`` with the given length.

    The arriving pending bonus is ``new_length * rate``; reaching a phrase
    end banks that amount permanently, and a node with no continuations
    drops the entry afterwards (its pending leaves the state, already
    banked).  Net: non-terminal and leaf nodes gain the pending once,
    a phrase end with continuations gains it twice.
    """
    pending = new_length * trie.rate(node, config)
    if trie.terminal[node] >= 0 and trie.children[node]:
        return 2.0 * pending
    return pending


def step_bonus(
    trie: BiasTrie,
    state: BiasState,
    token: int,
    config: BiasingConfig,
) -> tuple[float, BiasState]:
    """Advance the match state by one output token.

    Returns the score delta and the successor state.  Every active match
    either advances on ``token`` (earning the reached node's rate, banking
    at phrase ends) or dies (retracting its pending bonus, i.e. matched
    length times its paid rate).  The token is also offered to the root so
    a new match can start at this position.
    """
    if trie.vocab_size is not None and not 0 <= token < trie.vocab_size:
        raise DataError(f"token id out of vocabulary range: {token}")
    delta = 0.0
    completed = state.completed
    new_active: list[tuple[int, int, float]] = []
    for node, length, pending in state.active:
        child = trie.children[node].get(token)
        if child is None:
            delta -= pending
            continue
        new_length = length + 1
        new_pending = new_length * trie.rate(child, config)
        delta += new_pending - pending
        if trie.terminal[child] >= 0:
            completed += new_pending
            delta += new_pending
        if trie.children[child]:
            new_active.append((child, new_length, new_pending))
        else:
            delta -= new_pending
    child = trie.children[_ROOT].get(token)
    if child is not None:
        new_pending = trie.rate(child, config)
        delta += new_pending
        if trie.terminal[child] >= 0:
            completed += new_pending
            delta += new_pending
        if trie.children[child]:
            new_active.append((child, 1, new_pending))
        else:
            delta -= new_pending
    return delta, BiasState(active=tuple(new_active), completed=completed)


def step_deltas(
    trie: BiasTrie,
    state: BiasState,
    config: BiasingConfig,
    vocab_size: int,
) -> np.ndarray:
    """Score deltas for every candidate token at once.

    ``out[t]`` equals ``step_bonus(trie, state, t, config)[0]``; the
    decoder uses this to score a full expansion row without materializing
    successor states.
    """
    dead = 0.0
    for _, _, pending in state.active:
        dead -= pending
    out = np.full(vocab_size, dead, dtype=np.float64)
    for node, length, pending in state.active:
        for token, child in trie.children[node].items():
            if token < vocab_size:
                # undo this entry's death (already in ``dead``) and apply
                # its advance: net effect is the arrival gain alone
                out[token] += _node_gain(trie, child, length + 1, config)
    for token, child in trie.children[_ROOT].items():
        if token < vocab_size:
            out[token] += _node_gain(trie, child, 1, config)
    return out


def replay(
    trie: BiasTrie,
    tokens: list[int],
    config: BiasingConfig,
) -> tuple[float, BiasState]:
    """Run a full token sequence through :func:`step_bonus` from scratch."""
    state = EMPTY_STATE
    total = 0.0
    for token in tokens:
        delta, state = step_bonus(trie, state, token, config)
        total += delta
    return total, state
