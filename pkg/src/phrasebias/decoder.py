"""Label-synchronous beam search with streaming phrase promotion.

The decoder is model-agnostic: anything exposing per-step log-posteriors
over a fixed token inventory can be searched.  At every decoding step the
intermediate ASR text is refreshed, newly matched dictionary entries are
promoted in the biasing trie (promotions persist for the rest of the
utterance), and each hypothesis extension is scored as

    model log-probability + per-step bias delta.

Hypotheses that emit the end-of-sequence token are set aside and do not
consume beam slots.  Ties are broken deterministically: higher score,
then shorter token sequence, then lexicographically smaller tokens.

:func:`exhaustive_oracle` scores every eos-terminated sequence by full
replay and applies the same tie-break; with a saturated beam and a stream
whose matches are all visible at step 0, :func:`beam_search` returns the
identical hypothesis, which the property tests rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .biasing import (
    EMPTY_STATE,
    BiasingConfig,
    BiasState,
    BiasTrie,
    Tier,
    build_trie,
    promote,
    step_bonus,
    step_deltas,
)
from .errors import DataError
from .phrases import PhraseDictionary, match_phrases
from .tokenizer import Vocabulary

_NORMALIZATION_TOLERANCE = 1e-6


class ScoringModel:
    """Step-wise log-posterior source: the abstract translation model.

    Implementations must be deterministic and safe for concurrent
    read-only use.  Every returned vector must be log-normalized
    (|log sum exp| below 1e-6).
    """

    vocab_size: int
    eos_token: int

    def next_logprobs(self, prefix: tuple[int, ...]) -> np.ndarray:
        raise NotImplementedError


class IntermediateStream:
    """Streaming ASR text of the utterance in the source language.

    ``snapshot(s)`` is the text available at decoding step ``s``;
    snapshots must be monotone (each a prefix of every later one).
    """

    def snapshot(self, step: int) -> str:
        raise NotImplementedError


class ConstantStream(IntermediateStream):
    """The whole intermediate text is available from step 0."""

    def __init__(self, text: str):
        self.text = text

    def snapshot(self, step: int) -> str:
        return self.text


class StagedStream(IntermediateStream):
    """Explicit snapshot list; steps beyond the last snapshot see the final text."""

    def __init__(self, snapshots: list[str]):
        for earlier, later in zip(snapshots, snapshots[1:]):
            if not later.startswith(earlier):
                raise DataError(
                    f"snapshots are not monotone: {earlier!r} is not a prefix of {later!r}"
                )
        self.snapshots = list(snapshots)

    def snapshot(self, step: int) -> str:
        if not self.snapshots:
            return ""
        return self.snapshots[min(step, len(self.snapshots) - 1)]


class TableModel(ScoringModel):
    """N-gram lookup model: context (last ``order`` tokens) to log-prob row.

    Contexts shorter than ``order`` (near the sequence start) are looked
    up as-is; missing contexts fall back to the uniform distribution.
    The desk-scale stand-in for a trained model in tests and simulations.
    """

    def __init__(
        self,
        order: int,
        table: dict[tuple[int, ...], np.ndarray],
        vocab_size: int,
        eos_token: int,
    ):
        if order < 0:
            raise DataError(f"model order must be >= 0, got {order}")
        if not 0 <= eos_token < vocab_size:
            raise DataError(f"eos token {eos_token} outside vocab of {vocab_size}")
        self.order = order
        self.vocab_size = vocab_size
        self.eos_token = eos_token
        self.table = {}
        for context, row in table.items():
            arr = np.asarray(row, dtype=np.float64)
            if arr.shape != (vocab_size,):
                raise DataError(
                    f"model row for context {context} has length {arr.shape}, "
                    f"expected {vocab_size}"
                )
            self.table[tuple(context)] = arr
        self._uniform = np.full(vocab_size, -math.log(vocab_size), dtype=np.float64)

    def next_logprobs(self, prefix: tuple[int, ...]) -> np.ndarray:
        key = tuple(prefix[-self.order :]) if self.order else ()
        row = self.table.get(key)
        if row is None and len(key) == self.order and self.order:
            row = self.table.get(tuple(prefix))  # short-context entries near start
        return self._uniform if row is None else row


@dataclass
class Hypothesis:
    """Search state: emitted tokens with separated score components."""

    tokens: tuple[int, ...]
    model_score: float
    bias_score: float
    bias_state: BiasState = EMPTY_STATE
    finished: bool = False

    @property
    def score(self) -> float:
        return self.model_score + self.bias_score

    def sort_key(self) -> tuple:
        return (-self.score, len(self.tokens), self.tokens)


def _validated_logprobs(model: ScoringModel, prefix: tuple[int, ...]) -> np.ndarray:
    row = model.next_logprobs(prefix)
    m = np.max(row)
    if not np.isfinite(m):
        raise DataError("model returned a fully impossible log-prob vector")
    lse = m + math.log(np.sum(np.exp(row - m)))
    if abs(lse) > _NORMALIZATION_TOLERANCE:
        raise DataError(f"model returned non-normalized log-probs (logsumexp={lse:g})")
    return row


def _bias_step_bound(trie: BiasTrie | None, config: BiasingConfig | None) -> float:
    """Sound upper bound on the bias delta of any single step."""
    if config is None or trie is None or config.inert or len(trie) == 0:
        return 0.0
    rate_max = config.list_bonus + config.selected_bonus
    depth = trie.max_depth()
    return 2.0 * rate_max * depth * (depth + 1)


class _PromotionTracker:
    """Re-runs source matching whenever the intermediate text grows."""

    def __init__(
        self,
        dictionary: PhraseDictionary | None,
        stream: IntermediateStream,
        trie: BiasTrie | None,
    ):
        self.dictionary = dictionary
        self.stream = stream
        self.trie = trie
        self._last_text: str | None = None

    def refresh(self, step: int) -> None:
        if self.trie is None or self.dictionary is None or not len(self.dictionary):
            return
        text = self.stream.snapshot(step)
        if text == self._last_text:
            return
        self._last_text = text
        promote(self.trie, match_phrases(self.dictionary, text))


def _prepare_trie(
    dictionary: PhraseDictionary | None,
    config: BiasingConfig | None,
    vocab: Vocabulary | None,
    trie: BiasTrie | None,
) -> BiasTrie | None:
    if config is None:
        return None
    if trie is not None:
        return trie.clone()
    if dictionary is None or not len(dictionary):
        return BiasTrie(vocab=vocab)
    if vocab is None:
        raise DataError("a vocabulary is required to build the biasing trie")
    return build_trie([(t, Tier.BASE) for t in dictionary.targets()], vocab)


def beam_search(
    model: ScoringModel,
    stream: IntermediateStream,
    dictionary: PhraseDictionary | None,
    config: BiasingConfig | None,
    vocab: Vocabulary | None = None,
    beam: int = 8,
    max_len: int = 32,
    trie: BiasTrie | None = None,
) -> tuple[Hypothesis, list[Hypothesis]]:
    """Biased beam search over the model's token space.

    Parameters
    ----------
    model, stream : the utterance under decode.
    dictionary : phrase pairs used for both tiers of biasing (may be None).
    config : bonus rates; ``None`` disables the biasing machinery entirely
        (the reference behavior for the null-biasing equivalence checks).
    vocab : tokenizer for building the trie when ``trie`` is not supplied.
    trie : pre-built trie over the dictionary targets; it is cloned, so
        promotions stay local to this call.
    beam : number of live hypotheses kept per step (>= 1).
    max_len : maximum sequence length including the eos token.

    Returns
    -------
    (best, all_finished)
        ``best`` is the top finished hypothesis, or the top live one if
        nothing finished within ``max_len``.  ``all_finished`` is every
        finished hypothesis found, best first.
    """
    if beam < 1:
        raise DataError(f"beam must be >= 1, got {beam}")
    if max_len < 1:
        raise DataError(f"max_len must be >= 1, got {max_len}")
    vocab_size = model.vocab_size
    eos = model.eos_token
    local_trie = _prepare_trie(dictionary, config, vocab, trie)
    promotions = _PromotionTracker(dictionary, stream, local_trie)
    step_bound = _NORMALIZATION_TOLERANCE + _bias_step_bound(local_trie, config)

    live: list[Hypothesis] = [
        Hypothesis(tokens=(), model_score=0.0, bias_score=0.0, bias_state=EMPTY_STATE)
    ]
    finished: list[Hypothesis] = []

    for step in range(max_len):
        if not live:
            break
        if finished:
            best_done = min(finished, key=Hypothesis.sort_key)
            best_live = max(h.score for h in live)
            remaining = max_len - step
            if best_live + remaining * step_bound <= best_done.score:
                break
        promotions.refresh(step)

        scored: list[tuple[Hypothesis, np.ndarray]] = []
        rows = np.empty((len(live), vocab_size), dtype=np.float64)
        for i, hyp in enumerate(live):
            logprobs = _validated_logprobs(model, hyp.tokens)
            if local_trie is not None:
                deltas = step_deltas(local_trie, hyp.bias_state, config, vocab_size)
            else:
                deltas = np.zeros(vocab_size, dtype=np.float64)
            rows[i] = (hyp.model_score + logprobs) + (hyp.bias_score + deltas)
            scored.append((hyp, logprobs))

        # eos extensions finish immediately and are all kept aside
        for hyp, logprobs in scored:
            finished.append(_extend(hyp, eos, logprobs, local_trie, config, True))

        rows[:, eos] = -math.inf
        flat = rows.ravel()
        if flat.size > beam:
            threshold = np.partition(flat, flat.size - beam)[flat.size - beam]
        else:
            threshold = -math.inf
        # exact ties at the boundary are all pulled in, then resolved by
        # the full deterministic key (score, then lexicographic tokens)
        keep = np.nonzero(flat >= threshold)[0]
        pool = []
        for flat_index in keep:
            i, token = divmod(int(flat_index), vocab_size)
            hyp, logprobs = scored[i]
            pool.append((-rows[i, token], hyp.tokens + (token,), hyp, token, logprobs))
        pool.sort(key=lambda item: (item[0], item[1]))
        live = [
            _extend(hyp, token, logprobs, local_trie, config, False)
            for _, _, hyp, token, logprobs in pool[:beam]
        ]

    finished.sort(key=Hypothesis.sort_key)
    if finished:
        return finished[0], finished
    if not live:
        raise DataError("decode produced no hypotheses")
    live.sort(key=Hypothesis.sort_key)
    return live[0], []


def _extend(
    hyp: Hypothesis,
    token: int,
    logprobs: np.ndarray,
    trie: BiasTrie | None,
    config: BiasingConfig | None,
    finished: bool,
) -> Hypothesis:
    if trie is not None:
        delta, state = step_bonus(trie, hyp.bias_state, token, config)
    else:
        delta, state = 0.0, EMPTY_STATE
    return Hypothesis(
        tokens=hyp.tokens + (token,),
        model_score=hyp.model_score + float(logprobs[token]),
        bias_score=hyp.bias_score + delta,
        bias_state=state,
        finished=finished,
    )


def exhaustive_oracle(
    model: ScoringModel,
    stream: IntermediateStream,
    dictionary: PhraseDictionary | None,
    config: BiasingConfig | None,
    vocab: Vocabulary | None = None,
    max_len: int = 8,
    trie: BiasTrie | None = None,
) -> Hypothesis:
    """Score every eos-terminated sequence by full replay; return the argmax.

    The biasing replay uses the final intermediate text (all promotions
    applied before scoring), so it coincides with :func:`beam_search`
    exactly when every promotion lands before the first decoding step it
    affects — the tests arrange their streams accordingly.  Guarded to
    desk scale: ``vocab_size ** max_len`` must not exceed 10**7.
    """
    if model.vocab_size**max_len > 10**7:
        raise DataError(
            f"oracle guard exceeded: {model.vocab_size}**{max_len} > 1e7 sequences"
        )
    local_trie = _prepare_trie(dictionary, config, vocab, trie)
    if local_trie is not None and dictionary is not None and len(dictionary):
        from .biasing import promote

        promote(local_trie, match_phrases(dictionary, stream.snapshot(max_len)))

    eos = model.eos_token
    non_eos = [t for t in range(model.vocab_size) if t != eos]
    best: Hypothesis | None = None

    def consider(prefix: tuple[int, ...]) -> None:
        nonlocal best
        seq = prefix + (eos,)
        model_score = 0.0
        bias_score = 0.0
        state = EMPTY_STATE
        for i, token in enumerate(seq):
            row = _validated_logprobs(model, seq[:i])
            model_score += float(row[token])
            if local_trie is not None:
                delta, state = step_bonus(local_trie, state, token, config)
                bias_score += delta
        cand = Hypothesis(
            tokens=seq,
            model_score=model_score,
            bias_score=bias_score,
            bias_state=state,
            finished=True,
        )
        if best is None or cand.sort_key() < best.sort_key():
            best = cand

    def expand(prefix: tuple[int, ...]) -> None:
        consider(prefix)
        if len(prefix) + 1 >= max_len:
            return
        for token in non_eos:
            expand(prefix + (token,))

    expand(())
    assert best is not None
    return best
