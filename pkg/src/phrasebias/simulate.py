"""Seeded synthetic corpus and model generator.

Builds a desk-scale world in which phrase biasing matters: every
utterance is a walk along a global word chain with one phrase slot whose
true continuation (the annotated target phrase) has low probability under
the utterance's model, while a generic wrong continuation is likely.
Phrase difficulty is tiered so the expected outcome ordering is

    unbiased  <  flat list biasing  <  selection biasing,

and the distractor pool deliberately contains plausible word pairs, so a
large flat per-token bonus lets distractor matches outbid the true path
and wreck the output, while the same bonus restricted to selected phrases
does not.

Design notes:

* Word surfaces carry a trailing space, so greedy tokenization maps one
  word to one token and phrase token paths align with decoder output.
* Targets are stored with the trailing boundary space for the same
  reason; normalization strips it everywhere it matters.
* Each utterance gets its own bigram table (emitted as per-utterance
  JSONL): one shared table could not encode different utterances.
* All randomness flows from the single ``seed`` argument.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np

from .corpus import Utterance
from .decoder import TableModel
from .errors import DataError
from .phrases import PhraseDictionary, PhrasePair
from .tokenizer import Vocabulary, make_vocabulary

_SYLLABLES = [
    c + v
    for c in "bdfgklmnprstvz"
    for v in ("a", "e", "i", "o", "u")
]

N_CONTENT = 120
N_NAMES = 250
CONFUSERS_PER_WORD = 6

# (phrase probability, wrong-continuation probability) at the phrase slot
TIER_PROBS = {
    "given": (0.85, 0.05),  # phrase wins even unbiased
    "easy": (0.30, 0.60),  # flips under a 1.0 per-token bonus
    "hard": (0.012, 0.75),  # flips only under a 4.0 per-token bonus
    "never": (1e-7, 0.75),  # out of reach for any tested bonus
}
TIER_COUNTS = {"given": 11, "easy": 39, "hard": 44, "never": 17}

EOS_SURFACE = "¶"
EOS_EPSILON = 1e-4


def _make_words(rng: random.Random, count: int, taken: set[str]) -> list[str]:
    words: list[str] = []
    while len(words) < count:
        word = "".join(rng.choice(_SYLLABLES) for _ in range(rng.choice((2, 3))))
        if word not in taken:
            taken.add(word)
            words.append(word)
    return words


@dataclass
class SimUtterance:
    id: str
    pair_index: int
    tier: str
    tokens_true: tuple[int, ...]
    reference: str
    z: str
    pair: PhrasePair
    model: TableModel

    def to_corpus_utterance(self) -> Utterance:
        return Utterance(
            id=self.id,
            reference=self.reference,
            pairs=[self.pair],
            z=self.z,
        )


@dataclass
class Experiment:
    vocab: Vocabulary
    model_vocab_size: int
    eos_token: int
    utterances: list[SimUtterance]
    relevant: PhraseDictionary
    distractor_pool: PhraseDictionary
    pair_tiers: list[str] = field(default_factory=list)
    suggested_max_len: int = 16

    def corpus(self) -> list[Utterance]:
        return [utt.to_corpus_utterance() for utt in self.utterances]

    def models(self) -> dict[str, TableModel]:
        return {utt.id: utt.model for utt in self.utterances}


NAME_FLOOR = 1e-6


class _RowBuilder:
    """Probability rows with explicit mass, a name-token floor, and the rest spread.

    Phrase (name) tokens are pinned to a tiny floor wherever a row does
    not assign them explicitly: re-opening a phrase from an off-path
    context must always cost more model score than its bias bank pays,
    otherwise a strongly promoted phrase could be bought anywhere.
    """

    def __init__(self, vocab_size: int, eos: int, name_range: range):
        self.vocab_size = vocab_size
        self.eos = eos
        self.name_range = name_range

    def row(self, assigned: dict[int, float]) -> np.ndarray:
        full = dict(assigned)
        full.setdefault(self.eos, EOS_EPSILON)
        for token in self.name_range:
            full.setdefault(token, NAME_FLOOR)
        mass = sum(full.values())
        if mass >= 1.0:
            raise DataError(f"row over-assigned: {mass}")
        rest = (1.0 - mass) / (self.vocab_size - len(full))
        probs = np.full(self.vocab_size, rest, dtype=np.float64)
        for token, p in full.items():
            probs[token] = p
        probs /= probs.sum()
        return np.log(probs)


def _tier_allocation(n_pairs: int) -> list[str]:
    """Scale the canonical tier mix down to a smaller pair inventory."""
    full = sum(TIER_COUNTS.values())
    if n_pairs >= full:
        return [t for t, n in TIER_COUNTS.items() for _ in range(n)]
    quotas = {t: n_pairs * n / full for t, n in TIER_COUNTS.items()}
    counts = {t: int(q) for t, q in quotas.items()}
    leftovers = sorted(quotas, key=lambda t: quotas[t] - counts[t], reverse=True)
    for t in leftovers:
        if sum(counts.values()) == n_pairs:
            break
        counts[t] += 1
    return [t for t, n in counts.items() for _ in range(n)]


def build_experiment(
    seed: int,
    n_utterances: int = 200,
    list_total: int = 3000,
) -> Experiment:
    """Generate the full synthetic world for one seed."""
    if n_utterances < 1:
        raise DataError(f"need at least 1 utterance, got {n_utterances}")
    n_pairs = min(sum(TIER_COUNTS.values()), n_utterances)  # 111 at full scale
    rng = random.Random(seed)

    taken: set[str] = set()
    content = _make_words(rng, N_CONTENT, taken)
    names = [w.capitalize() for w in _make_words(rng, N_NAMES, taken)]
    ends = _make_words(rng, n_utterances, taken)

    word_surfaces = (
        [w + " " for w in content]
        + [w + " " for w in names]
        + [w + " " for w in ends]
        + [EOS_SURFACE]
    )
    vocab = make_vocabulary(word_surfaces)
    model_vocab_size = len(word_surfaces)
    eos = model_vocab_size - 1
    content_ids = list(range(N_CONTENT))
    name_base = N_CONTENT
    end_base = N_CONTENT + N_NAMES

    # single-cycle successor chain over the content words
    cycle = content_ids[:]
    rng.shuffle(cycle)
    succ = {cycle[i]: cycle[(i + 1) % len(cycle)] for i in range(len(cycle))}
    pred = {b: a for a, b in succ.items()}

    # confusers and distractor pairs must stay clear of chain words within
    # three hops in either direction: otherwise a beam can skip ahead (or
    # loop back) to a phrase slot, or complete a distractor, without ever
    # leaving the probable region, making strongly promoted phrases
    # purchasable off their true position
    def near_chain(w: int) -> set[int]:
        near = {w}
        fwd = bwd = w
        for _ in range(3):
            fwd = succ[fwd]
            bwd = pred[bwd]
            near.add(fwd)
            near.add(bwd)
        return near

    confusers = {
        w: rng.sample(
            [c for c in content_ids if c not in near_chain(w)], CONFUSERS_PER_WORD
        )
        for w in content_ids
    }

    # annotated pairs: trigger word, name-word target, tiered difficulty
    tiers = _tier_allocation(n_pairs)
    rng.shuffle(tiers)
    pair_phrase_tokens: list[tuple[int, ...]] = []
    relevant_pairs: list[PhrasePair] = []
    next_name = 0
    for i in range(n_pairs):
        length = 3 if i % 5 == 0 else 2
        tokens = tuple(name_base + next_name + j for j in range(length))
        next_name += length
        target = "".join(vocab.surfaces[t].decode("utf-8") for t in tokens)
        relevant_pairs.append(PhrasePair(source=f"s{i:04d}", target=target))
        pair_phrase_tokens.append(tokens)
    relevant = PhraseDictionary(relevant_pairs)

    # distractor pool: plausible content-word pairs (three per word aimed at
    # its confusers, the rest sampled from the full pair grid)
    surface = lambda t: vocab.surfaces[t].decode("utf-8")
    distractor_targets: list[str] = []
    seen_targets: set[str] = set()
    for w in content_ids:
        for c in confusers[w][:3]:
            target = surface(w) + surface(c)
            if target not in seen_targets:
                seen_targets.add(target)
                distractor_targets.append(target)
    grid = [
        (a, b) for a in content_ids for b in content_ids if b not in near_chain(a)
    ]
    rng.shuffle(grid)
    needed = (list_total - n_pairs) - len(distractor_targets)
    for a, b in grid:
        if needed <= 0:
            break
        target = surface(a) + surface(b)
        if target not in seen_targets:
            seen_targets.add(target)
            distractor_targets.append(target)
            needed -= 1
    distractor_pool = PhraseDictionary(
        [
            PhrasePair(source=f"d{j:04d}", target=target)
            for j, target in enumerate(distractor_targets)
        ]
    )

    rows = _RowBuilder(model_vocab_size, eos, range(name_base, name_base + N_NAMES))
    utterances: list[SimUtterance] = []
    for u in range(n_utterances):
        pair_index = u if u < n_pairs else rng.randrange(n_pairs)
        tier = tiers[pair_index]
        p_phrase, p_wrong = TIER_PROBS[tier]
        trigger = content_ids[pair_index % N_CONTENT]
        phrase_tokens = pair_phrase_tokens[pair_index]
        k1 = rng.choice((2, 3))
        k2 = rng.choice((2, 3))
        end_word = end_base + u

        prefix = []
        w = trigger
        for _ in range(k1):
            w = pred[w]
            prefix.append(w)
        prefix.reverse()
        suffix = []
        w = trigger
        for _ in range(k2):
            w = succ[w]
            suffix.append(w)
        tokens_true = (
            tuple(prefix) + (trigger,) + phrase_tokens + tuple(suffix) + (end_word, eos)
        )

        # order-2 contexts: off-path detours immediately fall into the
        # uniform fallback, so buying a phrase re-completion with bias
        # always costs more model score than it banks (no loop exploits)
        def content_row(w: int, target: int) -> np.ndarray:
            return rows.row({target: 0.78, **{c: 0.03 for c in confusers[w]}})

        table: dict[tuple[int, ...], np.ndarray] = {}
        table[()] = rows.row({prefix[0]: 0.95})
        walk = [*prefix, trigger]
        table[(walk[0],)] = content_row(walk[0], walk[1])
        for a, b, c in zip(walk, walk[1:], walk[2:]):
            table[(a, b)] = content_row(b, c)
        table[(walk[-2], trigger)] = rows.row(
            {
                phrase_tokens[0]: p_phrase,
                succ[trigger]: p_wrong,
                confusers[trigger][0]: 0.02,
                confusers[trigger][1]: 0.02,
            }
        )
        phrase_walk = [trigger, *phrase_tokens]
        for a, b, c in zip(phrase_walk, phrase_walk[1:], phrase_walk[2:]):
            table[(a, b)] = rows.row({c: 0.92})
        rejoin = suffix[0]
        table[(phrase_walk[-2], phrase_walk[-1])] = rows.row({rejoin: 0.90})
        # the suffix chain is enterable from both the phrase and the wrong path
        for entry in (phrase_walk[-1], trigger):
            if len(suffix) > 1:
                table[(entry, rejoin)] = content_row(rejoin, suffix[1])
        for a, b, c in zip(suffix, suffix[1:], suffix[2:]):
            table[(a, b)] = content_row(b, c)
        # the end word is the argmax here: riding past the end of the
        # utterance must cost real model score, or a promoted phrase could
        # be re-bought cheaply after a first completion
        tail = (suffix[-2], suffix[-1]) if len(suffix) > 1 else (trigger, suffix[-1])
        table[tail] = rows.row(
            {
                end_word: 0.70,
                succ[suffix[-1]]: 0.10,
                **{c: 0.025 for c in confusers[suffix[-1]]},
            }
        )
        table[(suffix[-1], end_word)] = rows.row({eos: 0.97})
        model = TableModel(
            order=2, table=table, vocab_size=model_vocab_size, eos_token=eos
        )

        reference = vocab.decode(list(tokens_true[:-1])).strip()
        junk = [f"j{rng.randrange(10000):04d}" for _ in range(rng.randrange(4, 8))]
        junk.insert(rng.randrange(len(junk) + 1), relevant_pairs[pair_index].source)
        z = " ".join(junk)
        utterances.append(
            SimUtterance(
                id=f"utt{u:04d}",
                pair_index=pair_index,
                tier=tier,
                tokens_true=tokens_true,
                reference=reference,
                z=z,
                pair=relevant_pairs[pair_index],
                model=model,
            )
        )

    return Experiment(
        vocab=vocab,
        model_vocab_size=model_vocab_size,
        eos_token=eos,
        utterances=utterances,
        relevant=relevant,
        distractor_pool=distractor_pool,
        pair_tiers=tiers,
    )
