"""Phrase dictionaries, source-phrase matching, and phrase-list construction.

A phrase dictionary maps source-language phrases to their required
target-language translations.  Matching selects the entries whose source
occurs in the intermediate ASR text of an utterance; the selected targets
are then boosted more strongly during decoding (see :mod:`.biasing`).

Dictionary and distractor files are UTF-8 TSV, ``source<TAB>target`` per
line, ``#``-prefixed comment lines skipped.  Fields are kept verbatim
(significant inner/edge whitespace survives) but must be non-empty after
trimming.
"""

from __future__ import annotations

import random
import unicodedata
from dataclasses import dataclass

from .errors import DataError


def normalize(text: str) -> str:
    """Canonical form used by matching and recall: NFC, casefold, collapsed whitespace.

    Assumes the caller does not split combining character sequences across
    snapshot boundaries; under that condition normalization preserves the
    prefix structure that streaming promotion relies on.
    """
    text = unicodedata.normalize("NFC", text).casefold()
    return " ".join(text.split())


@dataclass(frozen=True)
class PhrasePair:
    """One dictionary entry: source-language phrase and its required translation."""

    source: str
    target: str

    def __post_init__(self):
        if not self.source.strip() or not self.target.strip():
            raise DataError(f"empty phrase pair field: {self!r}")


@dataclass
class PhraseDictionary:
    """Ordered, duplicate-free collection of phrase pairs."""

    pairs: list[PhrasePair]

    def __post_init__(self):
        seen = set()
        for pair in self.pairs:
            key = (pair.source, pair.target)
            if key in seen:
                raise DataError(f"duplicate phrase pair: {pair.source!r} -> {pair.target!r}")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def targets(self) -> list[str]:
        return [p.target for p in self.pairs]


@dataclass
class MatchedSet:
    """Dictionary entries whose source occurs in an intermediate text.

    ``matches`` holds (dictionary index, pair), ordered by first occurrence
    position in the normalized text, ties by dictionary index.  A source
    occurring several times still yields a single entry.
    """

    matches: list[tuple[int, PhrasePair]]

    def __len__(self) -> int:
        return len(self.matches)

    def __iter__(self):
        return iter(self.matches)

    @property
    def empty(self) -> bool:
        return not self.matches

    def pairs(self) -> list[PhrasePair]:
        return [p for _, p in self.matches]

    def targets(self) -> list[str]:
        return [p.target for _, p in self.matches]


def load_dictionary(path: str) -> PhraseDictionary:
    """Load a phrase dictionary from a TSV file, preserving file order."""
    pairs: list[PhrasePair] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise DataError(f"line {line_no}: expected 2 fields, got {len(fields)}")
            source, target = fields
            if not source.strip():
                raise DataError(f"line {line_no}: empty source field")
            if not target.strip():
                raise DataError(f"line {line_no}: empty target field")
            pairs.append(PhrasePair(source=source, target=target))
    try:
        return PhraseDictionary(pairs)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_dictionary(dictionary: PhraseDictionary, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pair in dictionary:
            fh.write(f"{pair.source}\t{pair.target}\n")


def match_phrases(dictionary: PhraseDictionary, intermediate_text: str) -> MatchedSet:
    """Select the entries whose normalized source is a substring of the text.

    Every entry is evaluated independently, so overlapping and nested
    sources all count.  Ordering follows first occurrence position in the
    normalized text, ties broken by dictionary index; each entry appears
    at most once regardless of how often its source occurs.
    """
    haystack = normalize(intermediate_text)
    found: list[tuple[int, int, PhrasePair]] = []
    for index, pair in enumerate(dictionary.pairs):
        pos = haystack.find(normalize(pair.source))
        if pos >= 0:
            found.append((pos, index, pair))
    found.sort(key=lambda item: (item[0], item[1]))
    return MatchedSet(matches=[(index, pair) for _, index, pair in found])


def build_phrase_list(
    dictionary: PhraseDictionary,
    distractors: PhraseDictionary,
    total: int,
    seed: int,
) -> PhraseDictionary:
    """Pad a dictionary with randomly sampled distractors up to ``total`` entries.

    All dictionary pairs are kept (in order), followed by distractors
    sampled without replacement using a generator seeded with ``seed``;
    the result is deterministic for fixed inputs and seed.  Distractors
    duplicating a dictionary pair are excluded from the pool first.
    """
    if total < len(dictionary):
        raise DataError(
            f"total {total} is smaller than the dictionary size {len(dictionary)}"
        )
    need = total - len(dictionary)
    existing = {(p.source, p.target) for p in dictionary}
    pool = [p for p in distractors if (p.source, p.target) not in existing]
    if len(pool) < need:
        raise DataError(f"need {need} distractors, pool has {len(pool)}")
    rng = random.Random(seed)
    sampled = rng.sample(pool, need)
    return PhraseDictionary(list(dictionary.pairs) + sampled)
