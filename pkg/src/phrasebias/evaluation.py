"""Translation quality metrics: count-once phrase recall and corpus BLEU.

Phrase recall: an (utterance, target phrase) pair is a hit when the
normalized phrase occurs at least once as a substring of the normalized
hypothesis; each pair contributes at most one hit to the numerator and
exactly one to the denominator, no matter how often the phrase occurs.
Normalization is shared with source matching so the string semantics on
both sides of the pipeline are identical.

BLEU: corpus-level BLEU-4 with brevity penalty.  N-gram counts are pooled
over the corpus before the geometric mean; an order whose pooled match
count is zero is smoothed by adding one to numerator and denominator (so
an identity corpus scores exactly 100, and corpora shorter than four
tokens are not annihilated).  Tokenization splits punctuation characters
into single tokens and then splits on whitespace; scoring is
case-sensitive.  Absolute values are pinned by these choices and are only
compared against this implementation's own oracle, never against
externally reported numbers.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field

from .errors import DataError
from .phrases import normalize

BLEU_ORDER = 4


def bleu_tokenize(text: str) -> list[str]:
    """Whitespace tokenization after splitting punctuation into single tokens."""
    out: list[str] = []
    for chunk in text.split():
        word = []
        for ch in chunk:
            if ch.isalnum():
                word.append(ch)
            else:
                if word:
                    out.append("".join(word))
                    word = []
                out.append(ch)
        if word:
            out.append("".join(word))
    return out


def _ngram_counts(tokens: list[str], order: int) -> Counter:
    return Counter(
        tuple(tokens[i : i + order]) for i in range(len(tokens) - order + 1)
    )


def corpus_bleu(hypotheses: list[str], references: list[str]) -> float:
    """Corpus BLEU-4 in [0, 100]; see the module docstring for the variant."""
    if not hypotheses or not references:
        raise DataError("empty corpus")
    if len(hypotheses) != len(references):
        raise DataError(
            f"corpus length mismatch: {len(hypotheses)} hypotheses vs "
            f"{len(references)} references"
        )
    matches = [0] * BLEU_ORDER
    totals = [0] * BLEU_ORDER
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_tokens = bleu_tokenize(hyp)
        ref_tokens = bleu_tokenize(ref)
        hyp_len += len(hyp_tokens)
        ref_len += len(ref_tokens)
        for order in range(1, BLEU_ORDER + 1):
            hyp_counts = _ngram_counts(hyp_tokens, order)
            ref_counts = _ngram_counts(ref_tokens, order)
            totals[order - 1] += sum(hyp_counts.values())
            matches[order - 1] += sum(
                min(count, ref_counts[gram]) for gram, count in hyp_counts.items()
            )
    log_precision_sum = 0.0
    for order in range(BLEU_ORDER):
        m, t = matches[order], totals[order]
        if m == 0:
            m, t = m + 1, t + 1
        log_precision_sum += math.log(m / t)
    if hyp_len == 0:
        return 0.0
    brevity = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * brevity * math.exp(log_precision_sum / BLEU_ORDER)


@dataclass
class UtteranceHits:
    id: str
    phrase_hits: list[tuple[str, bool]]


def phrase_recall(
    hypotheses: list[tuple[str, str]],
    annotations: list[tuple[str, list[str]]],
) -> tuple[float | None, list[UtteranceHits]]:
    """Count-once phrase recall over aligned (id, text) and (id, phrases) lists.

    Returns ``(recall, per-utterance hit details)``; recall is ``None``
    when no pairs are annotated (never reported as zero).
    """
    hyp_by_id = dict(hypotheses)
    if len(hyp_by_id) != len(hypotheses):
        raise DataError("duplicate hypothesis ids")
    ann_ids = [utt_id for utt_id, _ in annotations]
    if len(set(ann_ids)) != len(ann_ids):
        raise DataError("duplicate annotation ids")
    missing = sorted(set(ann_ids) - set(hyp_by_id))
    extra = sorted(set(hyp_by_id) - set(ann_ids))
    if missing or extra:
        raise DataError(
            f"id mismatch between hypotheses and annotations: "
            f"missing {missing}, unexpected {extra}"
        )
    hits = 0
    total = 0
    details: list[UtteranceHits] = []
    for utt_id, targets in annotations:
        text = normalize(hyp_by_id[utt_id])
        utt_hits: list[tuple[str, bool]] = []
        for target in targets:
            hit = normalize(target) in text
            utt_hits.append((target, hit))
            hits += int(hit)
            total += 1
        details.append(UtteranceHits(id=utt_id, phrase_hits=utt_hits))
    recall = (hits / total) if total else None
    return recall, details


@dataclass
class EvalReport:
    """Machine-readable evaluation result with the run configuration echoed."""

    bleu: float
    recall: float | None
    per_utterance: list[UtteranceHits] = field(default_factory=list)
    mode: str | None = None
    list_bonus: float | None = None
    selected_bonus: float | None = None
    beam: int | None = None

    def to_json_obj(self) -> dict:
        return {
            "bleu": _round4(self.bleu),
            "recall": _round4(self.recall),
            "per_utterance": [
                {
                    "id": utt.id,
                    "phrase_hits": [
                        {"target": target, "hit": hit} for target, hit in utt.phrase_hits
                    ],
                }
                for utt in self.per_utterance
            ],
            "config": {
                "mode": self.mode,
                "lambda": _round4(self.list_bonus),
                "mu": _round4(self.selected_bonus),
                "beam": self.beam,
            },
        }


def _round4(value):
    if value is None:
        return None
    return round(float(value), 4)


def emit_report(report: EvalReport, path: str) -> None:
    """Write the report as deterministic JSON (sorted keys, 4-decimal floats)."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json_obj(), fh, ensure_ascii=False, sort_keys=True, indent=2)
        fh.write("\n")
