"""Decoding-time phrase biasing for speech translation.

Core pieces: a byte-fallback subword tokenizer, phrase dictionaries with
source-side matching, a token-trie biasing engine with per-step bonus
tracking and retraction, label-synchronous beam search over abstract
scoring models, a two-pass prompt-biasing pipeline for completion models,
and evaluation tooling (count-once phrase recall, corpus BLEU).
"""

from .biasing import (
    BiasState,
    BiasTrie,
    BiasingConfig,
    Tier,
    build_trie,
    promote,
    step_bonus,
)
from .decoder import (
    ConstantStream,
    Hypothesis,
    IntermediateStream,
    ScoringModel,
    StagedStream,
    TableModel,
    beam_search,
    exhaustive_oracle,
)
from .errors import DataError, PhraseBiasError, TransportError, UsageError
from .evaluation import EvalReport, corpus_bleu, emit_report, phrase_recall
from .llm import (
    BiasMode,
    HttpLlmClient,
    LlmClient,
    MockLlmClient,
    build_asr_prompt,
    build_translation_prompt,
    two_pass_translate,
)
from .phrases import (
    MatchedSet,
    PhraseDictionary,
    PhrasePair,
    build_phrase_list,
    load_dictionary,
    match_phrases,
    normalize,
)
from .tokenizer import Vocabulary, load_vocabulary

__version__ = "0.1.0"

__all__ = [
    "BiasMode",
    "BiasState",
    "BiasTrie",
    "BiasingConfig",
    "ConstantStream",
    "DataError",
    "EvalReport",
    "HttpLlmClient",
    "Hypothesis",
    "IntermediateStream",
    "LlmClient",
    "MatchedSet",
    "MockLlmClient",
    "PhraseBiasError",
    "PhraseDictionary",
    "PhrasePair",
    "ScoringModel",
    "StagedStream",
    "TableModel",
    "Tier",
    "TransportError",
    "UsageError",
    "Vocabulary",
    "beam_search",
    "build_asr_prompt",
    "build_phrase_list",
    "build_translation_prompt",
    "build_trie",
    "corpus_bleu",
    "emit_report",
    "exhaustive_oracle",
    "load_dictionary",
    "load_vocabulary",
    "match_phrases",
    "normalize",
    "phrase_recall",
    "promote",
    "step_bonus",
    "two_pass_translate",
]
