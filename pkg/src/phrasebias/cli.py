"""Command-line entry point.

Subcommands: ``decode`` (biased beam search over a corpus), ``build-list``
(pad a dictionary with sampled distractors), ``eval`` (BLEU + phrase
recall report), ``llm`` (two-pass prompt-biased translation), and
``simulate`` (seeded synthetic corpus + models).

Exit codes: 0 success, 1 usage error, 2 data error, 3 transport error.
All randomness flows from ``--seed``; identical configuration and seed
produce byte-identical output files.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor

from . import corpus as corpus_io
from .biasing import BiasingConfig, Tier, build_trie
from .decoder import beam_search
from .errors import DataError, PhraseBiasError, TransportError, UsageError
from .evaluation import EvalReport, corpus_bleu, emit_report, phrase_recall
from .llm import (
    BiasMode,
    HttpLlmClient,
    MockLlmClient,
    two_pass_translate,
)
from .phrases import build_phrase_list, load_dictionary, write_dictionary
from .simulate import build_experiment
from .tokenizer import load_vocabulary, write_vocabulary

DECODE_MODES = ("baseline", "plb", "phrased-selection")
LLM_MODES = ("baseline", "llm-selection", "llm-joint")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        raise UsageError(message)


def resolve_bonuses(mode: str, lam: float | None, mu: float | None) -> BiasingConfig:
    """Apply the mode's constraints to the requested bonus rates.

    baseline forces both rates to zero and plb forces the selected bonus
    to zero; explicitly passing a conflicting nonzero value is a usage
    error, caught before any work starts.
    """
    if mode == "baseline":
        if lam not in (None, 0.0) or mu not in (None, 0.0):
            raise UsageError("mode=baseline requires lambda and mu to be 0")
        return BiasingConfig(0.0, 0.0)
    if mode == "plb":
        if mu not in (None, 0.0):
            raise UsageError("mode=plb requires mu to be 0")
        return BiasingConfig(1.0 if lam is None else lam, 0.0)
    if mode == "phrased-selection":
        return BiasingConfig(1.0 if lam is None else lam, 3.0 if mu is None else mu)
    raise UsageError(f"mode {mode!r} is not a decode mode")


def decode_utterance(utt, model, dictionary, trie, config, beam, max_len, vocab) -> dict:
    """Decode one utterance and render it as a hypotheses-file row."""
    best, _ = beam_search(
        model=model,
        stream=utt.make_stream(),
        dictionary=dictionary,
        config=config,
        vocab=vocab,
        beam=beam,
        max_len=max_len,
        trie=trie,
    )
    tokens = list(best.tokens)
    if tokens and tokens[-1] == model.eos_token:
        tokens = tokens[:-1]
    return {
        "id": utt.id,
        "text": vocab.decode(tokens),
        "model_score": best.model_score,
        "bias_score": best.bias_score,
    }


_WORKER = {}


def _worker_init(vocab_path, dict_path, model_path, corpus_path, config, beam, max_len):
    vocab = load_vocabulary(vocab_path)
    dictionary = load_dictionary(dict_path)
    models = corpus_io.load_models(model_path)
    utterances = {u.id: u for u in corpus_io.load_corpus(corpus_path)}
    trie = (
        build_trie([(t, Tier.BASE) for t in dictionary.targets()], vocab)
        if config is not None and len(dictionary)
        else None
    )
    _WORKER.update(
        vocab=vocab,
        dictionary=dictionary,
        models=models,
        utterances=utterances,
        trie=trie,
        config=config,
        beam=beam,
        max_len=max_len,
    )


def _worker_decode(utt_id: str) -> dict:
    utt = _WORKER["utterances"][utt_id]
    model = corpus_io.model_for(_WORKER["models"], utt_id)
    return decode_utterance(
        utt,
        model,
        _WORKER["dictionary"],
        _WORKER["trie"],
        _WORKER["config"],
        _WORKER["beam"],
        _WORKER["max_len"],
        _WORKER["vocab"],
    )


def cmd_decode(args) -> int:
    config = resolve_bonuses(args.mode, args.lambda_, args.mu)
    if args.jobs > 1:
        init_args = (
            args.vocab,
            args.dict,
            args.model,
            args.corpus,
            config,
            args.beam,
            args.max_len,
        )
        utterances = corpus_io.load_corpus(args.corpus)
        ids = [u.id for u in utterances]
        with ProcessPoolExecutor(
            max_workers=args.jobs, initializer=_worker_init, initargs=init_args
        ) as pool:
            rows = list(pool.map(_worker_decode, ids))
    else:
        _worker_init(
            args.vocab, args.dict, args.model, args.corpus, config, args.beam, args.max_len
        )
        rows = [_worker_decode(utt_id) for utt_id in sorted(_WORKER["utterances"])]
    corpus_io.write_hypotheses(rows, args.out)
    print(f"decoded {len(rows)} utterances -> {args.out}", file=sys.stderr)
    return 0


def cmd_build_list(args) -> int:
    dictionary = load_dictionary(args.dict)
    distractors = load_dictionary(args.distractors)
    merged = build_phrase_list(dictionary, distractors, args.total, args.seed)
    write_dictionary(merged, args.out)
    print(f"wrote {len(merged)} phrases -> {args.out}", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    hyp_rows = corpus_io.load_hypotheses(args.hypotheses)
    utterances = corpus_io.load_corpus(args.corpus)
    hyp_pairs = [(row["id"], row["text"]) for row in hyp_rows]
    annotations = [(u.id, [p.target for p in u.pairs]) for u in utterances]
    recall, details = phrase_recall(hyp_pairs, annotations)
    refs_by_id = {u.id: u.reference for u in utterances}
    ordered_ids = sorted(refs_by_id)
    hyp_by_id = dict(hyp_pairs)
    bleu = corpus_bleu(
        [hyp_by_id[i] for i in ordered_ids], [refs_by_id[i] for i in ordered_ids]
    )
    report = EvalReport(
        bleu=bleu,
        recall=recall,
        per_utterance=details,
        mode=args.mode,
        list_bonus=args.lambda_,
        selected_bonus=args.mu,
        beam=args.beam,
    )
    emit_report(report, args.out)
    recall_text = "n/a" if recall is None else f"{100 * recall:.2f}%"
    print(f"BLEU {bleu:.2f}  recall {recall_text} -> {args.out}", file=sys.stderr)
    return 0


def cmd_llm(args) -> int:
    if args.mode not in LLM_MODES:
        raise UsageError(f"mode {args.mode!r} is not an llm mode (use {LLM_MODES})")
    mode = {
        "baseline": BiasMode.BASELINE,
        "llm-selection": BiasMode.SELECTION,
        "llm-joint": BiasMode.JOINT,
    }[args.mode]
    if (args.mock is None) == (args.endpoint is None):
        raise UsageError("exactly one of --mock and --endpoint is required")
    if args.mock is not None:
        client = MockLlmClient.from_file(args.mock)
        backoff = 0.0
    else:
        client = HttpLlmClient(endpoint=args.endpoint, timeout=args.timeout)
        backoff = 0.5
    dictionary = load_dictionary(args.dict)
    utterances = corpus_io.load_corpus(args.corpus)
    rows = []
    traces = []
    failures = []
    for utt in sorted(utterances, key=lambda u: u.id):
        try:
            text, trace = two_pass_translate(
                client,
                utt.audio_ref,
                dictionary,
                mode,
                retries=args.retries,
                backoff=backoff,
            )
        except TransportError as exc:
            failures.append(utt.id)
            traces.append({"id": utt.id, "error": str(exc), "pass": exc.pass_index})
            continue
        rows.append({"id": utt.id, "text": text})
        traces.append({"id": utt.id, **trace.to_json_obj()})
    corpus_io.write_hypotheses(rows, args.out)
    trace_path = args.out + ".trace.jsonl"
    with open(trace_path, "w", encoding="utf-8") as fh:
        for obj in sorted(traces, key=lambda o: o["id"]):
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")
    summary = f"translated {len(rows)}/{len(utterances)} utterances"
    if failures:
        summary += f"; {len(failures)} failed: {', '.join(failures)}"
    print(summary, file=sys.stderr)
    return 0


def cmd_simulate(args) -> int:
    experiment = build_experiment(seed=args.seed, n_utterances=args.utterances)
    out = args.out_dir.rstrip("/")
    import os

    os.makedirs(out, exist_ok=True)
    write_vocabulary(experiment.vocab, f"{out}/vocab.tsv")
    corpus_io.write_corpus(experiment.corpus(), f"{out}/corpus.jsonl")
    corpus_io.write_models(experiment.models(), f"{out}/models.jsonl")
    write_dictionary(experiment.relevant, f"{out}/dict.tsv")
    write_dictionary(experiment.distractor_pool, f"{out}/distractors.tsv")
    print(
        f"simulated {len(experiment.utterances)} utterances, "
        f"{len(experiment.relevant)} annotated pairs, "
        f"{len(experiment.distractor_pool)} distractors -> {out}/",
        file=sys.stderr,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="phrasebias", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    decode = sub.add_parser("decode", help="biased beam search over a corpus")
    decode.add_argument("--mode", choices=DECODE_MODES, default="phrased-selection")
    decode.add_argument("--lambda", dest="lambda_", type=float, default=None)
    decode.add_argument("--mu", type=float, default=None)
    decode.add_argument("--beam", type=int, default=8)
    decode.add_argument("--max-len", type=int, default=32)
    decode.add_argument("--seed", type=int, default=0)
    decode.add_argument("--jobs", type=int, default=1)
    decode.add_argument("--vocab", required=True)
    decode.add_argument("--dict", required=True)
    decode.add_argument("--corpus", required=True)
    decode.add_argument("--model", required=True)
    decode.add_argument("--out", required=True)
    decode.set_defaults(func=cmd_decode)

    build_list = sub.add_parser("build-list", help="pad a dictionary with distractors")
    build_list.add_argument("--dict", required=True)
    build_list.add_argument("--distractors", required=True)
    build_list.add_argument("--total", type=int, required=True)
    build_list.add_argument("--seed", type=int, default=0)
    build_list.add_argument("--out", required=True)
    build_list.set_defaults(func=cmd_build_list)

    evaluate = sub.add_parser("eval", help="BLEU and phrase recall report")
    evaluate.add_argument("--hypotheses", required=True)
    evaluate.add_argument("--corpus", required=True)
    evaluate.add_argument("--out", required=True)
    evaluate.add_argument("--mode", default=None)
    evaluate.add_argument("--lambda", dest="lambda_", type=float, default=None)
    evaluate.add_argument("--mu", type=float, default=None)
    evaluate.add_argument("--beam", type=int, default=None)
    evaluate.set_defaults(func=cmd_eval)

    llm = sub.add_parser("llm", help="two-pass prompt-biased translation")
    llm.add_argument("--mode", choices=LLM_MODES, required=True)
    llm.add_argument("--dict", required=True)
    llm.add_argument("--corpus", required=True)
    llm.add_argument("--out", required=True)
    llm.add_argument("--mock", default=None, help="mock fixture JSON path")
    llm.add_argument("--endpoint", default=None, help="completion endpoint URL")
    llm.add_argument("--timeout", type=float, default=30.0)
    llm.add_argument("--retries", type=int, default=3)
    llm.set_defaults(func=cmd_llm)

    simulate = sub.add_parser("simulate", help="generate a synthetic experiment")
    simulate.add_argument("--seed", type=int, default=0)
    simulate.add_argument("--utterances", type=int, default=200)
    simulate.add_argument("--out-dir", required=True)
    simulate.set_defaults(func=cmd_simulate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except TransportError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except PhraseBiasError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
