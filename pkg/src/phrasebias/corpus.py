"""File formats: utterance corpora, table models, and hypothesis files.

Corpus: UTF-8 JSONL, one object per utterance:
``{"id": str, "z": str | "z_steps": [str], "reference": str,
"phrase_pairs": [{"source": str, "target": str}], "audio": str?}``.
``z_steps`` holds monotone snapshots of the intermediate text; ``z``
means the whole text is available from step 0.  ``audio`` is an opaque
reference forwarded to completion clients and defaults to the id.

Table model: JSON ``{"order": int, "entries": [{"context": [ids],
"logprobs": [reals]}], "eos": id, "vocab_size": int?}``.  A model file
may instead be JSONL of ``{"id": str, "model": {...}}`` lines supplying
one table per utterance (the simulator emits this form, since a single
shared table cannot distinguish utterances).

Hypotheses: JSONL ``{"id": str, "text": str, "model_score": float,
"bias_score": float}``, sorted by id.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .decoder import ConstantStream, IntermediateStream, StagedStream, TableModel
from .errors import DataError
from .phrases import PhrasePair


@dataclass
class Utterance:
    id: str
    reference: str
    pairs: list[PhrasePair] = field(default_factory=list)
    z: str | None = None
    z_steps: list[str] | None = None
    audio: str | None = None

    def make_stream(self) -> IntermediateStream:
        if self.z_steps is not None:
            return StagedStream(self.z_steps)
        return ConstantStream(self.z or "")

    def final_text(self) -> str:
        if self.z_steps:
            return self.z_steps[-1]
        return self.z or ""

    @property
    def audio_ref(self) -> str:
        return self.audio if self.audio is not None else self.id


def _require(obj: dict, key: str, line_no: int):
    if key not in obj:
        raise DataError(f"corpus line {line_no}: missing field {key!r}")
    return obj[key]


def load_corpus(path: str) -> list[Utterance]:
    utterances: list[Utterance] = []
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"corpus line {line_no}: invalid JSON ({exc})") from None
            utt_id = str(_require(obj, "id", line_no))
            if utt_id in seen_ids:
                raise DataError(f"corpus line {line_no}: duplicate id {utt_id!r}")
            seen_ids.add(utt_id)
            if "z" not in obj and "z_steps" not in obj:
                raise DataError(f"corpus line {line_no}: needs either z or z_steps")
            pairs = [
                PhrasePair(source=p["source"], target=p["target"])
                for p in obj.get("phrase_pairs", [])
            ]
            utterances.append(
                Utterance(
                    id=utt_id,
                    reference=str(_require(obj, "reference", line_no)),
                    pairs=pairs,
                    z=obj.get("z"),
                    z_steps=obj.get("z_steps"),
                    audio=obj.get("audio"),
                )
            )
    return utterances


def write_corpus(utterances: list[Utterance], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for utt in utterances:
            obj: dict = {"id": utt.id, "reference": utt.reference}
            if utt.z_steps is not None:
                obj["z_steps"] = utt.z_steps
            else:
                obj["z"] = utt.z or ""
            obj["phrase_pairs"] = [
                {"source": p.source, "target": p.target} for p in utt.pairs
            ]
            if utt.audio is not None:
                obj["audio"] = utt.audio
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")


def _table_from_obj(obj: dict, origin: str) -> TableModel:
    for key in ("order", "entries", "eos"):
        if key not in obj:
            raise DataError(f"{origin}: model object missing field {key!r}")
    entries = obj["entries"]
    vocab_size = obj.get("vocab_size")
    if vocab_size is None:
        if not entries:
            raise DataError(f"{origin}: cannot infer vocab size from empty entries")
        vocab_size = len(entries[0]["logprobs"])
    table = {}
    for entry in entries:
        context = tuple(int(t) for t in entry["context"])
        table[context] = np.asarray(entry["logprobs"], dtype=np.float64)
    return TableModel(
        order=int(obj["order"]),
        table=table,
        vocab_size=int(vocab_size),
        eos_token=int(obj["eos"]),
    )


def load_models(path: str) -> dict[str | None, TableModel]:
    """Load a model file: a single table (key ``None``) or per-utterance JSONL."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    stripped = text.strip()
    if not stripped:
        raise DataError(f"{path}: empty model file")
    try:
        obj = json.loads(stripped)
        if isinstance(obj, dict) and "entries" in obj:
            return {None: _table_from_obj(obj, path)}
    except json.JSONDecodeError:
        pass
    models: dict[str | None, TableModel] = {}
    for line_no, raw in enumerate(stripped.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path} line {line_no}: invalid JSON ({exc})") from None
        if "id" not in obj or "model" not in obj:
            raise DataError(f"{path} line {line_no}: expected id and model fields")
        models[str(obj["id"])] = _table_from_obj(
            obj["model"], f"{path} line {line_no}"
        )
    return models


def model_for(models: dict[str | None, TableModel], utt_id: str) -> TableModel:
    model = models.get(utt_id, models.get(None))
    if model is None:
        raise DataError(f"no model available for utterance {utt_id!r}")
    return model


def _table_to_obj(model: TableModel) -> dict:
    return {
        "order": model.order,
        "vocab_size": model.vocab_size,
        "eos": model.eos_token,
        "entries": [
            {"context": list(context), "logprobs": [float(x) for x in row]}
            for context, row in sorted(model.table.items())
        ],
    }


def write_model(model: TableModel, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_table_to_obj(model), fh, sort_keys=True)
        fh.write("\n")


def write_models(models: dict[str, TableModel], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for utt_id in sorted(models):
            obj = {"id": utt_id, "model": _table_to_obj(models[utt_id])}
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def write_hypotheses(rows: list[dict], path: str) -> None:
    rows = sorted(rows, key=lambda r: r["id"])
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def load_hypotheses(path: str) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(
                    f"hypotheses line {line_no}: invalid JSON ({exc})"
                ) from None
            if "id" not in obj or "text" not in obj:
                raise DataError(f"hypotheses line {line_no}: expected id and text")
            rows.append(obj)
    return rows
