"""Two-pass prompt biasing for multimodal completion models.

Pass 1 transcribes the audio; the transcript is matched against the
phrase dictionary; pass 2 translates with a prompt that either names the
required target phrases (selection) or spells out the source-to-target
mapping of every matched pair (joint biasing).  Only matched pairs ever
enter a prompt: stuffing a full phrase list into the prompt is known to
break the models, so the pipeline never does it.

Audio is an opaque reference passed through to the client; no audio
processing happens here, which keeps the pipeline fully testable with
fixture-backed clients.
"""

from __future__ import annotations

import enum
import hashlib
import json
import os
import time
from dataclasses import dataclass, field

import requests

from .errors import DataError, TransportError
from .phrases import MatchedSet, PhraseDictionary, match_phrases

ASR_PROMPT = "Transcribe the audio clip into text."
TRANSLATION_PROMPT = "Translate the audio clip to English."

AUTH_TOKEN_ENV = "PHRASEBIAS_API_TOKEN"


class BiasMode(enum.Enum):
    BASELINE = "baseline"
    SELECTION = "selection"
    JOINT = "joint"


def build_asr_prompt() -> str:
    return ASR_PROMPT


def _join_targets(targets: list[str]) -> str:
    if len(targets) == 1:
        return targets[0]
    if len(targets) == 2:
        return f"{targets[0]} and {targets[1]}"
    return ", ".join(targets[:-1]) + f", and {targets[-1]}"


def build_translation_prompt(mode: BiasMode, matched: MatchedSet) -> str:
    """Second-pass prompt for the given bias mode and matched pairs.

    With no matches every mode degenerates to the plain translation
    prompt.  Selection appends one sentence naming all required targets
    (comma-joined, "and" before the last); joint biasing appends one
    sentence per matched pair, source text passed through verbatim.
    """
    if mode is BiasMode.BASELINE or matched.empty:
        return TRANSLATION_PROMPT
    if mode is BiasMode.SELECTION:
        return (
            TRANSLATION_PROMPT
            + f" The output should contain {_join_targets(matched.targets())}."
        )
    sentences = [
        f" The {pair.source} in the audio clip should be translated to {pair.target}."
        for _, pair in matched
    ]
    return TRANSLATION_PROMPT + "".join(sentences)


class LlmClient:
    """Completion transport: prompt plus opaque audio reference to text."""

    def complete(self, prompt: str, audio_ref: str) -> str:
        raise NotImplementedError


def prompt_digest(prompt: str) -> str:
    """Key under which mock fixtures store a response for a prompt."""
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class MockLlmClient(LlmClient):
    """Fixture-backed client for offline runs and tests.

    The fixture maps audio references to ``{prompt digest: response}``;
    a response that is an object with an ``error`` field, or a missing
    entry, simulates a transport failure for that call.
    """

    def __init__(self, fixture: dict):
        self.fixture = fixture
        self.calls = 0

    @classmethod
    def from_file(cls, path: str) -> "MockLlmClient":
        with open(path, encoding="utf-8") as fh:
            try:
                fixture = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: invalid mock fixture JSON ({exc})") from None
        return cls(fixture)

    def complete(self, prompt: str, audio_ref: str) -> str:
        self.calls += 1
        by_prompt = self.fixture.get(audio_ref)
        if by_prompt is None:
            raise TransportError(f"mock fixture has no entry for audio {audio_ref!r}")
        response = by_prompt.get(prompt_digest(prompt))
        if response is None:
            raise TransportError(
                f"mock fixture has no response for audio {audio_ref!r} and this prompt"
            )
        if isinstance(response, dict):
            raise TransportError(str(response.get("error", "mock failure")))
        return str(response)


class HttpLlmClient(LlmClient):
    """Minimal HTTP transport: POST {prompt, audio} as JSON, read {text}.

    The bearer token is taken from the environment so it never appears in
    command lines or run configurations.
    """

    def __init__(
        self,
        endpoint: str,
        timeout: float = 30.0,
        token_env: str = AUTH_TOKEN_ENV,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint
        self.timeout = timeout
        self.token_env = token_env
        self.session = session or requests.Session()

    def complete(self, prompt: str, audio_ref: str) -> str:
        headers = {}
        token = os.environ.get(self.token_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        try:
            resp = self.session.post(
                self.endpoint,
                json={"prompt": prompt, "audio": audio_ref},
                headers=headers,
                timeout=self.timeout,
            )
            resp.raise_for_status()
            payload = resp.json()
        except requests.RequestException as exc:
            raise TransportError(f"completion request failed: {exc}") from exc
        except ValueError as exc:
            raise TransportError(f"completion response is not JSON: {exc}") from exc
        if "text" not in payload:
            raise TransportError("completion response lacks a text field")
        return str(payload["text"])


@dataclass
class TwoPassTrace:
    """Full audit record of one utterance's two passes."""

    audio_ref: str
    asr_text: str = ""
    matched: MatchedSet = field(default_factory=lambda: MatchedSet(matches=[]))
    prompt: str = ""
    asr_retries: int = 0
    translation_retries: int = 0
    empty_asr: bool = False

    def to_json_obj(self) -> dict:
        return {
            "audio": self.audio_ref,
            "asr_text": self.asr_text,
            "matched": [
                {"index": index, "source": pair.source, "target": pair.target}
                for index, pair in self.matched
            ],
            "prompt": self.prompt,
            "asr_retries": self.asr_retries,
            "translation_retries": self.translation_retries,
            "empty_asr": self.empty_asr,
        }


def _complete_with_retry(
    client: LlmClient,
    prompt: str,
    audio_ref: str,
    pass_index: int,
    retries: int,
    backoff: float,
) -> tuple[str, int]:
    """Run one pass, retrying transport failures with exponential backoff.

    Returns (response, number of failed attempts before the success).
    """
    last: TransportError | None = None
    for attempt in range(retries):
        try:
            return client.complete(prompt, audio_ref), attempt
        except TransportError as exc:
            last = exc
            if attempt + 1 < retries and backoff > 0:
                time.sleep(backoff * (2**attempt))
    raise TransportError(
        f"pass {pass_index} failed after {retries} attempts: {last}",
        pass_index=pass_index,
        attempts=retries,
    )


def two_pass_translate(
    client: LlmClient,
    audio_ref: str,
    dictionary: PhraseDictionary,
    mode: BiasMode,
    retries: int = 3,
    backoff: float = 0.5,
) -> tuple[str, TwoPassTrace]:
    """Transcribe, match, then translate with a biased prompt.

    An empty transcript is not an error: matching yields no pairs and the
    translation pass runs with the plain prompt, flagged in the trace.
    """
    if retries < 1:
        raise DataError(f"retries must be >= 1, got {retries}")
    trace = TwoPassTrace(audio_ref=audio_ref)
    asr_text, trace.asr_retries = _complete_with_retry(
        client, build_asr_prompt(), audio_ref, 1, retries, backoff
    )
    trace.asr_text = asr_text
    trace.empty_asr = not asr_text.strip()
    if not trace.empty_asr:
        trace.matched = match_phrases(dictionary, asr_text)
    trace.prompt = build_translation_prompt(mode, trace.matched)
    translation, trace.translation_retries = _complete_with_retry(
        client, trace.prompt, audio_ref, 2, retries, backoff
    )
    return translation, trace
