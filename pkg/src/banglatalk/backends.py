"""ASR / LLM / TTS interfaces, scripted test doubles and sentence splitting.

The chat-model contract: every sentence ends with ``|`` and an invalid
query produces only ``$``. Streaming text is cut into sentences at
Bengali and Latin sentence punctuation as soon as a delimiter arrives.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import logging
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Protocol

import numpy as np

from .errors import BackendError, ConfigError
from .segmenter import SpeechSegment

log = logging.getLogger(__name__)

INVALID_QUERY = "$"
SENTENCE_SENTINEL = "|"
DELIMITERS = frozenset({"।", "?", "!", SENTENCE_SENTINEL})
UNKNOWN_TRANSCRIPT = "<unk>"

SYSTEM_PROMPT = (
    "You are a helpful chatbot who understands Bengali regional dialects and only speaks "
    "standard Bengali. Please be concise and end every sentence with {|}."
)
USER_PROMPT = (
    "Please generate a response for only the valid query. For an invalid query, print only a {$}. "
    "Here is the query in the Bengali regional dialect {user_query}."
)


class AsrBackend(Protocol):
    def transcribe(self, segment: SpeechSegment) -> str: ...


class LlmBackend(Protocol):
    def stream(self, query: str) -> Iterator[str]: ...


class TtsBackend(Protocol):
    sample_rate_hz: int

    def synthesize(self, text: str) -> np.ndarray: ...


def build_user_prompt(query: str) -> str:
    return USER_PROMPT.replace("{user_query}", query)


@dataclass(frozen=True)
class Sentence:
    """One segmented sentence; ``stripped`` holds a removed ``|`` sentinel."""

    text: str
    stripped: str = ""

    @property
    def raw(self) -> str:
        return self.text + self.stripped

    def __str__(self) -> str:
        return self.text


@dataclass
class SentenceSegmenter:
    delimiters: frozenset[str] = DELIMITERS
    _carry: list[str] = field(default_factory=list)
    invalid: bool = False

    def _emit(self, text: str, stripped: str) -> list[Sentence]:
        if (text + stripped).strip() == INVALID_QUERY:
            self.invalid = True
            return []
        return [Sentence(text, stripped)]

    def feed(self, chunk: str) -> list[Sentence]:
        out: list[Sentence] = []
        for ch in chunk:
            if ch in self.delimiters:
                text = "".join(self._carry)
                self._carry.clear()
                if ch == SENTENCE_SENTINEL:
                    out.extend(self._emit(text, ch))
                else:
                    out.extend(self._emit(text + ch, ""))
            else:
                self._carry.append(ch)
        return out

    def flush(self) -> list[Sentence]:
        if not self._carry:
            return []
        text = "".join(self._carry)
        self._carry.clear()
        return self._emit(text, "")


def segment_stream(chunks: Iterable[str], segmenter: SentenceSegmenter | None = None) -> Iterator[Sentence]:
    """Yield sentences as soon as their delimiter arrives; flush the tail.

    A response consisting only of ``$`` yields nothing and sets
    ``segmenter.invalid``.
    """
    seg = segmenter if segmenter is not None else SentenceSegmenter()
    for chunk in chunks:
        yield from seg.feed(chunk)
    yield from seg.flush()


def fingerprint(samples: np.ndarray | SpeechSegment) -> str:
    """``"<sample count>:<sha256 prefix>"`` of little-endian PCM."""
    if isinstance(samples, SpeechSegment):
        samples = samples.samples
    data = np.asarray(samples, dtype="<i2").tobytes()
    return f"{len(data) // 2}:{hashlib.sha256(data).hexdigest()[:16]}"


class ScriptedAsr:
    def __init__(self, table: dict[str, str] | None = None, fallback: str = UNKNOWN_TRANSCRIPT):
        self.table = dict(table or {})
        self.fallback = fallback

    def transcribe(self, segment: SpeechSegment) -> str:
        if len(segment.samples) == 0:
            return ""
        return self.table.get(fingerprint(segment), self.fallback)


def scripted_asr(table: dict[str, str] | None = None) -> ScriptedAsr:
    return ScriptedAsr(table)


class ScriptedLlm:
    """Streams canned responses in fixed-width chunks; unknown queries get ``$``."""

    def __init__(
        self,
        responses: dict[str, str] | None = None,
        chunk_size: int = 8,
        chunk_delay_ms: float = 0.0,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        self.responses = dict(responses or {})
        self.chunk_size = chunk_size
        self.chunk_delay_ms = chunk_delay_ms
        self._sleep = sleep

    def stream(self, query: str) -> Iterator[str]:
        text = self.responses.get(query, INVALID_QUERY)
        for i in range(0, len(text), self.chunk_size):
            if i and self.chunk_delay_ms > 0:
                self._sleep(self.chunk_delay_ms / 1000.0)
            yield text[i:i + self.chunk_size]


def scripted_llm(responses: dict[str, str], chunk_size: int = 8, chunk_delay_ms: float = 0.0) -> ScriptedLlm:
    return ScriptedLlm(responses, chunk_size, chunk_delay_ms)


class ToneTts:
    """440 Hz sine at half scale, 80 ms per character."""

    def __init__(self, rate: int = 22050, frequency_hz: float = 440.0, ms_per_char: float = 80.0, amplitude: float = 0.5):
        self.sample_rate_hz = rate
        self.frequency_hz = frequency_hz
        self.ms_per_char = ms_per_char
        self.amplitude = amplitude

    def synthesize(self, text: str) -> np.ndarray:
        n = round(len(text) * self.ms_per_char * self.sample_rate_hz / 1000.0)
        t = np.arange(n) / self.sample_rate_hz
        wave = self.amplitude * 32767 * np.sin(2 * np.pi * self.frequency_hz * t)
        return np.round(wave).astype(np.int16)


def tone_tts(rate: int = 22050) -> ToneTts:
    return ToneTts(rate)


@dataclass
class MockBackends:
    asr: ScriptedAsr
    llm: ScriptedLlm
    tts: ToneTts


def load_mock_config(path: str | Path) -> MockBackends:
    """Read a scripted-backend file.

    Sections: ``[asr]`` maps segment fingerprints to transcripts, ``[llm]``
    maps queries to responses, ``[options]`` holds ``chunk_size``,
    ``chunk_delay_ms``, ``tts_rate`` and ``asr_fallback``.
    """
    parser = configparser.ConfigParser(delimiters=("=",), interpolation=None, comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are transcripts and fingerprints; keep case
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    asr = dict(parser["asr"]) if parser.has_section("asr") else {}
    llm = dict(parser["llm"]) if parser.has_section("llm") else {}
    opts = parser["options"] if parser.has_section("options") else {}
    try:
        chunk_size = int(opts.get("chunk_size", 8))
        delay = float(opts.get("chunk_delay_ms", 0))
        rate = int(opts.get("tts_rate", 22050))
    except ValueError as exc:
        raise ConfigError(f"{path}: bad option value: {exc}") from exc
    if rate not in (16000, 22050):
        raise ConfigError(f"{path}: tts_rate must be 16000 or 22050")
    return MockBackends(
        asr=ScriptedAsr(asr, opts.get("asr_fallback", UNKNOWN_TRANSCRIPT)),
        llm=ScriptedLlm(llm, chunk_size, delay),
        tts=ToneTts(rate),
    )


def dump_mock_config(path: str | Path, asr: dict[str, str], llm: dict[str, str], **options: object) -> None:
    parser = configparser.ConfigParser(delimiters=("=",), interpolation=None)
    parser.optionxform = str
    parser["asr"] = asr
    parser["llm"] = llm
    parser["options"] = {k: str(v) for k, v in options.items()}
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)


def _post_json(url: str, body: dict, timeout_s: float, retries: int = 1) -> bytes:
    data = json.dumps(body).encode()
    last: Exception | None = None
    for attempt in range(retries + 1):
        req = urllib.request.Request(url, data=data, headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=timeout_s) as resp:
                return resp.read()
        except (urllib.error.URLError, TimeoutError, OSError) as exc:
            last = exc
            log.warning("POST %s failed (attempt %d): %s", url, attempt + 1, exc)
    raise BackendError(f"{url}: {last}")


class HttpAsr:
    """POSTs PCM as a JSON integer list; expects ``{"text": ...}`` back."""

    def __init__(self, url: str, timeout_s: float = 10.0):
        self.url = url
        self.timeout_s = timeout_s

    def transcribe(self, segment: SpeechSegment) -> str:
        if len(segment.samples) == 0:
            return ""
        raw = _post_json(self.url, {"sample_rate": 16000, "samples": segment.samples.tolist()}, self.timeout_s)
        return json.loads(raw)["text"]


class HttpLlm:
    """Sends the prompt pair; the service answers with newline-delimited chunks."""

    def __init__(self, url: str, timeout_s: float = 10.0):
        self.url = url
        self.timeout_s = timeout_s

    def stream(self, query: str) -> Iterator[str]:
        raw = _post_json(self.url, {"system": SYSTEM_PROMPT, "user": build_user_prompt(query)}, self.timeout_s)
        for line in raw.decode("utf-8").splitlines():
            if line:
                yield json.loads(line)["chunk"]


class HttpTts:
    def __init__(self, url: str, sample_rate_hz: int = 22050, timeout_s: float = 10.0):
        self.url = url
        self.sample_rate_hz = sample_rate_hz
        self.timeout_s = timeout_s

    def synthesize(self, text: str) -> np.ndarray:
        if not text:
            return np.zeros(0, dtype=np.int16)
        raw = _post_json(self.url, {"text": text}, self.timeout_s)
        return np.frombuffer(raw, dtype="<i2").astype(np.int16)
