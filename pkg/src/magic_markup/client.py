"""Chat-completion clients: a live HTTP client plus offline doubles.

Every pipeline in the package talks to a model through ``complete``. The
scripted and replay clients make those pipelines deterministic and
runnable without network access; the recording client captures a live
session into a replayable transcript.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Protocol, Union

import httpx

from .errors import AuthError, JsonModeViolation, ReplayMiss, TransportError
from .model import atomic_write_text, read_text

logger = logging.getLogger(__name__)

ENV_API_KEY = "MAGIC_MARKUP_API_KEY"
ENV_API_BASE = "MAGIC_MARKUP_API_BASE"
ENV_MODEL = "MAGIC_MARKUP_MODEL"

DEFAULT_API_BASE = "https://api.openai.com/v1"
DEFAULT_MODEL = "gpt-4-0125-preview"
TRANSCRIPT_VERSION = 1


def default_model() -> str:
    return os.environ.get(ENV_MODEL) or DEFAULT_MODEL


@dataclass(frozen=True)
class Usage:
    input_tokens: int = 0
    output_tokens: int = 0

    def __add__(self, other: "Usage") -> "Usage":
        return Usage(self.input_tokens + other.input_tokens, self.output_tokens + other.output_tokens)

    @classmethod
    def from_dict(cls, d: dict) -> "Usage":
        return cls(int(d.get("input_tokens", 0)), int(d.get("output_tokens", 0)))


@dataclass(frozen=True)
class ChatRequest:
    user_text: str
    system_text: Optional[str] = None
    json_mode: bool = False
    # None means "provider default"
    temperature: Optional[float] = 0.0
    model_name: str = field(default_factory=default_model)
    max_output_tokens: Optional[int] = None

    def __post_init__(self):
        if not self.user_text:
            raise ValueError("user_text must be non-empty")
        if self.temperature is not None and not 0 <= self.temperature <= 2:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_output_tokens is not None and self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")

    def digest(self) -> str:
        # max_output_tokens is left out so tuning it keeps fixtures valid
        key = json.dumps(
            [self.model_name, self.system_text, self.user_text, self.json_mode, self.temperature],
            ensure_ascii=False,
        )
        return hashlib.sha256(key.encode("utf-8")).hexdigest()

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ChatResponse:
    text: str
    latency_seconds: float = 0.0
    usage: Usage = Usage()

    def to_dict(self) -> dict:
        return {"text": self.text, "latency_seconds": self.latency_seconds, "usage": asdict(self.usage)}

    @classmethod
    def from_dict(cls, d: dict) -> "ChatResponse":
        return cls(d["text"], float(d.get("latency_seconds", 0.0)), Usage.from_dict(d.get("usage", {})))


class ChatClient(Protocol):
    def complete(self, req: ChatRequest) -> ChatResponse: ...


def check_json_mode(req: ChatRequest, text: str) -> None:
    if not req.json_mode:
        return
    try:
        json.loads(text)
    except (json.JSONDecodeError, TypeError) as e:
        raise JsonModeViolation(f"json_mode response is not valid JSON: {text[:80]!r}") from e


class BaseClient:
    """Shared bookkeeping: a lock and a monotonically growing usage total."""

    def __init__(self):
        self._lock = threading.Lock()
        self.total_usage = Usage()
        self.calls = 0

    def _account(self, resp: ChatResponse) -> None:
        with self._lock:
            self.total_usage = self.total_usage + resp.usage
            self.calls += 1

    def complete(self, req: ChatRequest) -> ChatResponse:
        resp = self._complete(req)
        check_json_mode(req, resp.text)
        self._account(resp)
        return resp

    def _complete(self, req: ChatRequest) -> ChatResponse:
        raise NotImplementedError


Script = Union[Iterable[str], Callable[[ChatRequest], str]]


class ScriptedClient(BaseClient):
    """Returns canned texts, either in order or computed from the request.

    A callable script may raise to simulate failures.
    """

    def __init__(self, script: Script):
        super().__init__()
        if callable(script):
            self._fn = script
            self._queue = None
        else:
            self._fn = None
            self._queue = list(script)
        self.requests: list[ChatRequest] = []

    def _complete(self, req: ChatRequest) -> ChatResponse:
        with self._lock:
            self.requests.append(req)
            if self._fn is None:
                if not self._queue:
                    raise ReplayMiss("scripted client ran out of responses")
                text = self._queue.pop(0)
        if self._fn is not None:
            text = self._fn(req)
        return ChatResponse(text, 0.0, Usage(len(req.user_text.split()), len(text.split())))


@dataclass
class TranscriptEntry:
    digest: str
    repeat: int
    request: dict
    response: ChatResponse

    def to_dict(self) -> dict:
        return {"digest": self.digest, "repeat": self.repeat, "request": self.request, "response": self.response.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "TranscriptEntry":
        return cls(d["digest"], int(d.get("repeat", 0)), d.get("request", {}), ChatResponse.from_dict(d["response"]))


@dataclass
class Transcript:
    fixture: str
    entries: list[TranscriptEntry] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"version": TRANSCRIPT_VERSION, "fixture": self.fixture, "entries": [e.to_dict() for e in self.entries]}

    @classmethod
    def from_dict(cls, d: dict) -> "Transcript":
        if d.get("version") != TRANSCRIPT_VERSION:
            raise ValueError(f"unsupported transcript version {d.get('version')!r}")
        return cls(d.get("fixture", ""), [TranscriptEntry.from_dict(e) for e in d.get("entries", [])])

    def save(self, path: str | os.PathLike) -> None:
        atomic_write_text(path, json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Transcript":
        return cls.from_dict(json.loads(read_text(path)))


class ReplayClient(BaseClient):
    """Serves responses from a transcript, keyed by request digest.

    Repeated identical requests are served in recorded order. An unknown
    request raises ReplayMiss, so prompt drift fails loudly.
    """

    def __init__(self, transcript: Transcript):
        super().__init__()
        self.transcript = transcript
        self._table: dict[tuple[str, int], ChatResponse] = {}
        self._fallback: dict[str, ChatResponse] = {}
        for e in transcript.entries:
            self._table[(e.digest, e.repeat)] = e.response
            self._fallback.setdefault(e.digest, e.response)
        self._seen: dict[str, int] = defaultdict(int)

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "ReplayClient":
        return cls(Transcript.load(path))

    def _complete(self, req: ChatRequest) -> ChatResponse:
        digest = req.digest()
        with self._lock:
            n = self._seen[digest]
            self._seen[digest] += 1
        resp = self._table.get((digest, n))
        if resp is None:
            # a request replayed more times than recorded reuses the first answer
            resp = self._fallback.get(digest)
        if resp is None:
            raise ReplayMiss(f"no recorded response for request {digest[:12]} in fixture {self.transcript.fixture!r}")
        return resp


class RecordingClient(BaseClient):
    """Wraps another client and records every exchange into a transcript."""

    def __init__(self, inner: ChatClient, fixture: str = "recorded"):
        super().__init__()
        self.inner = inner
        self.transcript = Transcript(fixture)
        self._counts: dict[str, int] = defaultdict(int)

    def _complete(self, req: ChatRequest) -> ChatResponse:
        resp = self.inner.complete(req)
        digest = req.digest()
        with self._lock:
            repeat = self._counts[digest]
            self._counts[digest] += 1
            self.transcript.entries.append(TranscriptEntry(digest, repeat, req.to_dict(), resp))
        return resp

    def save(self, path: str | os.PathLike) -> None:
        with self._lock:
            self.transcript.save(path)


class OpenAIClient(BaseClient):
    """Live client for an OpenAI-compatible ``/chat/completions`` endpoint.

    Credentials come from the environment only. Concurrent calls are capped
    by a semaphore; each request has its own timeout.
    """

    def __init__(
        self,
        api_key: Optional[str] = None,
        api_base: Optional[str] = None,
        max_concurrency: int = 8,
        timeout: float = 120.0,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        super().__init__()
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_API_KEY)
        if not self.api_key:
            raise AuthError(f"{ENV_API_KEY} is not set")
        self.api_base = (api_base or os.environ.get(ENV_API_BASE) or DEFAULT_API_BASE).rstrip("/")
        self._sem = threading.BoundedSemaphore(max_concurrency)
        self._http = httpx.Client(timeout=timeout, transport=transport)

    def _payload(self, req: ChatRequest) -> dict:
        messages = []
        if req.system_text:
            messages.append({"role": "system", "content": req.system_text})
        messages.append({"role": "user", "content": req.user_text})
        payload: dict = {"model": req.model_name, "messages": messages}
        if req.temperature is not None:
            payload["temperature"] = req.temperature
        if req.max_output_tokens is not None:
            payload["max_tokens"] = req.max_output_tokens
        if req.json_mode:
            payload["response_format"] = {"type": "json_object"}
        return payload

    def _complete(self, req: ChatRequest) -> ChatResponse:
        with self._sem:
            t0 = time.perf_counter()
            try:
                r = self._http.post(
                    f"{self.api_base}/chat/completions",
                    json=self._payload(req),
                    headers={"Authorization": f"Bearer {self.api_key}"},
                )
            except httpx.HTTPError as e:
                raise TransportError(str(e)) from e
            latency = time.perf_counter() - t0
        if r.status_code in (401, 403):
            raise AuthError(f"endpoint rejected credentials ({r.status_code})")
        if r.status_code >= 400:
            raise TransportError(f"HTTP {r.status_code}: {r.text[:200]}")
        try:
            body = r.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise TransportError(f"unexpected response body: {r.text[:200]}") from e
        u = body.get("usage") or {}
        usage = Usage(int(u.get("prompt_tokens", 0)), int(u.get("completion_tokens", 0)))
        logger.debug("completion in %.2fs (%d in / %d out)", latency, usage.input_tokens, usage.output_tokens)
        return ChatResponse(text or "", latency, usage)

    def close(self) -> None:
        self._http.close()


def client_from_options(fixtures: Optional[str] = None, record: Optional[str] = None) -> BaseClient:
    """Replay from ``fixtures`` if given, else the live client (optionally recorded)."""
    if fixtures:
        return ReplayClient.from_file(fixtures)
    live = OpenAIClient()
    if record:
        return RecordingClient(live, fixture=Path(record).stem)
    return live
