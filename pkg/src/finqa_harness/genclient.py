"""Text generation endpoints.

``LiveClient`` speaks the common chat-completion wire format over HTTP.
``ReplayClient`` answers from a transcript file and never touches the network;
``RecordingClient`` wraps a live client and appends every new response to a
transcript so a later run can replay it.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional, Protocol, Union

import httpx

log = logging.getLogger(__name__)

ENV_BASE_URL = "FINQA_GEN_BASE_URL"
ENV_API_KEY = "FINQA_GEN_API_KEY"


@dataclass(frozen=True)
class GenParams:
    model_name: str = "llama-2-7b-chat"
    temperature: float = 0.0
    max_output_tokens: int = 512
    stop_sequences: tuple[str, ...] = ()

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")
        object.__setattr__(self, "stop_sequences", tuple(self.stop_sequences))

    def to_json(self) -> dict[str, Any]:
        d = asdict(self)
        d["stop_sequences"] = list(self.stop_sequences)
        return d


def _canonical(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def transcript_key(prompt: str, params: GenParams) -> str:
    return hashlib.sha256(_canonical({"prompt": prompt, "params": params.to_json()})).hexdigest()


# --- errors ----------------------------------------------------------------

class GenerationError(RuntimeError):
    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.context: dict[str, Any] = dict(context)

    def __str__(self) -> str:
        base = super().__str__()
        if not self.context:
            return base
        extra = ", ".join(f"{k}={v}" for k, v in sorted(self.context.items()))
        return f"{base} ({extra})"


class Timeout(GenerationError):
    pass


class HttpStatus(GenerationError):
    def __init__(self, code: int, message: str = "", **context: Any):
        self.code = code
        super().__init__(f"HTTP {code} {message}".strip(), **context)


class RateLimited(GenerationError):
    pass


class MalformedResponse(GenerationError):
    pass


class ReplayMiss(GenerationError):
    pass


class TranscriptWriteError(GenerationError):
    pass


class TranscriptConflict(GenerationError):
    pass


class TextGenerator(Protocol):
    def generate(self, prompt: str, params: GenParams) -> str: ...


# --- transcript ------------------------------------------------------------

@dataclass(frozen=True)
class TranscriptEntry:
    key: str
    prompt_digest: str
    params: dict[str, Any]
    response: str
    timestamp: str = ""

    def to_line(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, ensure_ascii=False)


class Transcript:
    """Append-only mapping from (prompt, params) digests to responses.

    When backed by a file, each new entry is appended as one JSON line.
    Lines that fail to decode are skipped on load and counted in ``bad_lines``.
    """

    def __init__(self, path: Union[str, Path, None] = None):
        self.path = Path(path) if path is not None else None
        self._entries: dict[str, TranscriptEntry] = {}
        self._lock = threading.Lock()
        self.bad_lines = 0
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        for n, line in enumerate(self.path.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                entry = TranscriptEntry(d["key"], d["prompt_digest"], d["params"], d["response"],
                                        d.get("timestamp", ""))
            except (json.JSONDecodeError, KeyError, TypeError):
                self.bad_lines += 1
                log.warning("transcript %s line %d is malformed; skipped", self.path, n)
                continue
            self._store(entry)

    def _store(self, entry: TranscriptEntry) -> bool:
        old = self._entries.get(entry.key)
        if old is not None:
            if old.response != entry.response:
                raise TranscriptConflict("a different response is already stored under this key",
                                         key=entry.key)
            return False
        self._entries[entry.key] = entry
        return True

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: str) -> Optional[str]:
        entry = self._entries.get(key)
        return None if entry is None else entry.response

    def append(self, prompt: str, params: GenParams, response: str) -> TranscriptEntry:
        entry = TranscriptEntry(
            key=transcript_key(prompt, params),
            prompt_digest=prompt_digest(prompt),
            params=params.to_json(),
            response=response,
            timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        )
        with self._lock:
            if not self._store(entry):
                return self._entries[entry.key]
            if self.path is not None:
                try:
                    with self.path.open("a", encoding="utf-8") as f:
                        f.write(entry.to_line() + "\n")
                except OSError as e:
                    del self._entries[entry.key]
                    raise TranscriptWriteError(str(e), path=str(self.path)) from e
        return entry

    def digest(self) -> str:
        """Digest of the (key, response) content; timestamps and line order do not matter."""
        pairs = sorted((k, e.response) for k, e in self._entries.items())
        return hashlib.sha256(_canonical(pairs)).hexdigest()


# --- clients ---------------------------------------------------------------

@dataclass
class LiveClient:
    base_url: str
    api_key: str = ""
    timeout_s: float = 60.0
    max_retries: int = 3
    backoff_s: float = 1.0
    max_in_flight: int = 4
    transport: Optional[httpx.BaseTransport] = None
    _sem: threading.BoundedSemaphore = field(init=False, repr=False)
    _http: httpx.Client = field(init=False, repr=False)

    def __post_init__(self):
        self._sem = threading.BoundedSemaphore(self.max_in_flight)
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        self._http = httpx.Client(base_url=self.base_url.rstrip("/"), headers=headers,
                                  timeout=self.timeout_s, transport=self.transport)

    @classmethod
    def from_env(cls, **kwargs: Any) -> "LiveClient":
        base = os.environ.get(ENV_BASE_URL)
        if not base:
            raise GenerationError(f"{ENV_BASE_URL} is not set")
        return cls(base_url=base, api_key=os.environ.get(ENV_API_KEY, ""), **kwargs)

    @staticmethod
    def request_body(prompt: str, params: GenParams) -> dict[str, Any]:
        body: dict[str, Any] = {
            "model": params.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_output_tokens,
        }
        if params.stop_sequences:
            body["stop"] = list(params.stop_sequences)
        return body

    def generate(self, prompt: str, params: GenParams) -> str:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        body = self.request_body(prompt, params)
        last: GenerationError | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_s * 2 ** (attempt - 1))
            with self._sem:
                try:
                    resp = self._http.post("/chat/completions", json=body)
                except httpx.TimeoutException as e:
                    last = Timeout(f"request timed out: {e}", attempt=attempt + 1)
                    continue
                except httpx.TransportError as e:
                    last = GenerationError(f"transport error: {e}", attempt=attempt + 1)
                    continue
            if resp.status_code == 429:
                last = RateLimited("rate limited", attempt=attempt + 1)
                continue
            if resp.status_code >= 500:
                last = HttpStatus(resp.status_code, attempt=attempt + 1)
                continue
            if resp.status_code >= 400:
                raise HttpStatus(resp.status_code, resp.text[:200])
            return self.extract_text(resp)
        assert last is not None
        raise last

    @staticmethod
    def extract_text(resp: httpx.Response) -> str:
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise MalformedResponse(f"cannot read choices[0].message.content: {e}") from None
        if not isinstance(content, str):
            raise MalformedResponse("message content is not a string")
        return content

    def close(self) -> None:
        self._http.close()


class ReplayClient:
    """Serve responses from a transcript; with no fallback, a miss is an error."""

    def __init__(self, transcript: Transcript, fallback: TextGenerator | None = None):
        self.transcript = transcript
        self.fallback = fallback

    @property
    def strict(self) -> bool:
        return self.fallback is None

    def generate(self, prompt: str, params: GenParams) -> str:
        key = transcript_key(prompt, params)
        hit = self.transcript.get(key)
        if hit is not None:
            return hit
        if self.fallback is None:
            raise ReplayMiss("no transcript entry for prompt", key=key)
        return self.fallback.generate(prompt, params)


def record(prompt: str, params: GenParams, client: TextGenerator, transcript: Transcript) -> str:
    """Generate through ``client`` unless the transcript already holds the answer."""
    stored = transcript.get(transcript_key(prompt, params))
    if stored is not None:
        return stored
    response = client.generate(prompt, params)
    transcript.append(prompt, params, response)
    return response


class RecordingClient:
    def __init__(self, client: TextGenerator, transcript: Transcript):
        self.client = client
        self.transcript = transcript

    def generate(self, prompt: str, params: GenParams) -> str:
        return record(prompt, params, self.client, self.transcript)
