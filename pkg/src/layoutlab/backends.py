"""Text-generation backends behind one small interface: a scripted mock,
a record/replay fixture store, and a remote chat-completion HTTP client.

The decoder never depends on which implementation it talks to; swapping
backends changes no signatures. With the replay backend the whole
pipeline becomes a pure function of (inputs, fixtures, config).
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, runtime_checkable

import requests

from .errors import BackendUnavailable, FixtureMissing, ScriptExhausted

logger = logging.getLogger(__name__)

API_KEY_ENV = "LAYOUTLAB_API_KEY"
DEFAULT_STOP = ("\n", ")")
DEFAULT_TIMEOUT = 60.0


@dataclass(frozen=True)
class GenerationRequest:
    """One completion request; the context already ends in the forced prefix."""

    context: str
    stop_tokens: tuple[str, ...] = DEFAULT_STOP
    max_tokens: int = 48
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if not self.context:
            raise ValueError("context must be non-empty")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class GenerationResponse:
    text: str
    backend_id: str
    latency_ms: float = 0.0


@runtime_checkable
class GenerationBackend(Protocol):
    backend_id: str

    def complete(self, request: GenerationRequest) -> GenerationResponse: ...


class ScriptedBackend:
    """Returns pre-scripted completions in order; single consumer."""

    def __init__(self, script: Iterable[str], backend_id: str = "mock") -> None:
        self._script = deque(script)
        self.backend_id = backend_id

    @property
    def remaining(self) -> int:
        return len(self._script)

    def complete(self, request: GenerationRequest) -> GenerationResponse:
        if not self._script:
            raise ScriptExhausted(f"scripted backend {self.backend_id!r} has no completions left")
        return GenerationResponse(text=self._script.popleft(), backend_id=self.backend_id)


def request_key(request: GenerationRequest) -> str:
    """Stable fixture key: hex digest over (context, temperature, max_tokens)."""
    payload = json.dumps(
        {
            "context": request.context,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        },
        sort_keys=True,
        ensure_ascii=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ReplayStore:
    """Directory of fixture files, one JSON file per request key."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)

    def path_for(self, key: str) -> Path:
        return self.root / f"{key}.json"

    def __contains__(self, request: GenerationRequest) -> bool:
        return self.path_for(request_key(request)).exists()

    def load(self, request: GenerationRequest) -> GenerationResponse:
        key = request_key(request)
        path = self.path_for(key)
        if not path.exists():
            raise FixtureMissing(f"no fixture {key} under {self.root}")
        data = json.loads(path.read_text(encoding="utf-8"))
        stored = data["response"]
        return GenerationResponse(
            text=stored["text"],
            backend_id=stored.get("backend_id", "replay"),
            latency_ms=float(stored.get("latency_ms", 0.0)),
        )

    def save(self, request: GenerationRequest, response: GenerationResponse) -> str:
        key = request_key(request)
        path = self.path_for(key)
        if path.exists():
            logger.warning("overwriting fixture %s", key)
        self.root.mkdir(parents=True, exist_ok=True)
        payload = {
            "request": {
                "context": request.context,
                "stop_tokens": list(request.stop_tokens),
                "max_tokens": request.max_tokens,
                "temperature": request.temperature,
            },
            "response": {
                "text": response.text,
                "backend_id": response.backend_id,
                "latency_ms": response.latency_ms,
            },
        }
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return key


def record_fixture(
    request: GenerationRequest, response: GenerationResponse, store: ReplayStore
) -> str:
    """Persist a response under its request key; replay then returns it."""
    return store.save(request, response)


class ReplayBackend:
    """Deterministic playback of recorded fixtures; missing keys are errors."""

    def __init__(self, store: ReplayStore | str | Path, backend_id: str = "replay") -> None:
        self.store = store if isinstance(store, ReplayStore) else ReplayStore(store)
        self.backend_id = backend_id

    def complete(self, request: GenerationRequest) -> GenerationResponse:
        return self.store.load(request)


class RecordingBackend:
    """Pass-through wrapper that records every (request, response) pair."""

    def __init__(self, inner: GenerationBackend, store: ReplayStore | str | Path) -> None:
        self.inner = inner
        self.store = store if isinstance(store, ReplayStore) else ReplayStore(store)
        self.backend_id = f"recording:{inner.backend_id}"

    def complete(self, request: GenerationRequest) -> GenerationResponse:
        response = self.inner.complete(request)
        record_fixture(request, response, self.store)
        return response


class RemoteBackend:
    """Client for a chat-completion style JSON endpoint.

    Sends {model, messages, max_tokens, temperature, stop} and reads
    choices[0].message.content. One retry with jitter, then
    BackendUnavailable.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        timeout: float = DEFAULT_TIMEOUT,
        session: requests.Session | None = None,
    ) -> None:
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.timeout = timeout
        self.session = session or requests.Session()
        self.backend_id = f"remote:{model}"

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def complete(self, request: GenerationRequest) -> GenerationResponse:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": request.context}],
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
            "stop": list(request.stop_tokens),
        }
        last_error: Exception | None = None
        for attempt in range(2):
            if attempt:
                time.sleep(random.uniform(0.1, 0.5))
            start = time.perf_counter()
            try:
                http = self.session.post(
                    self.endpoint,
                    json=payload,
                    headers=self._headers(),
                    timeout=self.timeout,
                )
                http.raise_for_status()
                data = http.json()
                text = data["choices"][0]["message"]["content"]
            except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
                last_error = exc
                logger.warning("remote completion attempt %d failed: %s", attempt + 1, exc)
                continue
            latency_ms = (time.perf_counter() - start) * 1000.0
            return GenerationResponse(text=text, backend_id=self.backend_id, latency_ms=latency_ms)
        raise BackendUnavailable(f"endpoint {self.endpoint} unreachable: {last_error}")
