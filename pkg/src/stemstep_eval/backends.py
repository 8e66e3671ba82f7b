"""Text-generation backends behind one ``generate(prompt, params)`` contract.

The HTTP backend speaks the OpenAI-style chat-completions wire format and
never retries internally — retry policy belongs to the harness, which is
the single place attempts are counted. The stub backends exist so the
whole pipeline runs deterministically in tests.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import httpx

RETRYABLE_STATUSES = frozenset({408, 429, 500, 502, 503, 504})
NO_MATCH = "NO_MATCH"


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.7
    repetition_penalty: float = 1.1
    max_tokens: int = 1024
    seed: Optional[int] = None
    model_name: str = "mistral-7b"

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if self.repetition_penalty < 1.0:
            raise ValueError(
                f"repetition_penalty must be >= 1.0 (1.0 disables it), got {self.repetition_penalty}"
            )
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be >= 1, got {self.max_tokens}")


@dataclass(frozen=True)
class GenerationResult:
    text: str
    latency_ms: int
    backend_id: str
    raw_finish_reason: str = ""


class BackendError(Exception):
    """Base for generation failures; carries enough context for the
    harness retry policy."""

    def __init__(self, message: str, backend_id: str, retryable: bool):
        super().__init__(message)
        self.backend_id = backend_id
        self.retryable = retryable


class TransportError(BackendError):
    def __init__(self, message: str, backend_id: str):
        super().__init__(message, backend_id, retryable=True)


class GenerationTimeout(BackendError):
    def __init__(self, message: str, backend_id: str):
        super().__init__(message, backend_id, retryable=True)


class RemoteStatusError(BackendError):
    def __init__(self, status: int, body: str, backend_id: str):
        super().__init__(
            f"{backend_id}: remote returned status {status}",
            backend_id,
            retryable=status in RETRYABLE_STATUSES,
        )
        self.status = status
        self.body = body


class MalformedResponseError(BackendError):
    def __init__(self, message: str, backend_id: str):
        super().__init__(message, backend_id, retryable=False)


class BackendConfigError(ValueError):
    pass


def frequency_penalty_for(repetition_penalty: float) -> float:
    """Map a multiplicative repetition penalty onto the additive
    frequency_penalty knob (capped at 2.0); lossy but keeps one config knob."""
    return min(2.0, 2.0 * (repetition_penalty - 1.0))


class HttpChatBackend:
    """OpenAI-compatible chat-completions client.

    Shareable across harness workers; one underlying connection pool.
    """

    def __init__(
        self,
        endpoint: str,
        api_key: str = "",
        timeout_ms: int = 30000,
        max_connections: int = 16,
    ):
        if not endpoint or not endpoint.startswith(("http://", "https://")):
            raise BackendConfigError(f"invalid chat endpoint: {endpoint!r}")
        if timeout_ms < 1:
            raise BackendConfigError(f"timeout_ms must be >= 1, got {timeout_ms}")
        self.endpoint = endpoint
        self.backend_id = f"http:{endpoint}"
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(
            timeout=timeout_ms / 1000.0,
            headers=headers,
            limits=httpx.Limits(max_connections=max_connections),
        )

    def generate(self, prompt: str, params: GenerationParams) -> GenerationResult:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        body = {
            "model": params.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
            "frequency_penalty": frequency_penalty_for(params.repetition_penalty),
        }
        if params.seed is not None:
            body["seed"] = params.seed
        started = time.monotonic()
        try:
            response = self._client.post(self.endpoint, json=body)
        except httpx.TimeoutException as exc:
            raise GenerationTimeout(f"{self.backend_id}: {exc}", self.backend_id) from exc
        except httpx.TransportError as exc:
            raise TransportError(f"{self.backend_id}: {exc}", self.backend_id) from exc
        latency_ms = int((time.monotonic() - started) * 1000)
        if response.status_code != 200:
            raise RemoteStatusError(response.status_code, response.text, self.backend_id)
        try:
            payload = response.json()
            choice = payload["choices"][0]
            text = choice["message"]["content"]
            finish = choice.get("finish_reason") or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError(
                f"{self.backend_id}: unexpected response shape: {exc!r}", self.backend_id
            ) from exc
        if not isinstance(text, str):
            raise MalformedResponseError(
                f"{self.backend_id}: message content is not a string", self.backend_id
            )
        return GenerationResult(
            text=text, latency_ms=latency_ms, backend_id=self.backend_id, raw_finish_reason=finish
        )

    def close(self) -> None:
        self._client.close()


class StubBackend:
    """Deterministic in-process backend.

    Scripted mode replies with the first (pattern, reply) whose pattern is
    a substring of the prompt, else the NO_MATCH sentinel. Echo mode
    returns the prompt. Every call is logged for test inspection.
    """

    def __init__(
        self,
        script: Optional[Sequence[tuple[str, str]]] = None,
        mode: str = "scripted",
    ):
        if mode not in ("scripted", "echo"):
            raise BackendConfigError(f"unknown stub mode {mode!r}")
        if mode == "scripted" and not script:
            raise BackendConfigError("scripted stub needs a non-empty script")
        self.mode = mode
        self.script = list(script or [])
        self.backend_id = f"stub-{mode}"
        self._lock = threading.Lock()
        self._calls: list[str] = []

    def generate(self, prompt: str, params: GenerationParams) -> GenerationResult:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        with self._lock:
            self._calls.append(prompt)
        if self.mode == "echo":
            text = prompt
        else:
            text = NO_MATCH
            for pattern, reply in self.script:
                if pattern in prompt:
                    text = reply
                    break
        return GenerationResult(text=text, latency_ms=0, backend_id=self.backend_id)

    @property
    def calls(self) -> list[str]:
        with self._lock:
            return list(self._calls)


class SequenceBackend:
    """Stub that replays a fixed list of replies in call order, sticking on
    the last one; drives regeneration-gate tests that need the same prompt
    to get different texts per attempt."""

    def __init__(self, replies: Sequence[str]):
        if not replies:
            raise BackendConfigError("sequence stub needs at least one reply")
        self.replies = list(replies)
        self.backend_id = "stub-sequence"
        self._lock = threading.Lock()
        self._calls: list[str] = []

    def generate(self, prompt: str, params: GenerationParams) -> GenerationResult:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        with self._lock:
            self._calls.append(prompt)
            index = min(len(self._calls) - 1, len(self.replies) - 1)
        return GenerationResult(
            text=self.replies[index], latency_ms=0, backend_id=self.backend_id
        )

    @property
    def calls(self) -> list[str]:
        with self._lock:
            return list(self._calls)
