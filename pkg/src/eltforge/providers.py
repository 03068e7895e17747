"""Model-call abstraction: one contract, three implementations.

The scripted provider replays canned responses in call order (the whole
primary test suite runs on it alone); the replay provider looks up recorded
responses by request hash; the HTTP provider talks to an OpenAI-compatible
chat-completions endpoint with retry and backoff. Credentials come from the
environment and are never logged.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import requests


class ProviderUnavailable(RuntimeError):
    """The provider cannot produce a response (network down, script exhausted)."""


class ProviderMalformed(RuntimeError):
    """The provider answered, but violated the response contract."""


@dataclass(frozen=True)
class Message:
    role: str  # system | user | assistant
    content: str


@dataclass(frozen=True)
class Usage:
    prompt_tokens: int = 0
    completion_tokens: int = 0


@dataclass(frozen=True)
class ProviderRequest:
    messages: tuple[Message, ...]
    response_format: str = "text"  # text | json_object
    max_tokens: int = 1024
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("request needs at least one message")

    def canonical_hash(self) -> str:
        payload = {
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
            "response_format": self.response_format,
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ProviderResponse:
    text: str
    finish_reason: str = "stop"
    usage: Usage = Usage()


def _check_contract(req: ProviderRequest, resp: ProviderResponse) -> ProviderResponse:
    if req.response_format == "json_object":
        try:
            json.loads(resp.text)
        except json.JSONDecodeError as exc:
            raise ProviderMalformed(f"expected JSON object, got: {resp.text[:80]!r}") from exc
    return resp


class ScriptedProvider:
    """Replays a fixed response sequence keyed by (session, call index).

    The fixture is either a flat list of response texts or a mapping
    ``{"sessions": {name: [texts...]}}``. Exhausting the script raises
    ProviderUnavailable, which downstream code treats as a failed session.
    """

    def __init__(self, fixture: Sequence[str] | dict | Path | str, session: str = "default"):
        if isinstance(fixture, (str, Path)):
            fixture = json.loads(Path(fixture).read_text(encoding="utf-8"))
        if isinstance(fixture, dict):
            responses = fixture.get("sessions", {}).get(session)
            if responses is None:
                raise ProviderUnavailable(f"no scripted responses for session {session!r}")
        else:
            responses = list(fixture)
        self._responses: list[str] = list(responses)
        self._index = 0
        self.session = session

    @property
    def calls_made(self) -> int:
        return self._index

    def advance(self, n: int) -> None:
        """Skip past n already-consumed responses (trace replay recovery)."""
        self._index = min(len(self._responses), self._index + max(0, n))

    def complete(self, req: ProviderRequest) -> ProviderResponse:
        if self._index >= len(self._responses):
            raise ProviderUnavailable(
                f"scripted fixture exhausted after {self._index} call(s)"
            )
        text = self._responses[self._index]
        self._index += 1
        return _check_contract(req, ProviderResponse(text=text))


class ReplayProvider:
    """Returns recorded responses matched by canonical request hash."""

    def __init__(self, fixture: dict[str, str] | Path | str):
        if isinstance(fixture, (str, Path)):
            fixture = json.loads(Path(fixture).read_text(encoding="utf-8"))
        self._by_hash: dict[str, str] = dict(fixture)

    def complete(self, req: ProviderRequest) -> ProviderResponse:
        key = req.canonical_hash()
        if key not in self._by_hash:
            raise ProviderUnavailable(f"no recorded response for request {key[:12]}")
        return _check_contract(req, ProviderResponse(text=self._by_hash[key]))


class HttpProvider:
    """OpenAI-compatible chat-completions client with bounded retry.

    Network failures and 5xx responses are retried with exponential backoff
    (3 attempts, 500 ms base); a response that keeps violating the JSON
    contract becomes ProviderMalformed instead.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        credential_env: str = "ELTFORGE_API_KEY",
        timeout: float = 60.0,
        max_attempts: int = 3,
        backoff_base: float = 0.5,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.credential_env = credential_env
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self._session = session or requests.Session()
        self._sleep = sleep

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.credential_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, req: ProviderRequest) -> ProviderResponse:
        payload: dict[str, Any] = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in req.messages],
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
        }
        if req.response_format == "json_object":
            payload["response_format"] = {"type": "json_object"}

        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                self._sleep(self.backoff_base * (2 ** (attempt - 1)))
            try:
                http = self._session.post(
                    f"{self.base_url}/chat/completions",
                    json=payload,
                    headers=self._headers(),
                    timeout=self.timeout,
                )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if http.status_code >= 500:
                last_error = ProviderUnavailable(f"server error {http.status_code}")
                continue
            if http.status_code >= 400:
                raise ProviderUnavailable(f"request rejected: {http.status_code}")
            try:
                body = http.json()
                choice = body["choices"][0]
                resp = ProviderResponse(
                    text=choice["message"]["content"],
                    finish_reason=choice.get("finish_reason", "stop"),
                    usage=Usage(
                        prompt_tokens=body.get("usage", {}).get("prompt_tokens", 0),
                        completion_tokens=body.get("usage", {}).get("completion_tokens", 0),
                    ),
                )
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                last_error = ProviderMalformed(f"bad completion payload: {exc}")
                continue
            try:
                return _check_contract(req, resp)
            except ProviderMalformed as exc:
                last_error = exc
                continue
        if isinstance(last_error, ProviderMalformed):
            raise last_error
        raise ProviderUnavailable(str(last_error or "no attempts made"))
