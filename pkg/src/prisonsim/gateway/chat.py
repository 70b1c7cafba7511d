"""Chat-completion clients: an HTTP client for local model servers and a
scripted offline mock."""
from __future__ import annotations

import json
import random
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import requests

from prisonsim.errors import (
    BackendTimeout,
    ConfigurationError,
    EmptyCompletionError,
    MalformedResponseError,
    TransportError,
)
from prisonsim.gateway.ratelimit import TokenBucket
from prisonsim.matrix import DecodingParams, RunSpec
from prisonsim.prompts import Role

CHAT_ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: tuple[ChatMessage, ...]
    options: DecodingParams = DecodingParams()

    def __post_init__(self):
        if not self.messages or self.messages[0].role != "system":
            raise ValueError("first chat message must have role 'system'")
        rest = [m.role for m in self.messages[1:]]
        if any(r not in ("user", "assistant") for r in rest):
            raise ValueError("only the first message may be a system message")
        if any(a == b for a, b in zip(rest, rest[1:])):
            raise ValueError("user/assistant roles must alternate")

    def to_wire(self) -> dict:
        return {
            "model": self.model_id,
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
            "options": self.options.to_dict(),
            "stream": False,
        }

    @classmethod
    def from_wire(cls, body: dict) -> "ChatRequest":
        return cls(
            body["model"],
            tuple(ChatMessage(m["role"], m["content"]) for m in body["messages"]),
            DecodingParams(**body["options"]),
        )


@dataclass(frozen=True)
class TurnKey:
    """What a request is for; real servers ignore it, the mock keys on it."""

    run: RunSpec | None = None
    turn_index: int = 0
    author: Role | None = None
    purpose: str = "turn"  # "turn", "summary" or "speaker"


class ChatBackend(Protocol):
    def complete(self, request: ChatRequest, key: TurnKey | None = None) -> str: ...


class OllamaChatClient:
    """Non-streaming client for the ``/api/chat`` endpoint of a local model server."""

    def __init__(
        self,
        base_url: str,
        timeout: float = 120.0,
        session: requests.Session | None = None,
        rate_limiter: TokenBucket | None = None,
    ):
        self.url = base_url.rstrip("/") + "/api/chat"
        self.timeout = timeout
        self.session = session or requests.Session()
        self.rate_limiter = rate_limiter

    def complete(self, request: ChatRequest, key: TurnKey | None = None) -> str:
        if self.rate_limiter is not None:
            self.rate_limiter.acquire()
        try:
            resp = self.session.post(self.url, json=request.to_wire(), timeout=self.timeout)
        except requests.Timeout as exc:
            raise BackendTimeout(str(exc)) from exc
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code >= 400:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            content = resp.json()["message"]["content"]
        except (ValueError, KeyError, TypeError) as exc:
            raise MalformedResponseError(f"unexpected chat response: {resp.text[:200]}") from exc
        if not isinstance(content, str):
            raise MalformedResponseError("message content is not a string")
        if not content.strip():
            raise EmptyCompletionError("backend returned an empty completion")
        return content


_FAILURE_KINDS = {
    "transport": TransportError,
    "timeout": BackendTimeout,
    "malformed": MalformedResponseError,
    "empty": EmptyCompletionError,
}


class MockChatBackend:
    """Deterministic backend driven by a JSON script.

    Script keys (all optional)::

        {"completions": {"<scenario_id>": {"<turn_index>": "text"}},
         "pools": {"Guard:Abusive": [...], "Guard": [...], "Prisoner": [...]},
         "default": "{author} message {turn_index}",
         "failures": [{"scenario_id": "*", "turn": 3, "kind": "transport",
                       "times": null, "repetition": null}],
         "summary": "text returned for summary requests",
         "speaker": "Guard"}

    Lookup order for a turn: exact completion, personality pool, role pool,
    default template. Pool picks are seeded by the run seed and turn, so the
    same run always yields the same transcript. ``times: null`` makes a
    failure persistent.
    """

    def __init__(self, script: dict):
        self.script = script
        self._counts: dict[tuple, int] = {}
        self._lock = threading.Lock()
        for f in script.get("failures", []):
            if f.get("kind", "transport") not in _FAILURE_KINDS:
                raise ConfigurationError(f"unknown failure kind {f.get('kind')!r}")

    @classmethod
    def from_file(cls, path: str | Path) -> "MockChatBackend":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def _maybe_fail(self, key: TurnKey) -> None:
        sid = key.run.scenario.id if key.run else None
        rep = key.run.repetition if key.run else None
        for i, f in enumerate(self.script.get("failures", [])):
            if f.get("scenario_id", "*") not in ("*", sid):
                continue
            if f.get("repetition") not in (None, rep):
                continue
            if int(f.get("turn", -1)) != key.turn_index or key.purpose != "turn":
                continue
            counter = (i, sid, rep, key.turn_index)
            with self._lock:
                n = self._counts.get(counter, 0)
                self._counts[counter] = n + 1
            times = f.get("times")
            if times is None or n < int(times):
                raise _FAILURE_KINDS[f.get("kind", "transport")](
                    f"scripted {f.get('kind', 'transport')} failure at turn {key.turn_index}"
                )

    def complete(self, request: ChatRequest, key: TurnKey | None = None) -> str:
        key = key or TurnKey()
        if key.purpose == "summary":
            return self.script.get("summary", "Summary unavailable.")
        if key.purpose == "speaker":
            return self.script.get("speaker", "")
        self._maybe_fail(key)

        sid = key.run.scenario.id if key.run else ""
        scripted = self.script.get("completions", {}).get(sid, {})
        if str(key.turn_index) in scripted:
            text = scripted[str(key.turn_index)]
        else:
            text = self._from_pool(key)
        if not text.strip():
            raise EmptyCompletionError("scripted empty completion")
        return text

    def _from_pool(self, key: TurnKey) -> str:
        author = key.author.value if key.author else "Agent"
        pools = self.script.get("pools", {})
        candidates = None
        if key.run is not None and key.author is not None:
            personality = key.run.scenario.persona.for_role(key.author).value
            candidates = pools.get(f"{author}:{personality}")
        candidates = candidates or pools.get(author)
        if candidates:
            seed = key.run.seed if key.run else 0
            return random.Random(f"{seed}:{key.turn_index}").choice(candidates)
        template = self.script.get("default", "{author} message {turn_index}")
        return template.format(
            author=author,
            turn_index=key.turn_index,
            scenario_id=key.run.scenario.id if key.run else "",
        )


def backend_from_spec(spec: str, timeout: float = 120.0) -> ChatBackend:
    """``mock:path/to/script.json`` or an ``http(s)://`` base URL."""
    if spec.startswith("mock:"):
        path = Path(spec[len("mock:"):])
        if not path.is_file():
            raise ConfigurationError(f"mock script {path} not found")
        return MockChatBackend.from_file(path)
    if spec.startswith(("http://", "https://")):
        return OllamaChatClient(spec, timeout=timeout)
    raise ConfigurationError(f"unrecognised backend {spec!r}")
