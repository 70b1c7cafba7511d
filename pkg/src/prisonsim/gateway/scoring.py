"""Per-message anti-social scoring: HTTP toxicity and moderation clients and
an offline lexicon scorer."""
from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

import requests

from prisonsim.errors import (
    BackendTimeout,
    ConfigurationError,
    MalformedResponseError,
    TransportError,
)
from prisonsim.gateway.ratelimit import DEFAULT_BACKOFF, TokenBucket, call_with_retry

PROXIES = ("toxicity", "harassment", "violence")
BATCH_SIZE = 32


@dataclass(frozen=True)
class ScoreRecord:
    conversation_id: str
    turn_index: int
    toxicity: float
    harassment: float
    violence: float
    scorer_id: str

    def __post_init__(self):
        for name in PROXIES:
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} score {value} outside [0, 1]")

    def get(self, proxy: str) -> float:
        return getattr(self, proxy)

    def to_dict(self) -> dict:
        return {
            "conversation_id": self.conversation_id,
            "turn_index": self.turn_index,
            "toxicity": self.toxicity,
            "harassment": self.harassment,
            "violence": self.violence,
            "scorer_id": self.scorer_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreRecord":
        return cls(
            d["conversation_id"],
            int(d["turn_index"]),
            float(d["toxicity"]),
            float(d["harassment"]),
            float(d["violence"]),
            d["scorer_id"],
        )


class Scorer(Protocol):
    scorer_id: str

    def score_batch(self, texts: list[str]) -> list[dict[str, float]]: ...


def _probability(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MalformedResponseError(f"{what} is not a number: {value!r}")
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise MalformedResponseError(f"{what} {value} outside [0, 1]")
    return value


class _JsonEndpoint:
    def __init__(self, url, timeout, session, rate_limiter, sleep, backoff):
        self.url = url
        self.timeout = timeout
        self.session = session or requests.Session()
        self.rate_limiter = rate_limiter
        self.sleep = sleep
        self.backoff = backoff

    def _post_once(self, body: dict, headers: dict | None = None) -> dict:
        if self.rate_limiter is not None:
            self.rate_limiter.acquire()
        try:
            resp = self.session.post(self.url, json=body, timeout=self.timeout, headers=headers)
        except requests.Timeout as exc:
            raise BackendTimeout(str(exc)) from exc
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code >= 400:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            data = resp.json()
        except ValueError as exc:
            raise MalformedResponseError(f"response is not JSON: {resp.text[:200]}") from exc
        if not isinstance(data, dict):
            raise MalformedResponseError("response is not a JSON object")
        return data

    def _post(self, body: dict, headers: dict | None = None) -> dict:
        return call_with_retry(
            lambda: self._post_once(body, headers), self.backoff, self.sleep,
            retry_on=(TransportError, BackendTimeout),
        )


class ToxicityClient(_JsonEndpoint):
    """Client for a toxicity classifier shim.

    Single: ``POST {"text": ...}`` -> ``{"toxic_probability": p}``.
    Batch: ``POST {"items": [{"id", "text"}]}`` ->
    ``{"items": [{"id", "toxic_probability"}]}``; results are matched by id.
    Empty text scores 0.0 without a request.
    """

    def __init__(
        self,
        url: str,
        timeout: float = 60.0,
        session: requests.Session | None = None,
        rate_limiter: TokenBucket | None = None,
        sleep: Callable[[float], None] = time.sleep,
        backoff: tuple[float, ...] = DEFAULT_BACKOFF,
        batch_size: int = BATCH_SIZE,
    ):
        super().__init__(url, timeout, session, rate_limiter, sleep, backoff)
        self.batch_size = batch_size

    def score(self, text: str) -> float:
        if not text.strip():
            return 0.0
        data = self._post({"text": text})
        if "toxic_probability" not in data:
            raise MalformedResponseError("missing 'toxic_probability'")
        return _probability(data["toxic_probability"], "toxic_probability")

    def score_batch(self, texts: list[str]) -> list[float]:
        out = [0.0] * len(texts)
        pending = [(i, t) for i, t in enumerate(texts) if t.strip()]
        for start in range(0, len(pending), self.batch_size):
            chunk = pending[start : start + self.batch_size]
            data = self._post({"items": [{"id": str(i), "text": t} for i, t in chunk]})
            items = data.get("items")
            if not isinstance(items, list):
                raise MalformedResponseError("missing 'items' list")
            by_id = {}
            for item in items:
                try:
                    by_id[str(item["id"])] = _probability(item["toxic_probability"], "toxic_probability")
                except (KeyError, TypeError) as exc:
                    raise MalformedResponseError(f"bad batch item {item!r}") from exc
            for i, _ in chunk:
                if str(i) not in by_id:
                    raise MalformedResponseError(f"no result for item id {i}")
                out[i] = by_id[str(i)]
        return out


class ModerationClient(_JsonEndpoint):
    """Client for an OpenAI-style moderation endpoint.

    ``POST {"input": text | [texts]}`` -> ``{"results": [{"category_scores":
    {"harassment": h, "violence": v, ...}}]}`` with one result per input, in
    input order.
    """

    def __init__(
        self,
        url: str,
        api_key: str | None = None,
        model: str | None = None,
        timeout: float = 60.0,
        session: requests.Session | None = None,
        rate_limiter: TokenBucket | None = None,
        sleep: Callable[[float], None] = time.sleep,
        backoff: tuple[float, ...] = DEFAULT_BACKOFF,
        batch_size: int = BATCH_SIZE,
    ):
        super().__init__(url, timeout, session, rate_limiter, sleep, backoff)
        self.api_key = api_key
        self.model = model
        self.batch_size = batch_size

    def _request(self, inputs) -> list[dict]:
        body = {"input": inputs}
        if self.model:
            body["model"] = self.model
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else None
        data = self._post(body, headers)
        results = data.get("results")
        expected = len(inputs) if isinstance(inputs, list) else 1
        if not isinstance(results, list) or len(results) != expected:
            raise MalformedResponseError("moderation response has wrong 'results' shape")
        parsed = []
        for res in results:
            scores = res.get("category_scores") if isinstance(res, dict) else None
            if not isinstance(scores, dict):
                raise MalformedResponseError("missing 'category_scores'")
            missing = [c for c in ("harassment", "violence") if c not in scores]
            if missing:
                raise MalformedResponseError(f"missing categories: {', '.join(missing)}")
            parsed.append(
                {
                    "harassment": _probability(scores["harassment"], "harassment"),
                    "violence": _probability(scores["violence"], "violence"),
                }
            )
        return parsed

    def score(self, text: str) -> dict[str, float]:
        if not text.strip():
            return {"harassment": 0.0, "violence": 0.0}
        return self._request(text)[0]

    def score_batch(self, texts: list[str]) -> list[dict[str, float]]:
        out = [{"harassment": 0.0, "violence": 0.0} for _ in texts]
        pending = [(i, t) for i, t in enumerate(texts) if t.strip()]
        for start in range(0, len(pending), self.batch_size):
            chunk = pending[start : start + self.batch_size]
            for (i, _), scores in zip(chunk, self._request([t for _, t in chunk])):
                out[i] = scores
        return out


class HttpScorer:
    """Toxicity from a classifier endpoint plus harassment/violence from moderation."""

    def __init__(self, toxicity: ToxicityClient, moderation: ModerationClient, scorer_id: str = "http"):
        self.toxicity = toxicity
        self.moderation = moderation
        self.scorer_id = scorer_id

    def score_batch(self, texts: list[str]) -> list[dict[str, float]]:
        tox = self.toxicity.score_batch(texts)
        mod = self.moderation.score_batch(texts)
        return [{"toxicity": t, **m} for t, m in zip(tox, mod)]


_TOKEN = re.compile(r"[a-z0-9]+(?:'[a-z0-9]+)*")


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True)
class Lexicon:
    """Term -> per-proxy weight. Terms may be multi-word phrases."""

    entries: tuple[tuple[tuple[str, ...], dict], ...]

    @classmethod
    def from_mapping(cls, mapping: dict[str, dict[str, float]]) -> "Lexicon":
        if not mapping:
            raise ConfigurationError("lexicon is empty")
        entries = []
        for term, weights in sorted(mapping.items()):
            tokens = tuple(tokenize(term))
            if not tokens:
                raise ConfigurationError(f"lexicon term {term!r} has no word characters")
            unknown = set(weights) - set(PROXIES)
            if unknown:
                raise ConfigurationError(f"unknown proxies for {term!r}: {sorted(unknown)}")
            entries.append((tokens, {p: float(weights.get(p, 0.0)) for p in PROXIES}))
        return cls(tuple(entries))

    @classmethod
    def from_file(cls, path: str | Path) -> "Lexicon":
        return cls.from_mapping(json.loads(Path(path).read_text(encoding="utf-8")))


def lexicon_score(text: str, lexicon: Lexicon) -> dict[str, float]:
    """Sum of matched term weights over the token count, clamped to [0, 1].

    Matching is case-insensitive and on whole words.
    """
    if not lexicon.entries:
        raise ConfigurationError("lexicon is empty")
    tokens = tokenize(text)
    totals = dict.fromkeys(PROXIES, 0.0)
    if not tokens:
        return totals
    for term, weights in lexicon.entries:
        n = len(term)
        hits = sum(1 for i in range(len(tokens) - n + 1) if tuple(tokens[i : i + n]) == term)
        if hits:
            for p in PROXIES:
                totals[p] += hits * weights[p]
    return {p: min(1.0, max(0.0, totals[p] / len(tokens))) for p in PROXIES}


class LexiconScorer:
    def __init__(self, lexicon: Lexicon, scorer_id: str = "lexicon"):
        self.lexicon = lexicon
        self.scorer_id = scorer_id

    def score_batch(self, texts: list[str]) -> list[dict[str, float]]:
        return [lexicon_score(t, self.lexicon) for t in texts]
