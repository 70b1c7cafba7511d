"""Append-only JSON-lines document store, one file per document kind."""
from __future__ import annotations

import enum
import json
import threading
from pathlib import Path
from typing import Any, Callable, Iterable

import jsonschema

from prisonsim.errors import DuplicateDocumentError, SchemaError

SCHEMA_VERSION = 1


class Kind(str, enum.Enum):
    RUN_SPEC = "RunSpec"
    CONVERSATION = "Conversation"
    SCORE_RECORD = "ScoreRecord"
    VALIDITY_VERDICT = "ValidityVerdict"
    ANNOTATION_RECORD = "AnnotationRecord"
    RESOLVED_LABEL = "ResolvedLabel"
    METRICS = "Metrics"
    FIT_REPORT = "FitReport"


# Derived kinds may be recomputed: a changed payload under an existing key
# supersedes the old one. Primary kinds reject it.
DERIVED = {Kind.VALIDITY_VERDICT, Kind.RESOLVED_LABEL, Kind.METRICS, Kind.FIT_REPORT}

_STR = {"type": "string", "minLength": 1}
_UNIT = {"type": "number", "minimum": 0, "maximum": 1}
_SCENARIO = {
    "type": "object",
    "required": ["model_id", "guard_personality", "prisoner_personality", "oversight", "risks", "goal"],
    "properties": {
        "guard_personality": {"enum": ["Blank", "Abusive", "Respectful"]},
        "prisoner_personality": {"enum": ["Blank", "Rebellious", "Peaceful"]},
        "oversight": {"type": "boolean"},
        "risks": {"type": "boolean"},
        "goal": {"enum": ["YardTime", "Escape"]},
    },
}
_RUN = {
    "type": "object",
    "required": ["scenario_id", "scenario", "repetition", "seed"],
    "properties": {
        "scenario_id": _STR,
        "scenario": _SCENARIO,
        "repetition": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
    },
}

SCHEMAS: dict[Kind, dict] = {
    Kind.RUN_SPEC: _RUN,
    Kind.CONVERSATION: {
        "type": "object",
        "required": ["id", "run", "messages", "status"],
        "properties": {
            "id": _STR,
            "run": _RUN,
            "status": {"enum": ["Complete", "Aborted"]},
            "messages": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["turn_index", "author", "author_ordinal", "text", "created_at"],
                    "properties": {
                        "turn_index": {"type": "integer", "minimum": 1},
                        "author": {"enum": ["Guard", "Prisoner"]},
                        "text": {"type": "string"},
                    },
                },
            },
        },
    },
    Kind.SCORE_RECORD: {
        "type": "object",
        "required": ["conversation_id", "turn_index", "toxicity", "harassment", "violence", "scorer_id"],
        "properties": {
            "conversation_id": _STR,
            "turn_index": {"type": "integer", "minimum": 1},
            "toxicity": _UNIT,
            "harassment": _UNIT,
            "violence": _UNIT,
            "scorer_id": _STR,
        },
    },
    Kind.VALIDITY_VERDICT: {
        "type": "object",
        "required": ["conversation_id", "valid", "signals", "source"],
        "properties": {"valid": {"type": "boolean"}, "signals": {"type": "array"}},
    },
    Kind.ANNOTATION_RECORD: {
        "type": "object",
        "required": ["conversation_id", "annotator_id", "outcome"],
        "properties": {
            "outcome": {"enum": ["Yes", "No", "NotTried", "NA"]},
            "success_turn": {"type": ["integer", "null"], "minimum": 1, "maximum": 9},
            "layer": {"enum": [1, 2]},
        },
    },
    Kind.RESOLVED_LABEL: {
        "type": "object",
        "required": ["conversation_id", "outcome", "turn_third", "resolution"],
        "properties": {"resolution": {"enum": ["Agreed", "Adjudicated", "Pending"]}},
    },
    Kind.METRICS: {
        "type": "object",
        "required": ["conversation_id", "scorer_id", "threshold", "values"],
        "properties": {"values": {"type": "object"}},
    },
    Kind.FIT_REPORT: {
        "type": "object",
        "required": ["name", "rows"],
        "properties": {"name": _STR, "rows": {"type": "array"}},
    },
}


def document_key(kind: Kind, payload: dict) -> tuple:
    if kind is Kind.RUN_SPEC:
        return (payload["scenario_id"], payload["repetition"])
    if kind is Kind.CONVERSATION:
        return (payload["id"],)
    if kind is Kind.SCORE_RECORD:
        return (payload["conversation_id"], payload["turn_index"], payload["scorer_id"])
    if kind is Kind.VALIDITY_VERDICT:
        return (payload["conversation_id"], payload["source"])
    if kind is Kind.ANNOTATION_RECORD:
        return (payload["conversation_id"], payload["annotator_id"], payload.get("layer", 1))
    if kind is Kind.RESOLVED_LABEL:
        return (payload["conversation_id"],)
    if kind is Kind.METRICS:
        return (payload["conversation_id"], payload["scorer_id"], payload["threshold"])
    return (payload["name"],)


def encode(kind: Kind, payload: dict) -> str:
    doc = {"kind": kind.value, "schema_version": SCHEMA_VERSION, "payload": payload}
    return json.dumps(doc, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


# Built once; jsonschema.validate would re-check the meta-schema on every call.
_VALIDATORS = {}
for _kind, _schema in SCHEMAS.items():
    _cls = jsonschema.validators.validator_for(_schema)
    _cls.check_schema(_schema)
    _VALIDATORS[_kind] = _cls(_schema)


def validate(kind: Kind, payload: Any) -> None:
    error = jsonschema.exceptions.best_match(_VALIDATORS[kind].iter_errors(payload))
    if error is not None:
        raise SchemaError(f"{kind.value}: {error.message}")


def _matches(payload: dict, filters: dict) -> bool:
    scopes = [payload]
    if isinstance(payload.get("scenario"), dict):
        scopes.append(payload["scenario"])
    run = payload.get("run")
    if isinstance(run, dict):
        scopes.append(run)
        scopes.append(run.get("scenario", {}))
    for key, want in filters.items():
        for scope in scopes:
            if key in scope:
                if scope[key] != want:
                    return False
                break
        else:
            return False
    return True


class Store:
    """Directory of ``<Kind>.jsonl`` files.

    ``persist`` is idempotent: re-appending an identical document is a
    no-op. Loads return documents in insertion order; for derived kinds only
    the latest document per key is returned.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._index: dict[Kind, dict[tuple, str]] = {}

    def path(self, kind: Kind) -> Path:
        return self.root / f"{kind.value}.jsonl"

    def _read_lines(self, kind: Kind) -> list[str]:
        path = self.path(kind)
        if not path.exists():
            return []
        return [line for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]

    def _keys(self, kind: Kind) -> dict[tuple, str]:
        if kind not in self._index:
            index = {}
            for line in self._read_lines(kind):
                payload = json.loads(line)["payload"]
                index[document_key(kind, payload)] = line
            self._index[kind] = index
        return self._index[kind]

    def persist(self, kind: Kind, payload: dict) -> bool:
        """Append one document; returns False when an identical one is already stored."""
        return self.persist_many(kind, [payload]) == 1

    def persist_many(self, kind: Kind, payloads: Iterable[dict]) -> int:
        kind = Kind(kind)
        lines = []
        with self._lock:
            keys = self._keys(kind)
            for payload in payloads:
                validate(kind, payload)
                line = encode(kind, payload)
                key = document_key(kind, payload)
                if key in keys:
                    if keys[key] == line:
                        continue
                    if kind not in DERIVED:
                        raise DuplicateDocumentError(f"{kind.value} {key} already stored with different content")
                keys[key] = line
                lines.append(line)
            if lines:
                with self.path(kind).open("a", encoding="utf-8") as fh:
                    fh.write("\n".join(lines) + "\n")
        return len(lines)

    def load(
        self,
        kind: Kind,
        filters: dict | None = None,
        predicate: Callable[[dict], bool] | None = None,
    ) -> list[dict]:
        kind = Kind(kind)
        with self._lock:
            lines = self._read_lines(kind)
        docs = []
        for n, line in enumerate(lines, 1):
            doc = json.loads(line)
            if doc.get("kind") != kind.value or doc.get("schema_version") != SCHEMA_VERSION:
                raise SchemaError(f"{self.path(kind)}:{n}: unexpected kind or schema version")
            docs.append(doc["payload"])
        if kind in DERIVED:
            latest = {}
            for p in docs:
                key = document_key(kind, p)
                latest.pop(key, None)
                latest[key] = p
            docs = list(latest.values())
        if filters:
            docs = [p for p in docs if _matches(p, filters)]
        if predicate:
            docs = [p for p in docs if predicate(p)]
        return docs
