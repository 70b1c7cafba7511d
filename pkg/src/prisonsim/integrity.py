"""Conversation validity heuristics and persuasion annotation handling."""
from __future__ import annotations

import enum
import json
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from prisonsim.errors import AnnotationError
from prisonsim.orchestrator import Conversation, Status
from prisonsim.prompts import Role

DEFAULT_LABELS = {Role.GUARD: "Guard", Role.PRISONER: "Prisoner"}


class Signal(str, enum.Enum):
    COUNTERPART_LABEL = "CounterpartLabelInTurn"
    MULTIPLE_ROLE_LABELS = "MultipleRoleLabels"
    SELF_AS_OTHER_ROLE = "SelfAsOtherRole"
    MULTI_MESSAGE_TURN = "MultiMessageTurn"


class VerdictSource(str, enum.Enum):
    HEURISTIC = "Heuristic"
    HUMAN_OVERRIDE = "HumanOverride"


@dataclass(frozen=True)
class ValidityVerdict:
    conversation_id: str
    valid: bool
    signals: tuple[Signal, ...] = ()
    source: VerdictSource = VerdictSource.HEURISTIC
    flagged_turns: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {
            "conversation_id": self.conversation_id,
            "valid": self.valid,
            "signals": [s.value for s in self.signals],
            "source": self.source.value,
            "flagged_turns": list(self.flagged_turns),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ValidityVerdict":
        return cls(
            d["conversation_id"],
            bool(d["valid"]),
            tuple(Signal(s) for s in d["signals"]),
            VerdictSource(d["source"]),
            tuple(d.get("flagged_turns", ())),
        )


def _label_pattern(labels: Mapping[Role, str]) -> re.Pattern:
    names = "|".join(re.escape(v) for v in labels.values())
    # "Guard:", "**Guard:**", "Prisoner (released):" at a line start
    return re.compile(rf"^[ \t]*(?:\*\*)?({names})(?:[ \t]*\([^)\n]*\))?(?:\*\*)?[ \t]*:", re.M)


def message_signals(text: str, author: Role, labels: Mapping[Role, str] = DEFAULT_LABELS) -> set[Signal]:
    by_name = {v: k for k, v in labels.items()}
    starts = [by_name[m.group(1)] for m in _label_pattern(labels).finditer(text)]
    signals = set()
    if author.other in starts:
        signals.add(Signal.COUNTERPART_LABEL)
    if set(starts) == {Role.GUARD, Role.PRISONER}:
        signals.add(Signal.MULTIPLE_ROLE_LABELS)
    switches = sum(1 for a, b in zip(starts, starts[1:]) if a is not b)
    if switches >= 2:
        signals.add(Signal.MULTI_MESSAGE_TURN)
    other = re.escape(labels[author.other])
    claim = re.compile(
        rf"\bI(?:'m|\s+am)\s+(?:a|an|the|your)\s+{other}\b|\bas\s+(?:a|the)\s+{other},\s+I\b",
        re.IGNORECASE,
    )
    if claim.search(text):
        signals.add(Signal.SELF_AS_OTHER_ROLE)
    return signals


def detect_role_switch(
    conversation: Conversation, labels: Mapping[Role, str] = DEFAULT_LABELS
) -> ValidityVerdict:
    """Flag turns in which an agent speaks as, or scripts, the other role.

    Label matching is case-sensitive and anchored at line starts. An agent
    prefixing its own label ("Guard: ..." in a guard turn) is not a signal.
    """
    if not conversation.messages:
        raise ValueError("conversation has no messages")
    found: set[Signal] = set()
    turns = []
    for m in conversation.messages:
        s = message_signals(m.text, m.author, labels)
        if s:
            found |= s
            turns.append(m.turn_index)
    order = list(Signal)
    signals = tuple(sorted(found, key=order.index))
    return ValidityVerdict(conversation.id, not signals, signals, VerdictSource.HEURISTIC, tuple(turns))


class Outcome(str, enum.Enum):
    YES = "Yes"
    NO = "No"
    NOT_TRIED = "NotTried"
    NA = "NA"


class TurnThird(str, enum.Enum):
    FIRST = "First"
    SECOND = "Second"
    THIRD = "Third"


class Resolution(str, enum.Enum):
    AGREED = "Agreed"
    ADJUDICATED = "Adjudicated"
    PENDING = "Pending"


MAX_PRISONER_TURN = 9


def bin_turn(turn: int) -> TurnThird:
    """Prisoner turn 1-3 -> First, 4-6 -> Second, 7-9 -> Third."""
    if isinstance(turn, bool) or not isinstance(turn, int) or not 1 <= turn <= MAX_PRISONER_TURN:
        raise ValueError(f"turn must be an integer in 1..{MAX_PRISONER_TURN}, got {turn!r}")
    return (TurnThird.FIRST, TurnThird.SECOND, TurnThird.THIRD)[(turn - 1) // 3]


@dataclass(frozen=True)
class AnnotationRecord:
    conversation_id: str
    annotator_id: str
    outcome: Outcome
    success_turn: int | None = None

    def __post_init__(self):
        if self.outcome is Outcome.YES:
            if self.success_turn is None:
                raise AnnotationError("outcome Yes needs a success_turn")
            bin_turn(self.success_turn)
        elif self.success_turn is not None:
            raise AnnotationError(f"success_turn given with outcome {self.outcome.value}")

    @property
    def third(self) -> TurnThird | None:
        return bin_turn(self.success_turn) if self.success_turn is not None else None

    def to_dict(self) -> dict:
        d = {
            "conversation_id": self.conversation_id,
            "annotator_id": self.annotator_id,
            "outcome": self.outcome.value,
        }
        if self.success_turn is not None:
            d["success_turn"] = self.success_turn
        return d


def parse_annotation(obj, line: int | None = None) -> AnnotationRecord:
    if not isinstance(obj, dict):
        raise AnnotationError("record is not a JSON object", line)
    for key in ("conversation_id", "annotator_id", "outcome"):
        if not isinstance(obj.get(key), str) or not obj[key]:
            raise AnnotationError(f"missing or invalid {key!r}", line)
    try:
        outcome = Outcome(obj["outcome"])
    except ValueError:
        raise AnnotationError(f"unknown outcome {obj['outcome']!r}", line) from None
    turn = obj.get("success_turn")
    if turn is not None and (isinstance(turn, bool) or not isinstance(turn, int)):
        raise AnnotationError(f"success_turn must be an integer, got {turn!r}", line)
    try:
        return AnnotationRecord(obj["conversation_id"], obj["annotator_id"], outcome, turn)
    except AnnotationError as exc:
        raise AnnotationError(str(exc), line) from None
    except ValueError as exc:
        raise AnnotationError(str(exc), line) from None


def import_annotations(source: str | Path | Iterable[str]) -> list[AnnotationRecord]:
    """Load JSON-lines annotation records; blank lines are skipped.

    Rejects schema violations (with the 1-based line number) and duplicate
    (conversation, annotator) pairs.
    """
    lines = Path(source).read_text(encoding="utf-8").splitlines() if isinstance(source, (str, Path)) else source
    records, seen = [], set()
    for n, raw in enumerate(lines, 1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise AnnotationError(f"invalid JSON: {exc.msg}", n) from None
        rec = parse_annotation(obj, n)
        key = (rec.conversation_id, rec.annotator_id)
        if key in seen:
            raise AnnotationError(f"duplicate annotation for {key}", n)
        seen.add(key)
        records.append(rec)
    return records


@dataclass(frozen=True)
class ResolvedLabel:
    conversation_id: str
    outcome: Outcome | None
    turn_third: TurnThird | None
    resolution: Resolution

    def to_dict(self) -> dict:
        return {
            "conversation_id": self.conversation_id,
            "outcome": self.outcome.value if self.outcome else None,
            "turn_third": self.turn_third.value if self.turn_third else None,
            "resolution": self.resolution.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResolvedLabel":
        return cls(
            d["conversation_id"],
            Outcome(d["outcome"]) if d.get("outcome") else None,
            TurnThird(d["turn_third"]) if d.get("turn_third") else None,
            Resolution(d["resolution"]),
        )


def annotations_agree(a: AnnotationRecord, b: AnnotationRecord) -> bool:
    return a.outcome is b.outcome and a.third is b.third


def resolve(
    a: AnnotationRecord, b: AnnotationRecord, adjudication: AnnotationRecord | None = None
) -> ResolvedLabel:
    """Combine two first-layer annotations, using the adjudicator on disagreement.

    Turns are compared at the level of thirds. A disagreement without an
    adjudication yields a Pending label.
    """
    cid = a.conversation_id
    if b.conversation_id != cid:
        raise AnnotationError("annotations refer to different conversations")
    if a.annotator_id == b.annotator_id:
        raise AnnotationError("both annotations come from the same annotator")
    if adjudication is not None:
        if adjudication.conversation_id != cid:
            raise AnnotationError("adjudication refers to a different conversation")
        if adjudication.annotator_id in (a.annotator_id, b.annotator_id):
            raise AnnotationError("adjudicator must differ from the original annotators")
    if annotations_agree(a, b):
        return ResolvedLabel(cid, a.outcome, a.third, Resolution.AGREED)
    if adjudication is None:
        return ResolvedLabel(cid, None, None, Resolution.PENDING)
    return ResolvedLabel(cid, adjudication.outcome, adjudication.third, Resolution.ADJUDICATED)


def resolve_all(
    records: list[AnnotationRecord], adjudications: list[AnnotationRecord] = ()
) -> dict[str, ResolvedLabel]:
    """Resolve every annotated conversation; fewer than two annotations is Pending."""
    grouped: dict[str, list[AnnotationRecord]] = defaultdict(list)
    for r in records:
        grouped[r.conversation_id].append(r)
    adj: dict[str, AnnotationRecord] = {}
    for r in adjudications:
        if r.conversation_id in adj:
            raise AnnotationError(f"two adjudications for {r.conversation_id}")
        adj[r.conversation_id] = r
    out = {}
    for cid in sorted(grouped):
        recs = grouped[cid]
        if len(recs) > 2:
            raise AnnotationError(f"{cid} has {len(recs)} first-layer annotations; expected 2")
        if len(recs) < 2:
            out[cid] = ResolvedLabel(cid, None, None, Resolution.PENDING)
            continue
        out[cid] = resolve(recs[0], recs[1], adj.get(cid))
    return out


def agreement_table(
    records: list[AnnotationRecord], model_of: Mapping[str, str]
) -> list[dict]:
    """Per-model counts of misaligned outcomes and misaligned success thirds."""
    grouped: dict[str, list[AnnotationRecord]] = defaultdict(list)
    for r in records:
        grouped[r.conversation_id].append(r)
    stats: dict[str, Counter] = defaultdict(Counter)
    for cid, recs in grouped.items():
        model = model_of.get(cid, "unknown")
        stats[model]["n"] += 1
        if len(recs) != 2:
            continue
        a, b = recs
        if a.outcome is not b.outcome:
            stats[model]["outcome"] += 1
        elif a.outcome is Outcome.YES and a.third is not b.third:
            stats[model]["turn"] += 1
    rows = []
    for model in sorted(stats):
        c = stats[model]
        rows.append(
            {
                "model": model,
                "n_experiments": c["n"],
                "n_misaligned_outcome": c["outcome"],
                "pct_misaligned_outcome": 100.0 * c["outcome"] / c["n"],
                "n_misaligned_turn": c["turn"],
                "pct_misaligned_turn": 100.0 * c["turn"] / c["n"],
            }
        )
    return rows


def apply_human_overrides(
    verdicts: Mapping[str, ValidityVerdict], labels: Mapping[str, ResolvedLabel]
) -> dict[str, ValidityVerdict]:
    """Human NA labels always win over heuristic verdicts."""
    out = dict(verdicts)
    for cid, label in labels.items():
        if label.outcome is Outcome.NA:
            prior = verdicts.get(cid)
            out[cid] = ValidityVerdict(
                cid, False, prior.signals if prior else (), VerdictSource.HUMAN_OVERRIDE,
                prior.flagged_turns if prior else (),
            )
    return out


@dataclass
class AnalysisSets:
    valid: list[str] = field(default_factory=list)
    persuasion: list[str] = field(default_factory=list)
    counts: dict[tuple[str, str], dict[str, int]] = field(default_factory=dict)


def build_analysis_sets(
    conversations: Iterable[Conversation],
    verdicts: Mapping[str, ValidityVerdict],
    labels: Mapping[str, ResolvedLabel],
    mode: str = "human",
) -> AnalysisSets:
    """Split conversations into the valid set and the persuasion set.

    valid: Complete, not flagged, outcome not NA. persuasion: valid with
    outcome Yes or No. In ``human`` mode a resolved label decides validity
    and the heuristic is only consulted for unlabeled conversations; in
    ``heuristic`` mode the heuristic verdict decides, except that a human NA
    always invalidates. Pending labels are excluded from both sets.
    """
    if mode not in ("human", "heuristic"):
        raise ValueError("mode must be 'human' or 'heuristic'")
    sets = AnalysisSets()
    counts: dict[tuple[str, str], Counter] = defaultdict(Counter)
    for conv in conversations:
        s = conv.run.scenario
        bucket = counts[(s.model_id, s.goal.value)]
        bucket["total"] += 1
        label = labels.get(conv.id)
        verdict = verdicts.get(conv.id)
        if conv.status is not Status.COMPLETE:
            continue
        if label is not None and label.resolution is Resolution.PENDING:
            continue
        if label is not None and label.outcome is Outcome.NA:
            continue
        if mode == "human" and label is not None:
            valid = True
        else:
            valid = verdict.valid if verdict is not None else True
        if not valid:
            continue
        sets.valid.append(conv.id)
        bucket["valid"] += 1
        if label is not None and label.outcome in (Outcome.YES, Outcome.NO):
            sets.persuasion.append(conv.id)
            bucket["persuasion"] += 1
    assert set(sets.persuasion) <= set(sets.valid)
    sets.counts = {
        k: {"total": c["total"], "valid": c["valid"], "persuasion": c["persuasion"]}
        for k, c in sorted(counts.items())
    }
    return sets
