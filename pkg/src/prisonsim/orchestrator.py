"""Turn-based guard/prisoner conversations against a chat backend."""
from __future__ import annotations

import enum
import random
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Callable, Iterator

from prisonsim.errors import BackendError, ConfigurationError, EmptyCompletionError
from prisonsim.gateway.chat import ChatBackend, ChatMessage, ChatRequest, TurnKey
from prisonsim.gateway.ratelimit import DEFAULT_BACKOFF, call_with_retry
from prisonsim.matrix import DecodingParams, RunSpec
from prisonsim.prompts import (
    AgentProfile,
    PromptSection,
    Role,
    Sharing,
    assemble_system_prompt,
    build_profile,
    render_sections,
    with_extra_section,
)

Clock = Callable[[int], str]


def wall_clock(turn_index: int) -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def logical_clock(turn_index: int) -> str:
    """Replay-stable timestamps: the epoch plus one second per turn."""
    stamp = datetime(1970, 1, 1, tzinfo=timezone.utc) + timedelta(seconds=turn_index)
    return stamp.isoformat()


class SpeakerSelection(str, enum.Enum):
    ROUND_ROBIN = "round-robin"
    RANDOM = "random"
    MANUAL = "manual"
    AUTO = "auto"


class Status(str, enum.Enum):
    COMPLETE = "Complete"
    ABORTED = "Aborted"


@dataclass(frozen=True)
class Limits:
    guard: int = 10
    prisoner: int = 9

    def quota(self, role: Role) -> int:
        return self.guard if role is Role.GUARD else self.prisoner


@dataclass(frozen=True)
class Message:
    conversation_id: str
    turn_index: int
    author: Role
    author_ordinal: int
    text: str
    created_at: str

    def to_dict(self) -> dict:
        return {
            "conversation_id": self.conversation_id,
            "turn_index": self.turn_index,
            "author": self.author.value,
            "author_ordinal": self.author_ordinal,
            "text": self.text,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Message":
        return cls(
            d["conversation_id"],
            int(d["turn_index"]),
            Role(d["author"]),
            int(d["author_ordinal"]),
            d["text"],
            d["created_at"],
        )


@dataclass
class Conversation:
    id: str
    run: RunSpec
    messages: list[Message] = field(default_factory=list)
    status: Status = Status.COMPLETE
    abort_reason: str | None = None
    day: int = 1
    summary: str | None = None

    def by_author(self, role: Role) -> list[Message]:
        return [m for m in self.messages if m.author is role]

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "run": self.run.to_dict(),
            "messages": [m.to_dict() for m in self.messages],
            "status": self.status.value,
            "abort_reason": self.abort_reason,
            "day": self.day,
            "summary": self.summary,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Conversation":
        return cls(
            d["id"],
            RunSpec.from_dict(d["run"]),
            [Message.from_dict(m) for m in d["messages"]],
            Status(d["status"]),
            d.get("abort_reason"),
            int(d.get("day", 1)),
            d.get("summary"),
        )


def check_turn_structure(conversation: Conversation, limits: Limits = Limits()) -> list[str]:
    """Problems with the alternation protocol; empty when the transcript is well formed."""
    problems = []
    indexes = [m.turn_index for m in conversation.messages]
    if indexes != list(range(1, len(indexes) + 1)):
        problems.append("turn indexes are not 1..n in order")
    for m in conversation.messages:
        expected = Role.GUARD if m.turn_index % 2 == 1 else Role.PRISONER
        ordinal = (m.turn_index + 1) // 2 if expected is Role.GUARD else m.turn_index // 2
        if m.author is not expected or m.author_ordinal != ordinal:
            problems.append(f"turn {m.turn_index} breaks alternation")
    if conversation.status is Status.COMPLETE:
        if len(conversation.messages) != limits.guard + limits.prisoner:
            problems.append("complete conversation has the wrong number of messages")
    return problems


_SPEAKER_PROMPT = (
    "You coordinate a conversation between a guard and a prisoner. "
    "Reply with exactly one word, Guard or Prisoner, naming who should speak next."
)
_ROLE_WORD = re.compile(r"\b(guard|prisoner)\b", re.IGNORECASE)


def _parse_role(text: str) -> Role | None:
    found = {m.lower() for m in _ROLE_WORD.findall(text)}
    if len(found) != 1:
        return None
    return Role.GUARD if found.pop() == "guard" else Role.PRISONER


def next_speaker(
    method: SpeakerSelection,
    history: list[Role],
    seed: int = 0,
    directives: Iterator[str] | None = None,
    backend: ChatBackend | None = None,
    transcript: list[Message] | None = None,
    model_id: str = "",
    run: RunSpec | None = None,
) -> Role:
    """Choose who speaks next.

    Round-robin starts with the guard and alternates. Random is a pure
    function of ``seed`` and the history length. Manual consumes one line
    from ``directives``. Auto asks the backend and falls back to round-robin
    when the answer does not name exactly one role.
    """
    round_robin = Role.GUARD if not history else history[-1].other
    if method is SpeakerSelection.ROUND_ROBIN:
        return round_robin
    if method is SpeakerSelection.RANDOM:
        return random.Random(f"{seed}:{len(history)}").choice([Role.GUARD, Role.PRISONER])
    if method is SpeakerSelection.MANUAL:
        if directives is None:
            raise ConfigurationError("manual speaker selection needs a directive source")
        try:
            line = next(directives)
        except StopIteration:
            raise ConfigurationError("no manual speaker directive available") from None
        role = _parse_role(line) or {"g": Role.GUARD, "p": Role.PRISONER}.get(line.strip().lower())
        if role is None:
            raise ConfigurationError(f"unrecognised speaker directive {line.strip()!r}")
        return role
    if method is SpeakerSelection.AUTO:
        if backend is None:
            return round_robin
        lines = [f"{m.author.value}: {m.text}" for m in transcript or []]
        request = ChatRequest(
            model_id,
            (
                ChatMessage("system", _SPEAKER_PROMPT),
                ChatMessage("user", "\n".join(lines) or "(no messages yet)"),
            ),
        )
        try:
            answer = backend.complete(request, TurnKey(run, len(history) + 1, None, "speaker"))
        except BackendError:
            return round_robin
        return _parse_role(answer) or round_robin
    raise ConfigurationError(f"unknown speaker selection {method!r}")


def build_turn_request(
    messages: list[Message], profile: AgentProfile, decoding: DecodingParams, model_id: str
) -> ChatRequest:
    """Project the shared transcript onto one agent's point of view.

    The agent's own messages become ``assistant`` turns and the counterpart's
    ``user`` turns. Consecutive messages from the same side (possible with
    non-alternating speaker selection) are merged with a blank line.
    """
    chat = [ChatMessage("system", assemble_system_prompt(profile))]
    for m in messages:
        role = "assistant" if m.author is profile.role else "user"
        if len(chat) > 1 and chat[-1].role == role:
            chat[-1] = ChatMessage(role, f"{chat[-1].content}\n\n{m.text}")
        else:
            chat.append(ChatMessage(role, m.text))
    return ChatRequest(model_id, tuple(chat), decoding)


def profiles_for(run: RunSpec) -> dict[Role, AgentProfile]:
    s = run.scenario
    return {
        role: build_profile(role, s.persona, s.goal, s.oversight, s.risks)
        for role in (Role.GUARD, Role.PRISONER)
    }


def run_conversation(
    run: RunSpec,
    backend: ChatBackend,
    decoding: DecodingParams = DecodingParams(),
    limits: Limits = Limits(),
    *,
    speaker: SpeakerSelection = SpeakerSelection.ROUND_ROBIN,
    directives: Iterator[str] | None = None,
    profiles: dict[Role, AgentProfile] | None = None,
    conversation_id: str | None = None,
    clock: Clock = wall_clock,
    sleep: Callable[[float], None] = time.sleep,
    backoff: tuple[float, ...] = DEFAULT_BACKOFF,
) -> Conversation:
    if limits.guard < 1 or limits.prisoner < 0:
        raise ConfigurationError("limits need at least one guard message")
    profiles = profiles or profiles_for(run)
    conv = Conversation(conversation_id or run.conversation_id, run)
    counts = {Role.GUARD: 0, Role.PRISONER: 0}
    history: list[Role] = []
    model_id = run.scenario.model_id

    while counts[Role.GUARD] < limits.guard or counts[Role.PRISONER] < limits.prisoner:
        role = next_speaker(
            speaker, history, run.seed, directives, backend, conv.messages, model_id, run
        )
        if counts[role] >= limits.quota(role):
            role = role.other
        turn_index = len(conv.messages) + 1
        request = build_turn_request(conv.messages, profiles[role], decoding, model_id)
        key = TurnKey(run, turn_index, role)

        def attempt() -> str:
            text = backend.complete(request, key).rstrip()
            if not text:
                raise EmptyCompletionError("completion is empty after stripping")
            return text

        try:
            text = call_with_retry(attempt, backoff, sleep)
        except EmptyCompletionError:
            conv.status, conv.abort_reason = Status.ABORTED, "empty_completion"
            return conv
        except BackendError:
            conv.status, conv.abort_reason = Status.ABORTED, "backend"
            return conv

        counts[role] += 1
        history.append(role)
        conv.messages.append(
            Message(conv.id, turn_index, role, counts[role], text, clock(turn_index))
        )
    return conv


def render_transcript(conversation: Conversation) -> str:
    return "\n".join(f"{m.author.value}: {m.text}" for m in conversation.messages)


def summarize_day(
    conversation: Conversation,
    summarizer_sections: list[PromptSection] | list[str],
    backend: ChatBackend,
    decoding: DecodingParams = DecodingParams(),
    *,
    sleep: Callable[[float], None] = time.sleep,
    backoff: tuple[float, ...] = DEFAULT_BACKOFF,
) -> str:
    """Ask the backend for a summary of a complete conversation.

    Backend errors propagate; the conversation itself is left untouched.
    """
    if not summarizer_sections:
        raise ConfigurationError("summarizer sections are empty")
    if conversation.status is not Status.COMPLETE:
        raise ConfigurationError("only complete conversations can be summarized")
    sections = [
        s if isinstance(s, PromptSection) else PromptSection("", s, Sharing.SHARED)
        for s in summarizer_sections
    ]
    request = ChatRequest(
        conversation.run.scenario.model_id,
        (
            ChatMessage("system", render_sections(sections)),
            ChatMessage("user", render_transcript(conversation)),
        ),
        decoding,
    )
    key = TurnKey(conversation.run, 0, None, "summary")
    return call_with_retry(lambda: backend.complete(request, key).strip(), backoff, sleep)


SUMMARY_TITLE = "PREVIOUS DAYS"


def run_days(
    run: RunSpec,
    backend: ChatBackend,
    days: int,
    summarizer_sections: list[PromptSection] | list[str],
    decoding: DecodingParams = DecodingParams(),
    limits: Limits = Limits(),
    **kwargs,
) -> list[Conversation]:
    """Chain ``days`` conversations; each day's prompts carry earlier summaries.

    Stops early if a day is aborted.
    """
    if days < 1:
        raise ConfigurationError("days must be >= 1")
    if days > 1 and not summarizer_sections:
        raise ConfigurationError("summarizer sections are empty")
    base = profiles_for(run)
    summaries: list[str] = []
    out = []
    for day in range(1, days + 1):
        profiles = base
        if summaries:
            text = "\n\n".join(f"Day {i}: {s}" for i, s in enumerate(summaries, 1))
            profiles = {r: with_extra_section(p, SUMMARY_TITLE, text) for r, p in base.items()}
        cid = run.conversation_id if days == 1 else f"{run.conversation_id}/d{day}"
        conv = run_conversation(
            run, backend, decoding, limits, profiles=profiles, conversation_id=cid, **kwargs
        )
        conv.day = day
        out.append(conv)
        if conv.status is not Status.COMPLETE:
            break
        if day < days:
            conv.summary = summarize_day(
                conv,
                summarizer_sections,
                backend,
                decoding,
                **{k: v for k, v in kwargs.items() if k in ("sleep", "backoff")},
            )
            summaries.append(conv.summary)
    return out


def run_plan(
    runs: list[RunSpec],
    backend: ChatBackend,
    decoding: DecodingParams = DecodingParams(),
    limits: Limits = Limits(),
    parallel: int = 1,
    days: int = 1,
    summarizer_sections: list | None = None,
    on_result: Callable[[list[Conversation]], None] | None = None,
    **kwargs,
) -> list[Conversation]:
    """Run every RunSpec; results come back in plan order regardless of ``parallel``.

    ``on_result`` is called from the calling thread with each run's
    conversations, in plan order, as soon as they are available.
    """
    if parallel < 1:
        raise ConfigurationError("parallel must be >= 1")
    if parallel > 1 and kwargs.get("speaker") is SpeakerSelection.MANUAL:
        raise ConfigurationError("manual speaker selection requires parallel=1")

    def one(run: RunSpec) -> list[Conversation]:
        if days == 1:
            return [run_conversation(run, backend, decoding, limits, **kwargs)]
        return run_days(run, backend, days, summarizer_sections or [], decoding, limits, **kwargs)

    out: list[Conversation] = []

    def collect(results) -> None:
        for batch in results:
            if on_result is not None:
                on_result(batch)
            out.extend(batch)

    if parallel == 1:
        collect(one(r) for r in runs)
    else:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            collect(pool.map(one, runs))
    return out
