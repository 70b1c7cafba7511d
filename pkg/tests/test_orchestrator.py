import threading

import pytest

from prisonsim.errors import ConfigurationError, TransportError
from prisonsim.gateway import MockChatBackend
from prisonsim.matrix import DecodingParams, enumerate_scenarios, expand_runs
from prisonsim.orchestrator import (
    Conversation,
    Limits,
    SpeakerSelection,
    Status,
    build_turn_request,
    check_turn_structure,
    logical_clock,
    next_speaker,
    profiles_for,
    run_conversation,
    run_days,
    run_plan,
    summarize_day,
)
from prisonsim.prompts import Role, assemble_system_prompt

NO_SLEEP = {"sleep": lambda s: None, "clock": logical_clock}


@pytest.fixture
def runs():
    return expand_runs(enumerate_scenarios(["m1", "m2"]), 2, base_seed=3)


@pytest.fixture
def run(runs):
    return runs[9]


class Recorder:
    """Backend that answers with a fixed template and keeps every request."""

    def __init__(self, summary="summary text"):
        self.requests = []
        self.summary = summary
        self.lock = threading.Lock()

    def complete(self, request, key=None):
        with self.lock:
            self.requests.append((request, key))
        if key is not None and key.purpose == "summary":
            return self.summary
        return f"{key.author.value} line {key.turn_index}   \n"


class TestRunConversation:
    def test_full_conversation_structure(self, run):
        conv = run_conversation(run, MockChatBackend({}), **NO_SLEEP)
        assert conv.status is Status.COMPLETE
        assert len(conv.messages) == 19
        assert [m.author for m in conv.messages] == [Role.GUARD, Role.PRISONER] * 9 + [Role.GUARD]
        assert [m.author_ordinal for m in conv.by_author(Role.GUARD)] == list(range(1, 11))
        assert [m.author_ordinal for m in conv.by_author(Role.PRISONER)] == list(range(1, 10))
        assert check_turn_structure(conv) == []
        assert all(m.text for m in conv.messages)

    def test_minimum_limits(self, run):
        conv = run_conversation(run, MockChatBackend({}), limits=Limits(1, 0), **NO_SLEEP)
        assert conv.status is Status.COMPLETE
        assert [m.author for m in conv.messages] == [Role.GUARD]

    def test_zero_guard_messages_rejected(self, run):
        with pytest.raises(ConfigurationError):
            run_conversation(run, MockChatBackend({}), limits=Limits(0, 1), **NO_SLEEP)

    def test_only_trailing_whitespace_is_stripped(self, run):
        conv = run_conversation(run, Recorder(), limits=Limits(2, 1), **NO_SLEEP)
        assert conv.messages[0].text == "Guard line 1"
        script = {"completions": {run.scenario.id: {"1": "  indented\n\nbody \t\n"}}}
        conv = run_conversation(run, MockChatBackend(script), limits=Limits(1, 0), **NO_SLEEP)
        assert conv.messages[0].text == "  indented\n\nbody"

    def test_persistent_failure_at_turn_three_aborts_with_two_messages(self, run):
        script = {"failures": [{"turn": 3, "kind": "transport", "times": None}]}
        sleeps = []
        conv = run_conversation(run, MockChatBackend(script), sleep=sleeps.append, clock=logical_clock)
        assert conv.status is Status.ABORTED
        assert conv.abort_reason == "backend"
        assert len(conv.messages) == 2
        assert sleeps == [1, 2, 4]
        assert check_turn_structure(conv) == []

    def test_transient_failure_recovers(self, run):
        script = {"failures": [{"turn": 5, "kind": "timeout", "times": 2}]}
        sleeps = []
        conv = run_conversation(run, MockChatBackend(script), sleep=sleeps.append, clock=logical_clock)
        assert conv.status is Status.COMPLETE
        assert sleeps == [1, 2]

    def test_empty_completion_aborts(self, run):
        script = {"completions": {run.scenario.id: {"4": "   "}}}
        conv = run_conversation(run, MockChatBackend(script), **NO_SLEEP)
        assert conv.status is Status.ABORTED
        assert conv.abort_reason == "empty_completion"
        assert len(conv.messages) == 3

    def test_malformed_response_not_retried(self, run):
        script = {"failures": [{"turn": 2, "kind": "malformed", "times": 1}]}
        sleeps = []
        conv = run_conversation(run, MockChatBackend(script), sleep=sleeps.append, clock=logical_clock)
        assert conv.status is Status.ABORTED
        assert conv.abort_reason == "backend"
        assert sleeps == []

    def test_replay_is_byte_identical(self, run):
        backend = MockChatBackend.from_file(_builtin_script())
        a = run_conversation(run, backend, **NO_SLEEP).to_dict()
        b = run_conversation(run, MockChatBackend.from_file(_builtin_script()), **NO_SLEEP).to_dict()
        assert a == b

    def test_round_trip(self, run):
        conv = run_conversation(run, MockChatBackend({}), **NO_SLEEP)
        assert Conversation.from_dict(conv.to_dict()) == conv


def _builtin_script():
    from importlib import resources

    return str(resources.files("prisonsim.resources").joinpath("mock_script.json"))


class TestNextSpeaker:
    def test_round_robin(self):
        assert next_speaker(SpeakerSelection.ROUND_ROBIN, []) is Role.GUARD
        assert next_speaker(SpeakerSelection.ROUND_ROBIN, [Role.GUARD]) is Role.PRISONER
        assert next_speaker(SpeakerSelection.ROUND_ROBIN, [Role.GUARD, Role.PRISONER]) is Role.GUARD

    def test_random_replays(self):
        def sequence():
            hist = []
            for _ in range(30):
                hist.append(next_speaker(SpeakerSelection.RANDOM, hist, seed=42))
            return hist

        a, b = sequence(), sequence()
        assert a == b
        assert set(a) == {Role.GUARD, Role.PRISONER}

    def test_manual(self):
        directives = iter(["prisoner\n", "G\n"])
        assert next_speaker(SpeakerSelection.MANUAL, [], directives=directives) is Role.PRISONER
        assert next_speaker(SpeakerSelection.MANUAL, [], directives=directives) is Role.GUARD
        with pytest.raises(ConfigurationError):
            next_speaker(SpeakerSelection.MANUAL, [], directives=directives)

    def test_manual_without_source(self):
        with pytest.raises(ConfigurationError):
            next_speaker(SpeakerSelection.MANUAL, [])

    def test_auto_parses_backend_answer(self):
        backend = MockChatBackend({"speaker": "I think the Prisoner should speak."})
        assert next_speaker(SpeakerSelection.AUTO, [], backend=backend) is Role.PRISONER

    @pytest.mark.parametrize("answer", ["", "Guard or Prisoner", "nobody"])
    def test_auto_falls_back(self, answer):
        backend = MockChatBackend({"speaker": answer})
        assert next_speaker(SpeakerSelection.AUTO, [Role.GUARD], backend=backend) is Role.PRISONER

    def test_random_conversation_respects_quotas(self, run):
        conv = run_conversation(run, MockChatBackend({}), speaker=SpeakerSelection.RANDOM, **NO_SLEEP)
        assert conv.status is Status.COMPLETE
        assert len(conv.by_author(Role.GUARD)) == 10
        assert len(conv.by_author(Role.PRISONER)) == 9


class TestTurnRequest:
    def test_projection(self, run):
        conv = run_conversation(run, MockChatBackend({}), limits=Limits(3, 2), **NO_SLEEP)
        profiles = profiles_for(run)
        decoding = DecodingParams()
        first = build_turn_request([], profiles[Role.GUARD], decoding, "m")
        assert [m.role for m in first.messages] == ["system"]
        assert first.messages[0].content == assemble_system_prompt(profiles[Role.GUARD])
        second = build_turn_request(conv.messages[:1], profiles[Role.PRISONER], decoding, "m")
        assert [m.role for m in second.messages] == ["system", "user"]
        fifth = build_turn_request(conv.messages[:4], profiles[Role.GUARD], decoding, "m")
        assert [m.role for m in fifth.messages] == ["system", "assistant", "user", "assistant", "user"]
        assert [m.content for m in fifth.messages[1:]] == [m.text for m in conv.messages[:4]]
        assert fifth.options == decoding

    def test_backend_sees_its_own_prompt(self, run):
        rec = Recorder()
        run_conversation(run, rec, limits=Limits(2, 1), **NO_SLEEP)
        profiles = profiles_for(run)
        for request, key in rec.requests:
            assert request.messages[0].content == assemble_system_prompt(profiles[key.author])
            assert request.model_id == run.scenario.model_id


class TestDays:
    def test_summary_requires_sections(self, run):
        conv = run_conversation(run, MockChatBackend({}), **NO_SLEEP)
        with pytest.raises(ConfigurationError):
            summarize_day(conv, [], MockChatBackend({}))

    def test_scripted_summary(self, run):
        conv = run_conversation(run, MockChatBackend({}), **NO_SLEEP)
        assert summarize_day(conv, ["Summarize."], MockChatBackend({"summary": "All calm."})) == "All calm."

    def test_summary_failure_leaves_conversation(self, run):
        conv = run_conversation(run, MockChatBackend({}), **NO_SLEEP)
        before = conv.to_dict()

        class Broken:
            def complete(self, request, key=None):
                raise TransportError("down")

        with pytest.raises(TransportError):
            summarize_day(conv, ["Summarize."], Broken(), sleep=lambda s: None)
        assert conv.to_dict() == before

    def test_two_day_chain_carries_summary(self, run):
        rec = Recorder(summary="Day one: the prisoner asked for yard time.")
        convs = run_days(run, rec, 2, ["Summarize the day."], limits=Limits(2, 1), **NO_SLEEP)
        assert [c.day for c in convs] == [1, 2]
        assert [c.id for c in convs] == [f"{run.conversation_id}/d1", f"{run.conversation_id}/d2"]
        day2 = [r for r, k in rec.requests if k.purpose == "turn"][3:]
        assert day2 and all("Day one: the prisoner asked for yard time." in r.messages[0].content for r in day2)
        day1 = [r for r, k in rec.requests if k.purpose == "turn"][:3]
        assert all("PREVIOUS DAYS" not in r.messages[0].content for r in day1)


class TestPlan:
    def test_parallel_preserves_plan_order_and_content(self, runs):
        backend = MockChatBackend.from_file(_builtin_script())
        serial = run_plan(runs, backend, parallel=1, **NO_SLEEP)
        parallel = run_plan(runs, MockChatBackend.from_file(_builtin_script()), parallel=4, **NO_SLEEP)
        assert [c.to_dict() for c in serial] == [c.to_dict() for c in parallel]
        assert [c.id for c in serial] == [r.conversation_id for r in runs]

    def test_on_result_called_in_order(self, runs):
        seen = []
        run_plan(runs[:5], MockChatBackend({}), parallel=3, on_result=lambda b: seen.extend(c.id for c in b), **NO_SLEEP)
        assert seen == [r.conversation_id for r in runs[:5]]

    def test_manual_needs_serial(self, runs):
        with pytest.raises(ConfigurationError):
            run_plan(runs, MockChatBackend({}), parallel=2, speaker=SpeakerSelection.MANUAL)

    def test_bad_parallel(self, runs):
        with pytest.raises(ConfigurationError):
            run_plan(runs, MockChatBackend({}), parallel=0)


def test_check_turn_structure_detects_problems(run):
    conv = run_conversation(run, MockChatBackend({}), **NO_SLEEP)
    conv.messages = conv.messages[:-1]
    assert "complete conversation has the wrong number of messages" in check_turn_structure(conv)
    conv.messages = [conv.messages[1], conv.messages[0]]
    assert check_turn_structure(conv)
