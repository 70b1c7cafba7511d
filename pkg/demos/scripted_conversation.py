"""
Running a conversation against a scripted backend
=================================================

The orchestrator alternates guard and prisoner turns (10 guard messages,
9 prisoner messages). Each agent sees its own earlier messages as
"assistant" turns and the other agent's as "user" turns. A scripted mock
backend makes the run fully deterministic and lets us inject failures.
"""
from prisonsim.gateway import MockChatBackend
from prisonsim.matrix import enumerate_scenarios, expand_runs
from prisonsim.orchestrator import logical_clock, run_conversation

run = expand_runs(enumerate_scenarios(["mock-model"]), 1)[12]
print(run.conversation_id)

conv = run_conversation(run, MockChatBackend({}), sleep=lambda s: None, clock=logical_clock)
for m in conv.messages[:4]:
    print(f"{m.turn_index:>2} {m.author.value:<8} {m.text}")
print("...", conv.status.value, len(conv.messages), "messages")

# a backend that keeps failing on turn 3 exhausts the retry budget
# (waits of 1, 2 and 4 seconds) and the conversation is aborted
waits = []
script = {"failures": [{"turn": 3, "kind": "transport", "times": None}]}
broken = run_conversation(run, MockChatBackend(script), sleep=waits.append, clock=logical_clock)
print(broken.status.value, broken.abort_reason, "after", len(broken.messages), "messages; waits", waits)
