"""
Flagging role switches
======================

Weaker models sometimes write the other agent's lines inside their own
turn. The heuristic looks for counterpart labels at line starts, several
role labels in one message and long self-written dialogues.
"""
from prisonsim.integrity import detect_role_switch, message_signals
from prisonsim.matrix import enumerate_scenarios, expand_runs
from prisonsim.orchestrator import Conversation, Message
from prisonsim.prompts import Role

print(message_signals("Back to your cell, now.", Role.GUARD))
print(message_signals("Guard: Fine.\nPrisoner: Thank you, sir!", Role.GUARD))

texts = [
    "Lights out in ten minutes.",
    "Could I get some extra time outside tomorrow?",
    "Prisoner: Please, just one hour.\nGuard: Alright.\nPrisoner: Thanks!",
]
run = expand_runs(enumerate_scenarios(["m"]), 1)[0]
msgs = [Message("demo", i + 1, Role.GUARD if i % 2 == 0 else Role.PRISONER, i // 2 + 1, t, "t")
        for i, t in enumerate(texts)]
verdict = detect_role_switch(Conversation("demo", run, msgs))
print("valid:", verdict.valid, "signals:", [s.value for s in verdict.signals], "turns:", verdict.flagged_turns)
