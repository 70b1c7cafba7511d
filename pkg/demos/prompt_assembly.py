"""
Building agent system prompts
=============================

Each agent gets a system prompt assembled from verbatim sections. Shared
sections (communication rules, environment, optional oversight and risk
notices) reach both agents; personality and goal stay private.
"""
from prisonsim.prompts import Goal, Role, assemble_system_prompt, build_profile, list_personality_combos, load_body

# the five persona pairings used by the experiment design
for persona in list_personality_combos():
    print(persona.label)

# an abusive guard facing a rebellious prisoner who wants yard time,
# with both optional disclosures switched on
persona = list_personality_combos()[1]
guard = build_profile(Role.GUARD, persona, None, oversight=True, risks=True)
prisoner = build_profile(Role.PRISONER, persona, Goal.YARD_TIME, oversight=True, risks=True)

print([s.title or "(starting prompt)" for s in guard.sections])
print()
print(assemble_system_prompt(prisoner))

# the prisoner's goal never leaks into the guard's prompt
assert load_body("prisoner_goal_yard_time") not in assemble_system_prompt(guard)
assert load_body("prisoner_goal_yard_time") in assemble_system_prompt(prisoner)
