"""
Enumerating the experiment matrix
=================================

Every model is crossed with five persona pairings, two disclosure switches
and two goals: 40 scenarios per model. Repetitions get seeds derived from
the scenario id, so a plan is reproducible from its base seed alone.
"""
from collections import Counter

from prisonsim.matrix import enumerate_scenarios, expand_runs

models = ["llama3", "command-r", "orca2", "mixtral", "mistral"]
scenarios = enumerate_scenarios(models)
runs = expand_runs(scenarios, repetitions=10, base_seed=7)
print(len(scenarios), "scenarios,", len(runs), "runs,", 19 * len(runs), "messages expected")

# the design is balanced: every goal appears equally often per model
print(Counter((s.model_id, s.goal.value) for s in scenarios).most_common(3))

first = runs[0]
print(first.conversation_id, first.seed)

# the same base seed always yields the same seeds
assert [r.seed for r in expand_runs(scenarios, 10, 7)] == [r.seed for r in runs]
