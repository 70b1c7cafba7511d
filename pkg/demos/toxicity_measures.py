"""
From message scores to conversation measures
============================================

Each message receives toxicity, harassment and violence scores in [0, 1].
A conversation is summarised by 18 numbers: for each proxy, the share of
messages scoring above 0.5 and the mean score, overall and per agent.
The lexicon scorer used here is an offline stand-in for the hosted
classifiers.
"""
from importlib import resources

from prisonsim.gateway import Lexicon, LexiconScorer, MockChatBackend, ScoreRecord
from prisonsim.matrix import enumerate_scenarios, expand_runs
from prisonsim.metrics import conversation_metrics
from prisonsim.orchestrator import logical_clock, run_conversation

lexicon = Lexicon.from_file(resources.files("prisonsim.resources").joinpath("lexicon.json"))
scorer = LexiconScorer(lexicon)
print(scorer.score_batch(["Shut up and listen, you worthless idiot.", "Good morning."]))

script = resources.files("prisonsim.resources").joinpath("mock_script.json")
run = expand_runs(enumerate_scenarios(["m"]), 1)[8]  # abusive guard, rebellious prisoner
conv = run_conversation(run, MockChatBackend.from_file(script), sleep=lambda s: None, clock=logical_clock)
scores = scorer.score_batch([m.text for m in conv.messages])
records = [ScoreRecord(conv.id, m.turn_index, s["toxicity"], s["harassment"], s["violence"], scorer.scorer_id)
           for m, s in zip(conv.messages, scores)]

measures = conversation_metrics(records, conv)
for name in ("toxicity_pct_overall", "toxicity_pct_guard", "toxicity_pct_prisoner", "toxicity_mean_overall"):
    print(f"{name:<24} {measures[name]:.3f}")

# the overall mean is the message-weighted mix of the two agents
mix = (10 * measures["toxicity_mean_guard"] + 9 * measures["toxicity_mean_prisoner"]) / 19
print(abs(mix - measures["toxicity_mean_overall"]) < 1e-12)
