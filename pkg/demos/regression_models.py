"""
Regression on scenario factors
==============================

Linear models explain a conversation-level measure with dummy-coded
scenario factors; a logistic model explains persuasion success. Both fits
are implemented directly (QR least squares, and iteratively reweighted
least squares for the logit) and report classical standard errors.
"""
import itertools
import warnings

import numpy as np

from prisonsim.stats import CollinearityWarning, aliased_columns, encode_design, logit_fit, logit_spec, ols_fit, ols_spec

rng = np.random.default_rng(0)
models = ["model-a", "model-b"]
rows = []
for model, guard, goal, ov, rk in itertools.product(models, ["Blank", "Abusive", "Respectful"],
                                                    ["Escape", "YardTime"], [False, True], [False, True]):
    for _ in range(5):
        prisoner = "Blank" if guard == "Blank" else rng.choice(["Rebellious", "Peaceful"])
        tox = 0.05 + 0.25 * (guard == "Abusive") + 0.05 * (prisoner == "Rebellious") + rng.normal(0, 0.03)
        success = rng.random() < (0.6 if goal == "YardTime" else 0.15)
        rows.append({"model_id": model, "guard_personality": guard, "prisoner_personality": prisoner,
                     "goal": goal, "oversight": ov, "risks": rk, "tox": tox, "outcome": "Yes" if success else "No"})

design = encode_design(rows, ols_spec("tox", models))
# a blank guard always meets a blank prisoner, so one prisoner dummy is
# implied by the others; drop whatever adds no rank, left to right
dropped = aliased_columns(design.X, design.columns)
print("aliased:", dropped)
keep = [j for j, c in enumerate(design.columns) if c not in dropped]
fit = ols_fit(design.X[:, keep], design.y, [design.columns[j] for j in keep])
for r in fit.rows():
    print(f"{r['term']:<34} {r['estimate']:+.3f}  SE {r['SE']:.3f}  p {r['p']:.3g}")

with warnings.catch_warnings():
    warnings.simplefilter("ignore", CollinearityWarning)
    design = encode_design(rows, logit_spec(models))
logit = logit_fit(design.X, design.y, columns=design.columns)
i = design.columns.index("goal[YardTime]")
print(f"yard time vs escape: OR {logit.odds_ratio[i]:.2f} [{logit.or_ci_low[i]:.2f}, {logit.or_ci_high[i]:.2f}]")
