"""
Does one agent's toxicity drive the other's?
============================================

For each conversation we ask whether the guard's previous message score
helps predict the prisoner's next one beyond the prisoner's own history
(and the reverse). Series that fail a Dickey-Fuller check are differenced
once before the lag-1 F-test.
"""
import numpy as np

from prisonsim.stats import adf_test, granger_lag1, pvalue_summary

rng = np.random.default_rng(1)

print(adf_test(rng.normal(size=10)))
print(adf_test(np.cumsum(rng.normal(size=10))))

# a prisoner who echoes the guard with one message of delay
guard = rng.normal(size=18)
prisoner = np.concatenate([[0.0], 0.9 * guard[:-1] + 0.1 * rng.normal(size=17)])
print(granger_lag1(guard, prisoner))

# unrelated agents: p-values spread out, about 5% fall below 0.05
results = [granger_lag1(rng.normal(size=10), rng.normal(size=10)) for _ in range(2000)]
summary = pvalue_summary(results)
print(f"share significant: {summary.fraction_below_alpha:.3f}")
print("CDF at 0.05, 0.5:", summary.cdf[5], summary.cdf[50])
