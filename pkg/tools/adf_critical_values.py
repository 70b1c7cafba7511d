"""Regenerate the embedded 5% Dickey-Fuller critical values.

Monte Carlo of the t-statistic on the lagged level in
``dy_t = c + g * y_{t-1} + e_t`` (constant, no augmentation lags) under a
driftless Gaussian random walk, for series lengths 6..25.

    python tools/adf_critical_values.py > src/prisonsim/stats/_adf_table.py
"""
import numpy as np

REPS = 2_000_000
CHUNK = 250_000
SEED = 20240601


def t_stats(y: np.ndarray) -> np.ndarray:
    dy = np.diff(y, axis=1)
    lag = y[:, :-1]
    m = dy.shape[1]
    lag_c = lag - lag.mean(axis=1, keepdims=True)
    dy_c = dy - dy.mean(axis=1, keepdims=True)
    sxx = (lag_c**2).sum(axis=1)
    g = (lag_c * dy_c).sum(axis=1) / sxx
    resid = dy_c - g[:, None] * lag_c
    s2 = (resid**2).sum(axis=1) / (m - 2)
    return g / np.sqrt(s2 / sxx)


def main():
    rng = np.random.default_rng(SEED)
    print('"""5% critical values of the constant-only Dickey-Fuller t-statistic.')
    print()
    print(f"Generated by tools/adf_critical_values.py ({REPS} replications per length).")
    print('"""')
    print()
    print("CRITICAL_5PCT = {")
    for n in range(6, 26):
        ts = np.concatenate(
            [t_stats(np.cumsum(rng.standard_normal((CHUNK, n)), axis=1)) for _ in range(REPS // CHUNK)]
        )
        print(f"    {n}: {np.quantile(ts, 0.05):.3f},")
    print("}")


if __name__ == "__main__":
    main()
