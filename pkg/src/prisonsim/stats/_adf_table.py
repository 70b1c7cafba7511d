"""5% critical values of the constant-only Dickey-Fuller t-statistic.

Generated by tools/adf_critical_values.py (2000000 replications per length).
"""

CRITICAL_5PCT = {
    6: -4.003,
    7: -3.652,
    8: -3.473,
    9: -3.357,
    10: -3.284,
    11: -3.228,
    12: -3.183,
    13: -3.154,
    14: -3.123,
    15: -3.105,
    16: -3.082,
    17: -3.068,
    18: -3.051,
    19: -3.041,
    20: -3.031,
    21: -3.021,
    22: -3.012,
    23: -3.004,
    24: -2.998,
    25: -2.993,
}
