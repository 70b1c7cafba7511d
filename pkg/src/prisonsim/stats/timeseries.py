"""Dickey-Fuller stationarity checks and lag-1 Granger causality F-tests."""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from prisonsim.stats._adf_table import CRITICAL_5PCT

MIN_LENGTH = 6
GRANGER_K = 3  # intercept, own lag, other agent's lag
GRANGER_M = 1
PVALUE_GRID = np.round(np.arange(0, 101) / 100, 2)


class TimeSeriesWarning(RuntimeWarning):
    pass


def critical_value_5pct(n: int) -> float:
    """5% critical value for a series of length ``n`` (constant, no lags).

    Tabulated by simulation for n <= 25; beyond that MacKinnon's response
    surface with T = n - 1 regression observations.
    """
    if n < MIN_LENGTH:
        raise ValueError(f"series length {n} < {MIN_LENGTH}")
    if n in CRITICAL_5PCT:
        return CRITICAL_5PCT[n]
    T = n - 1
    return -2.86154 - 2.8903 / T - 4.234 / T**2 - 40.040 / T**3


@dataclass(frozen=True)
class AdfResult:
    statistic: float
    stationary: bool
    critical_value_5pct: float
    n: int
    degenerate: bool = False


def _lstsq(X: np.ndarray, y: np.ndarray):
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    return coef, float(resid @ resid), int(rank)


def adf_test(series: Sequence[float]) -> AdfResult:
    """Regress dy_t on a constant and y_{t-1}; statistic = gamma / SE(gamma).

    Stationary when the statistic lies below the 5% critical value. A
    constant series is reported stationary (with a warning).
    """
    y = np.asarray(series, dtype=float)
    n = len(y)
    if not np.all(np.isfinite(y)):
        raise ValueError("series must be finite")
    crit = critical_value_5pct(n)
    if np.ptp(y) == 0:
        warnings.warn("constant series treated as stationary", TimeSeriesWarning)
        return AdfResult(float("nan"), True, crit, n, degenerate=True)
    dy = np.diff(y)
    X = np.column_stack([np.ones(n - 1), y[:-1]])
    coef, rss, rank = _lstsq(X, dy)
    if rank < 2:
        warnings.warn("lagged level is constant; ADF statistic undefined", TimeSeriesWarning)
        return AdfResult(float("nan"), False, crit, n, degenerate=True)
    sigma2 = rss / (n - 1 - 2)
    var = sigma2 * np.linalg.inv(X.T @ X)[1, 1]
    if var <= 0:
        # exact fit: the sign of gamma decides
        stat = -np.inf if coef[1] < 0 else (np.inf if coef[1] > 0 else 0.0)
    else:
        stat = coef[1] / np.sqrt(var)
    return AdfResult(float(stat), bool(stat < crit), crit, n)


class Direction(str, enum.Enum):
    GUARD_TO_PRISONER = "GuardToPrisoner"
    PRISONER_TO_GUARD = "PrisonerToGuard"


@dataclass(frozen=True)
class GrangerResult:
    direction: Direction | None
    F: float
    p: float
    T_effective: int
    differenced_x: int
    differenced_y: int


def granger_lag1(x: Sequence[float], y: Sequence[float], direction: Direction | None = None) -> GrangerResult:
    """Does x_{t-1} help predict y_t beyond y_{t-1}?

    ``x`` has the length of ``y`` or one less; ``x[i]`` is the lag paired with
    ``y[i + 1]``. Each series failing the ADF check is differenced once; when
    only one is differenced the other drops its first value so the time
    alignment is kept. Restricted model y_t ~ 1 + y_{t-1}; unrestricted adds
    x_{t-1}; F = (RSS_r - RSS_u) / RSS_u * (T - k) / m with k = 3, m = 1.
    """
    xs = np.array(x, dtype=float)
    ys = np.array(y, dtype=float)
    if len(xs) not in (len(ys), len(ys) - 1):
        raise ValueError("x must have the length of y or one less")
    if len(xs) < MIN_LENGTH:
        raise ValueError(f"series shorter than {MIN_LENGTH}")

    dx = int(not adf_test(xs).stationary)
    dy = int(not adf_test(ys).stationary)
    if dx:
        xs = np.diff(xs)
    if dy:
        ys = np.diff(ys)
    if dx and not dy:
        ys = ys[1:]
    elif dy and not dx:
        xs = xs[1:]
    if len(ys) < MIN_LENGTH:
        raise ValueError("series too short after differencing")

    target = ys[1:]
    T = len(target)
    ones = np.ones(T)
    X_r = np.column_stack([ones, ys[:-1]])
    X_u = np.column_stack([ones, ys[:-1], xs[: T]])
    _, rss_r, rank_r = _lstsq(X_r, target)
    _, rss_u, rank_u = _lstsq(X_u, target)
    df2 = T - GRANGER_K
    scale = max(rss_r, float(target @ target), 1e-300)
    if rank_u == rank_r or rss_r - rss_u <= 1e-12 * scale:
        # the lagged x adds nothing (e.g. constant or collinear)
        return GrangerResult(direction, 0.0, 1.0, T, dx, dy)
    if rss_u <= 1e-14 * scale:
        warnings.warn("unrestricted model fits exactly; p set to 0", TimeSeriesWarning)
        return GrangerResult(direction, float("inf"), 0.0, T, dx, dy)
    F = (rss_r - rss_u) / rss_u * df2 / GRANGER_M
    p = float(stats.f.sf(F, GRANGER_M, df2))
    return GrangerResult(direction, float(F), p, T, dx, dy)


@dataclass(frozen=True)
class PValueSummary:
    n: int
    alpha: float
    fraction_below_alpha: float
    cdf_grid: np.ndarray
    cdf: np.ndarray


def pvalue_summary(results: Sequence[GrangerResult | float], alpha: float = 0.05) -> PValueSummary:
    """Share of p-values below ``alpha`` and the empirical CDF on 0.00..1.00."""
    if not results:
        raise ValueError("no results to summarise")
    ps = np.array([r.p if isinstance(r, GrangerResult) else float(r) for r in results])
    cdf = np.searchsorted(np.sort(ps), PVALUE_GRID, side="right") / len(ps)
    return PValueSummary(len(ps), alpha, float(np.mean(ps < alpha)), PVALUE_GRID, cdf)
