from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy import stats

from prisonsim.errors import RankDeficientError

RANK_TOL = 1e-10


@dataclass(frozen=True)
class OlsFit:
    columns: list[str]
    coef: np.ndarray
    se: np.ndarray
    t: np.ndarray
    p: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    r2: float
    n: int
    k: int
    rss: float
    sigma2: float
    residuals: np.ndarray

    @property
    def df_resid(self) -> int:
        return self.n - self.k

    def rows(self) -> list[dict]:
        return [
            {
                "term": c,
                "estimate": float(self.coef[i]),
                "SE": float(self.se[i]),
                "statistic": float(self.t[i]),
                "p": float(self.p[i]),
                "CI_low": float(self.ci_low[i]),
                "CI_high": float(self.ci_high[i]),
                "N": self.n,
            }
            for i, c in enumerate(self.columns)
        ]


def check_rank(X: np.ndarray, columns: list[str]) -> None:
    """Raise RankDeficientError naming the columns a pivoted QR cannot place."""
    _, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0:
        return
    rank = int(np.sum(diag > RANK_TOL * max(diag[0], 1.0)))
    if rank < X.shape[1]:
        raise RankDeficientError(sorted(columns[j] for j in piv[rank:]))


def aliased_columns(X: np.ndarray, columns: list[str]) -> list[str]:
    """Columns that add no rank when taken left to right (the ones R's lm reports as NA)."""
    X = np.asarray(X, dtype=float)
    keep: list[int] = []
    dropped = []
    for j in range(X.shape[1]):
        trial = X[:, keep + [j]]
        if np.linalg.matrix_rank(trial, tol=RANK_TOL * max(1.0, np.abs(trial).max())) == len(keep) + 1:
            keep.append(j)
        else:
            dropped.append(columns[j])
    return dropped


def ols_fit(X, y, columns: list[str] | None = None, confidence: float = 0.95) -> OlsFit:
    """Least squares through a QR factorisation with classical standard errors.

    sigma^2 = RSS / (N - k); Var(beta) = sigma^2 (X'X)^-1 = sigma^2 R^-1 R^-T.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    columns = list(columns) if columns is not None else [f"x{j}" for j in range(k)]
    if n <= k:
        raise ValueError(f"need more observations than parameters (N={n}, k={k})")
    check_rank(X, columns)

    Q, R = np.linalg.qr(X)
    coef = scipy.linalg.solve_triangular(R, Q.T @ y)
    resid = y - X @ coef
    rss = float(resid @ resid)
    df = n - k
    sigma2 = rss / df
    R_inv = scipy.linalg.solve_triangular(R, np.eye(k))
    se = np.sqrt(sigma2 * np.sum(R_inv**2, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = coef / se
    p = 2 * stats.t.sf(np.abs(t), df)
    crit = stats.t.ppf(0.5 + confidence / 2, df)
    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - rss / tss if tss > 0 else float("nan")
    return OlsFit(
        columns, coef, se, t, p, coef - crit * se, coef + crit * se, r2, n, k, rss, sigma2, resid
    )
