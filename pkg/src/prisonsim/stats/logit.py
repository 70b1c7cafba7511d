from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import expit

from prisonsim.errors import PerfectSeparationError
from prisonsim.stats.ols import check_rank

# |log-odds| beyond this means the MLE is running off to infinity.
DIVERGENCE_BOUND = 30.0
SATURATION = 1e-8
Z_975 = float(stats.norm.ppf(0.975))


@dataclass(frozen=True)
class LogitFit:
    columns: list[str]
    coef: np.ndarray
    se: np.ndarray
    z: np.ndarray
    p: np.ndarray
    odds_ratio: np.ndarray
    or_ci_low: np.ndarray
    or_ci_high: np.ndarray
    converged: bool
    iterations: int
    n: int
    loglik: float
    max_abs_score: float

    def rows(self) -> list[dict]:
        return [
            {
                "term": c,
                "estimate": float(self.coef[i]),
                "SE": float(self.se[i]),
                "statistic": float(self.z[i]),
                "p": float(self.p[i]),
                "OR": float(self.odds_ratio[i]),
                "CI_low": float(self.or_ci_low[i]),
                "CI_high": float(self.or_ci_high[i]),
                "N": self.n,
            }
            for i, c in enumerate(self.columns)
        ]


def log_likelihood(X: np.ndarray, y: np.ndarray, beta: np.ndarray) -> float:
    eta = X @ beta
    # log(1 + e^eta) computed stably
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def logit_fit(X, y, tol: float = 1e-8, max_iter: int = 50, columns: list[str] | None = None) -> LogitFit:
    """Maximum-likelihood logistic regression by iteratively reweighted least squares.

    Converged means max |X'(y - p)| < ``tol``. Odds-ratio intervals are Wald
    intervals on the log-odds scale, exponentiated. Perfect or quasi-perfect
    separation raises PerfectSeparationError; running out of iterations
    returns a fit with ``converged=False``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    columns = list(columns) if columns is not None else [f"x{j}" for j in range(k)]
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("y must be binary (0/1)")
    if n <= k:
        raise ValueError(f"need more observations than parameters (N={n}, k={k})")
    check_rank(X, columns)
    if y.min() == y.max():
        raise PerfectSeparationError("outcome is constant; the intercept diverges")

    beta = np.zeros(k)
    ll = log_likelihood(X, y, beta)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        p = expit(X @ beta)
        score = X.T @ (y - p)
        if np.max(np.abs(score)) < tol:
            converged = True
            iterations -= 1
            break
        if np.max(np.abs(y - p)) < 1e-8:
            raise PerfectSeparationError("fitted probabilities reproduce y exactly")
        w = p * (1 - p)
        H = X.T @ (X * w[:, None])
        step = np.linalg.solve(H, score)
        # step-halving keeps the likelihood monotone
        for _ in range(30):
            candidate = beta + step
            new_ll = log_likelihood(X, y, candidate)
            if new_ll >= ll - 1e-12 * max(1.0, abs(ll)):
                break
            step /= 2
        beta, ll = candidate, new_ll
        if np.max(np.abs(beta)) > DIVERGENCE_BOUND:
            raise PerfectSeparationError(
                f"coefficients diverge (max |beta| > {DIVERGENCE_BOUND}); the data are separated"
            )
    p = expit(X @ beta)
    score = X.T @ (y - p)
    if not converged and np.max(np.abs(score)) < tol:
        converged = True
    if np.min(np.minimum(p, 1 - p)) < SATURATION:
        raise PerfectSeparationError(
            "some fitted probabilities are numerically 0 or 1 (quasi-complete separation)"
        )
    w = p * (1 - p)
    cov = np.linalg.inv(X.T @ (X * w[:, None]))
    se = np.sqrt(np.diag(cov))
    z = beta / se
    pval = 2 * stats.norm.sf(np.abs(z))
    return LogitFit(
        columns,
        beta,
        se,
        z,
        pval,
        np.exp(beta),
        np.exp(beta - Z_975 * se),
        np.exp(beta + Z_975 * se),
        converged,
        iterations,
        n,
        ll,
        float(np.max(np.abs(score))),
    )
