"""Convergence diagnostics and posterior summaries.

Classic potential-scale-reduction factor (no rank normalization), biased
autocorrelation estimates, and pooled posterior summaries with type-7
quantiles and shortest-interval HDPIs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_ACF_LAGS = 20


def gelman_rubin(chains) -> float:
    """Potential scale reduction factor over m chains of equal length n.

    sqrt(((n-1)/n * W + B/n) / W) with W the mean within-chain variance
    and B the between-chain variance of the means scaled by n.  Degenerate
    cases: all-identical draws give 1.0; zero within-chain spread with
    distinct means gives +inf.  Both are logged.
    """
    chains = np.asarray(chains, dtype=float)
    if chains.ndim != 2:
        raise ValueError("expected an (m, n) array of chains")
    m, n = chains.shape
    if m < 2 or n < 2:
        raise ValueError("need at least 2 chains of at least 2 draws")
    W = chains.var(axis=1, ddof=1).mean()
    B = n * chains.mean(axis=1).var(ddof=1)
    if W == 0.0:
        if B == 0.0:
            log.warning("all draws identical; PSRF degenerate, reporting 1")
            return 1.0
        log.warning("zero within-chain variance with distinct means; PSRF infinite")
        return float("inf")
    return float(np.sqrt(((n - 1) / n * W + B / n) / W))


def acf(series, max_lag: int = DEFAULT_ACF_LAGS) -> np.ndarray:
    """Autocorrelation at lags 0..max_lag with divide-by-n normalization."""
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValueError("expected a 1-d series")
    n = x.size
    if n <= max_lag:
        raise ValueError("series shorter than the requested maximum lag")
    x = x - x.mean()
    denom = float(x @ x)
    if denom == 0.0:
        raise ValueError("constant series has undefined autocorrelation")
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for k in range(1, max_lag + 1):
        out[k] = float(x[:-k] @ x[k:]) / denom
    return out


@dataclass(frozen=True)
class ParameterSummary:
    name: str
    mean: float
    q05: float
    q975: float
    hdpi: tuple[float, float]
    rhat: float
    acf: np.ndarray


def hdpi(draws, mass: float = 0.95) -> tuple[float, float]:
    """Shortest interval containing the requested posterior mass."""
    x = np.sort(np.asarray(draws, dtype=float))
    n = x.size
    if n == 0:
        raise ValueError("no draws")
    k = int(np.ceil(mass * n))
    if k >= n:
        return float(x[0]), float(x[-1])
    widths = x[k:] - x[: n - k]
    j = int(np.argmin(widths))
    return float(x[j]), float(x[j + k])


def summarize(draws: np.ndarray, param_names, acf_lags: int = DEFAULT_ACF_LAGS):
    """Pooled posterior summaries, one ParameterSummary per parameter.

    draws is (chains, kept, d).  R-hat uses the per-chain split; all other
    statistics pool the chains.  ACF of a constant parameter is reported
    as NaNs rather than failing the whole table.
    """
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 3:
        raise ValueError("expected draws of shape (chains, kept, d)")
    chains, kept, d = draws.shape
    if kept == 0:
        raise ValueError("no kept draws")
    if len(param_names) != d:
        raise ValueError("parameter name count does not match draw dimension")
    out = []
    for p, name in enumerate(param_names):
        pooled = draws[:, :, p].reshape(-1)
        if chains >= 2 and kept >= 2:
            rhat = gelman_rubin(draws[:, :, p])
        else:
            rhat = float("nan")
        lags = min(acf_lags, pooled.size - 1)
        try:
            rho = acf(pooled, lags)
        except ValueError:
            rho = np.full(lags + 1, np.nan)
        out.append(
            ParameterSummary(
                name=name,
                mean=float(pooled.mean()),
                q05=float(np.quantile(pooled, 0.05)),
                q975=float(np.quantile(pooled, 0.975)),
                hdpi=hdpi(pooled),
                rhat=rhat,
                acf=rho,
            )
        )
    return out
