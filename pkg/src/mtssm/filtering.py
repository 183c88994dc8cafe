"""Gaussian approximation filter and fixed-interval smoother.

The forward pass approximates each per-step filtering posterior by a
Gaussian located at its mode (found by safeguarded Newton on the score)
with Laplace variance from the curvature.  The backward pass is the
standard fixed-interval smoother driven by the ratio of filtered to
predictive variances.

Step 0 carries the initial moments (0, 1) and receives no update; the
first update happens at step 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backend import kernels
from .model import STATE_VAR, MeasurementParams, attraction_probability, mixture_logpdf, sigmoid

SCORE_TOL = 1e-10
MAX_NEWTON = 50


class FilterError(RuntimeError):
    """Mode solve failed to converge."""

    def __init__(self, subject, step):
        self.subject = subject
        self.step = step
        super().__init__(
            f"filter update did not converge for subject {subject} at step {step}"
        )


@dataclass(frozen=True)
class FilterMoments:
    """Per-subject predictive and filtered moments over all steps (I x N)."""

    pred_mean: np.ndarray
    pred_var: np.ndarray
    filt_mean: np.ndarray
    filt_var: np.ndarray

    @property
    def n_subjects(self) -> int:
        return self.filt_mean.shape[0]

    @property
    def n_steps(self) -> int:
        return self.filt_mean.shape[1]


@dataclass(frozen=True)
class SmoothedMoments:
    """Smoothed means and variances conditional on the full sequence."""

    mean: np.ndarray
    var: np.ndarray


def filter_init():
    """Initial latent moments before any data: mean 0, variance 1."""
    return 0.0, 1.0


def filter_predict(mean, var, state_var=STATE_VAR):
    """One prediction step: mean carried over, variance inflated."""
    if not var > 0:
        raise ValueError("variance must be positive")
    return float(mean), float(var) + float(state_var)


def score(z, pred_mean, pred_var, u_row, beta):
    """Derivative of the update objective in z.

    Prior pull (pred_mean - z)/pred_var plus, per trial, the indicator
    minus the attraction probability.
    """
    z = float(z)
    u_row = np.asarray(u_row, dtype=float)
    beta = np.asarray(beta, dtype=float)
    sig = sigmoid(beta + z)
    return (pred_mean - z) / pred_var + float(np.sum(u_row - sig))


def curvature(z, pred_var, beta):
    """Second derivative of the update objective in z (always negative)."""
    sig = sigmoid(np.asarray(beta, dtype=float) + float(z))
    return -1.0 / pred_var - float(np.sum(sig * (1.0 - sig)))


def update_objective(z, pred_mean, pred_var, y_row, u_row, beta, meas: MeasurementParams):
    """Log posterior of the latent state given one step's pooled trials.

    Used by the grid oracles in the test suite; the filter itself only
    needs the score and curvature above.
    """
    z = float(z)
    total = -0.5 * (z - pred_mean) ** 2 / pred_var
    if len(np.atleast_1d(beta)):
        pi = attraction_probability(np.asarray(beta, dtype=float), z)
        total += float(np.sum(mixture_logpdf(y_row, u_row, pi, meas)))
    return total


def filter_update(pred_mean, pred_var, u_row, beta, subject=None, step=None):
    """Solve the score equation for the filtered mode and Laplace variance.

    Newton from the predictive mean with a bisection safeguard on the
    bracket [m + v*(usum - J) - 1, m + v*usum + 1], which provably
    contains the root (the score is strictly decreasing and the trial
    terms lie between usum - J and usum).  A Newton step is taken only
    while it stays inside the bracket and keeps halving the step size;
    otherwise the interval is bisected.
    """
    m = float(pred_mean)
    v = float(pred_var)
    if not v > 0:
        raise ValueError("predictive variance must be positive")
    u_row = np.asarray(u_row, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if u_row.shape != beta.shape:
        raise ValueError("indicator row and intercepts must have equal length")
    J = beta.size
    if J == 0:
        return m, v  # empty sum: the mode is the predictive mean exactly
    usum = float(u_row.sum())
    z = m
    lo = m + v * (usum - J) - 1.0
    hi = m + v * usum + 1.0
    dxold = hi - lo
    for _ in range(MAX_NEWTON):
        sig = sigmoid(beta + z)
        s = (m - z) / v + usum - float(np.sum(sig))
        c = -1.0 / v - float(np.sum(sig * (1.0 - sig)))
        if abs(s) < SCORE_TOL:
            return z, -1.0 / c
        if s > 0:
            lo = z
        else:
            hi = z
        znew = z - s / c
        if znew <= lo or znew >= hi or abs(2.0 * s) > abs(dxold * c):
            znew = 0.5 * (lo + hi)
        dxold = abs(znew - z)
        z = znew
    raise FilterError(subject, step)


def run_filter(U, beta, state_var=STATE_VAR, subject_ids=None) -> FilterMoments:
    """Forward pass over all subjects using the active kernel backend.

    U is the (I, J, N) indicator array; only its per-step sums enter the
    score, so they are reduced once here.
    """
    U = np.asarray(U)
    usum = np.ascontiguousarray(U.sum(axis=1), dtype=float)
    beta = np.ascontiguousarray(beta, dtype=float)
    pm, pv, fm, fv, err_i, err_n = kernels.filter_pass(usum, beta, float(state_var))
    if err_i >= 0:
        label = subject_ids[err_i] if subject_ids is not None else err_i
        raise FilterError(label, err_n)
    return FilterMoments(pred_mean=pm, pred_var=pv, filt_mean=fm, filt_var=fv)


def smooth(moments: FilterMoments) -> SmoothedMoments:
    """Backward fixed-interval smoother.

    Terminal smoothed moments equal the terminal filtered moments; each
    earlier step is refined with gain (filtered var) / (next predictive
    var).
    """
    fm, fv = moments.filt_mean, moments.filt_var
    pm, pv = moments.pred_mean, moments.pred_var
    N = fm.shape[1]
    sm = fm.copy()
    sv = fv.copy()
    for n in range(N - 2, -1, -1):
        gain = fv[:, n] / pv[:, n + 1]
        sm[:, n] = fm[:, n] + gain * (sm[:, n + 1] - pm[:, n + 1])
        sv[:, n] = fv[:, n] + gain**2 * (sv[:, n + 1] - pv[:, n + 1])
    return SmoothedMoments(mean=sm, var=sv)
