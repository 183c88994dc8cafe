"""Marginal likelihood by prediction-error decomposition, and the
closed-form von Mises concentration estimators.

Each observation contributes log of the mixture density integrated
against the filter's one-step-ahead Gaussian predictive; the integrals
use Gauss-Hermite quadrature centered on the predictive moments.  The
mixture is linear in the attraction probability, so only the expectation
of the logistic term needs quadrature; the two component densities are
constants precomputed per dataset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .backend import kernels
from .filtering import FilterError, FilterMoments
from .model import STATE_VAR, MeasurementParams, vonmises_logpdf
from .preprocess import AngleDataset
from .special import inv_mean_resultant, mean_resultant

DEFAULT_QUAD_ORDER = 32


class LikelihoodError(RuntimeError):
    """Non-finite likelihood term, carrying the offending observation."""

    def __init__(self, subject, trial, step):
        self.subject = subject
        self.trial = trial
        self.step = step
        super().__init__(
            f"non-finite likelihood term at subject {subject}, "
            f"trial {trial}, step {step}"
        )


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Hermite nodes/weights (physicists' convention, weight e^{-x^2})."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.shape != weights.shape or nodes.ndim != 1:
            raise ValueError("nodes and weights must be 1-d arrays of equal length")
        if np.any(weights <= 0):
            raise ValueError("quadrature weights must be positive")
        if abs(weights.sum() / math.sqrt(math.pi) - 1.0) > 1e-12:
            raise ValueError("weights do not integrate the Gaussian to 1")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def order(self) -> int:
        return self.nodes.size

    @classmethod
    def gauss_hermite(cls, order: int = DEFAULT_QUAD_ORDER) -> "QuadratureRule":
        x, w = np.polynomial.hermite.hermgauss(order)
        return cls(nodes=x, weights=w)


def component_densities(Y: np.ndarray, meas: MeasurementParams):
    """Von Mises densities of both components at every observed angle."""
    f1 = np.exp(vonmises_logpdf(Y, meas.mu1, meas.kappa1))
    f2 = np.exp(vonmises_logpdf(Y, meas.mu2, meas.kappa2))
    return f1, f2


class LikelihoodEvaluator:
    """Reusable marginal-likelihood evaluator for one dataset.

    Precomputes the component densities and indicator sums once; each
    loglik() call then costs one filter pass plus the quadrature kernel.
    The sampler calls this thousands of times with different intercepts.
    """

    def __init__(self, dataset: AngleDataset, meas: MeasurementParams,
                 state_var: float = STATE_VAR,
                 quad: QuadratureRule | None = None):
        self.dataset = dataset
        self.meas = meas
        self.state_var = float(state_var)
        self.quad = quad if quad is not None else QuadratureRule.gauss_hermite()
        f1, f2 = component_densities(dataset.Y, meas)
        self._f1 = np.ascontiguousarray(f1)
        self._f2 = np.ascontiguousarray(f2)
        self._usum = np.ascontiguousarray(dataset.U.sum(axis=1), dtype=float)

    def loglik_and_moments(self, beta) -> tuple[float, FilterMoments]:
        beta = np.ascontiguousarray(beta, dtype=float)
        if beta.shape != (self.dataset.n_trials,):
            raise ValueError("intercept vector length must equal the trial count")
        pm, pv, fm, fv, err_i, err_n = kernels.filter_pass(
            self._usum, beta, self.state_var
        )
        if err_i >= 0:
            raise FilterError(self.dataset.subjects[err_i], err_n)
        total, bi, bj, bn = kernels.loglik_terms(
            self._f1, self._f2, beta, pm, pv, self.quad.nodes, self.quad.weights
        )
        if bi >= 0:
            raise LikelihoodError(
                self.dataset.subjects[bi], self.dataset.trials[bj], bn
            )
        moments = FilterMoments(pred_mean=pm, pred_var=pv, filt_mean=fm, filt_var=fv)
        return float(total), moments

    def loglik(self, beta) -> float:
        return self.loglik_and_moments(beta)[0]


def marginal_loglik(dataset: AngleDataset, beta, meas: MeasurementParams,
                    state_var: float = STATE_VAR,
                    quad: QuadratureRule | None = None) -> float:
    """One-shot marginal log likelihood of the intercept vector beta."""
    return LikelihoodEvaluator(dataset, meas, state_var, quad).loglik(beta)


def estimate_kappas(dataset: AngleDataset, mu1: float, mu2: float) -> tuple[float, float]:
    """Maximum-likelihood concentrations from the hemispace-split data.

    Each component's mean resultant length r is the indicator-weighted
    average of cos(y - mu); the estimate inverts A(kappa) = I1/I0 at r.
    """
    U = dataset.U.astype(float)
    out = []
    for label, mu, w in (("first", mu1, U), ("second", mu2, 1.0 - U)):
        count = w.sum()
        if count == 0:
            raise ValueError(f"no observations assigned to the {label} component")
        r = float((w * np.cos(dataset.Y - mu)).sum() / count)
        if r <= 0.0:
            raise ValueError(
                f"{label} component is anti-concentrated around its mean (r={r:.4f})"
            )
        if r >= 1.0 - 1e-12:
            raise ValueError(
                f"{label} component is degenerately concentrated (r={r:.12f})"
            )
        out.append(inv_mean_resultant(r))
    return out[0], out[1]


__all__ = [
    "DEFAULT_QUAD_ORDER",
    "LikelihoodError",
    "LikelihoodEvaluator",
    "QuadratureRule",
    "component_densities",
    "estimate_kappas",
    "marginal_loglik",
    "mean_resultant",
]
