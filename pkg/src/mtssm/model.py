"""Model densities and deterministic maps.

AR(1) Gaussian transition for the latent movement state, two-component
von Mises mixture for the observed angles, logistic attraction link, and
the stimuli equation that decomposes the per-trial intercepts beta into
factor effects (gamma), a covariate slope (eta), and interactions (delta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .special import log_i0

STATE_VAR = 1.0  # latent-state innovation variance, fixed

DESIGN_KINDS = ("categorical", "continuous", "interaction")


def sigmoid(t):
    """Numerically stable logistic function, elementwise."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ExperimentDesign:
    """Trial layout: partition matrix D (J x K), optional covariate x, kind.

    Each row of D selects exactly one level, so rows sum to 1.  The kind
    decides which stimuli parameters are free: `categorical` uses only the
    level effects, `continuous` only the covariate slope, `interaction`
    all of them.
    """

    D: np.ndarray
    x: np.ndarray | None
    kind: str

    def __post_init__(self):
        D = np.asarray(self.D, dtype=float)
        if D.ndim != 2:
            raise ValueError("partition matrix must be J x K")
        if not np.all((D == 0.0) | (D == 1.0)):
            raise ValueError("partition matrix entries must be 0/1")
        if not np.all(D.sum(axis=1) == 1.0):
            raise ValueError("each trial must belong to exactly one level")
        object.__setattr__(self, "D", D)
        if self.kind not in DESIGN_KINDS:
            raise ValueError(f"unknown design kind {self.kind!r}")
        if self.x is None:
            if self.kind in ("continuous", "interaction"):
                raise ValueError(f"{self.kind} design requires a covariate")
        else:
            x = np.asarray(self.x, dtype=float)
            if x.shape != (D.shape[0],):
                raise ValueError("covariate length must match trial count")
            if not np.all(np.isfinite(x)):
                raise ValueError("covariate must be finite")
            object.__setattr__(self, "x", x)

    @property
    def n_trials(self) -> int:
        return self.D.shape[0]

    @property
    def n_levels(self) -> int:
        return self.D.shape[1]

    @property
    def levels(self) -> np.ndarray:
        """1-based level index of each trial."""
        return self.D.argmax(axis=1) + 1

    @classmethod
    def from_levels(cls, levels, x=None, kind="categorical", n_levels=None):
        """Build the design from 1-based level labels (and a covariate)."""
        levels = np.asarray(levels, dtype=int)
        K = int(n_levels if n_levels is not None else levels.max())
        if levels.min() < 1 or levels.max() > K:
            raise ValueError("levels must lie in 1..K")
        D = np.zeros((levels.size, K))
        D[np.arange(levels.size), levels - 1] = 1.0
        return cls(D=D, x=None if x is None else np.asarray(x, float), kind=kind)

    def n_params(self) -> int:
        """Dimension of the reduced parameter vector for this kind."""
        K = self.n_levels
        return {"categorical": K, "continuous": 1, "interaction": 2 * K}[self.kind]

    def param_names(self) -> list[str]:
        K = self.n_levels
        if self.kind == "categorical":
            return [f"gamma{k}" for k in range(1, K + 1)]
        if self.kind == "continuous":
            return ["eta"]
        return (
            [f"gamma{k}" for k in range(1, K + 1)]
            + ["eta"]
            + [f"delta{k}" for k in range(2, K + 1)]
        )


@dataclass(frozen=True)
class StimuliParams:
    """Stimuli-equation coefficients: level effects, slope, interactions.

    The first interaction coefficient is pinned to zero for identifiability;
    constructors expanding a reduced vector enforce this.
    """

    gamma: np.ndarray
    eta: float
    delta: np.ndarray

    def __post_init__(self):
        gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        delta = np.atleast_1d(np.asarray(self.delta, dtype=float))
        if gamma.shape != delta.shape:
            raise ValueError("gamma and delta must have the same length")
        if delta[0] != 0.0:
            raise ValueError("first interaction coefficient is fixed at zero")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "eta", float(self.eta))


def expand_theta(theta, design: ExperimentDesign) -> StimuliParams:
    """Expand a reduced parameter vector into full stimuli coefficients.

    Layouts: categorical -> (gamma_1..gamma_K); continuous -> (eta,);
    interaction -> (gamma_1..gamma_K, eta, delta_2..delta_K).
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    K = design.n_levels
    if theta.shape != (design.n_params(),):
        raise ValueError(
            f"expected {design.n_params()} parameters for kind "
            f"{design.kind!r}, got {theta.shape}"
        )
    if design.kind == "categorical":
        return StimuliParams(gamma=theta, eta=0.0, delta=np.zeros(K))
    if design.kind == "continuous":
        return StimuliParams(gamma=np.zeros(K), eta=theta[0], delta=np.zeros(K))
    delta = np.zeros(K)
    delta[1:] = theta[K + 1:]
    return StimuliParams(gamma=theta[:K], eta=theta[K], delta=delta)


def reduce_params(params: StimuliParams, design: ExperimentDesign) -> np.ndarray:
    """Inverse of expand_theta."""
    if design.kind == "categorical":
        return params.gamma.copy()
    if design.kind == "continuous":
        return np.array([params.eta])
    return np.concatenate([params.gamma, [params.eta], params.delta[1:]])


@dataclass(frozen=True)
class MeasurementParams:
    """Fixed category means and estimated von Mises concentrations.

    Default means follow the simulation settings used throughout the test
    suite (distractor up-left at 2.75 rad, target up-right at 0.75 rad).
    """

    mu1: float = 2.75
    mu2: float = 0.75
    kappa1: float = 1.0
    kappa2: float = 1.0

    def __post_init__(self):
        for name in ("mu1", "mu2", "kappa1", "kappa2"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.kappa1 >= 0 and self.kappa2 >= 0):
            raise ValueError("concentrations must be non-negative")
        if self.mu1 == self.mu2:
            raise ValueError("component means must differ")
        for mu in (self.mu1, self.mu2):
            if not -math.pi <= mu < math.pi:
                raise ValueError("component means must lie in [-pi, pi)")

    def with_kappas(self, kappa1: float, kappa2: float) -> "MeasurementParams":
        return MeasurementParams(self.mu1, self.mu2, kappa1, kappa2)


def transition_logpdf(z_now, z_prev, state_var=STATE_VAR):
    """Log density of the AR(1) transition: N(z_now; z_prev, state_var)."""
    z_now, z_prev, state_var = float(z_now), float(z_prev), float(state_var)
    if not (math.isfinite(z_now) and math.isfinite(z_prev)):
        raise ValueError("non-finite state values")
    if not (math.isfinite(state_var) and state_var > 0):
        raise ValueError("state variance must be positive and finite")
    d = z_now - z_prev
    return -0.5 * math.log(2.0 * math.pi * state_var) - 0.5 * d * d / state_var


def vonmises_logpdf(y, mu, kappa):
    """Log density of the von Mises law at angle(s) y.

    kappa = 0 degenerates to the uniform distribution on the circle; the
    normalizer uses the stable log I0 so arbitrarily large concentrations
    are fine.
    """
    kappa = float(kappa)
    if kappa < 0:
        raise ValueError("concentration must be >= 0")
    y = np.asarray(y, dtype=float)
    out = kappa * np.cos(y - float(mu)) - math.log(2.0 * math.pi) - log_i0(kappa)
    return out if out.ndim else float(out)


def attraction_probability(beta, z):
    """Probability that the angle is drawn from the distractor component.

    Logistic in beta + z; computed in an overflow-safe form and clipped
    away from exact 0/1 so downstream logs stay finite.
    """
    p = sigmoid(np.asarray(beta, dtype=float) + np.asarray(z, dtype=float))
    p = np.clip(p, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)
    return p if np.ndim(p) else float(p)


def mixture_logpdf(y, u, pi, meas: MeasurementParams):
    """Component-labelled log density of the angle mixture.

    u picks the component the angle's hemispace assigns it to; pi is the
    attraction probability entering as the mixture weight.
    """
    pi = np.asarray(pi, dtype=float)
    if np.any((pi <= 0.0) | (pi >= 1.0)):
        raise ValueError("mixture weight must lie strictly in (0, 1)")
    u = np.asarray(u)
    if not np.all((u == 0) | (u == 1)):
        raise ValueError("indicators must be 0/1")
    u = u.astype(float)
    lp1 = np.log(pi) + vonmises_logpdf(y, meas.mu1, meas.kappa1)
    lp2 = np.log1p(-pi) + vonmises_logpdf(y, meas.mu2, meas.kappa2)
    out = u * lp1 + (1.0 - u) * lp2
    return out if np.ndim(out) else float(out)


def mixture_density(y, pi, meas: MeasurementParams):
    """Unlabelled mixture density pi*f1(y) + (1-pi)*f2(y) (not logged)."""
    f1 = np.exp(vonmises_logpdf(y, meas.mu1, meas.kappa1))
    f2 = np.exp(vonmises_logpdf(y, meas.mu2, meas.kappa2))
    return pi * f1 + (1.0 - pi) * f2


def stimuli_beta(design: ExperimentDesign, params: StimuliParams) -> np.ndarray:
    """Per-trial intercepts beta_j from the stimuli equation.

    beta_j = sum_k d_jk gamma_k + x_j (eta + sum_k d_jk delta_k); the
    covariate block drops out for categorical designs.
    """
    if params.gamma.shape[0] != design.n_levels:
        raise ValueError(
            f"parameter length {params.gamma.shape[0]} does not match "
            f"{design.n_levels} design levels"
        )
    beta = design.D @ params.gamma
    if design.kind == "categorical":
        return beta
    return beta + design.x * (params.eta + design.D @ params.delta)
