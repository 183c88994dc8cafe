"""Adaptive marginal Metropolis-Hastings over the reduced stimuli parameters.

The latent states are integrated out by the filter's prediction-error
likelihood, so the chain moves only in the small parameter space of the
design (level effects / slope / interactions).  Proposals are symmetric
Gaussians whose covariance follows Haario's empirical-covariance rule
during burn-in and stays frozen afterwards.

Chains are independent: each owns a counter-based RNG stream spawned from
the master seed, so results are identical no matter how many worker
threads execute them.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .filtering import FilterError, smooth
from .likelihood import (
    DEFAULT_QUAD_ORDER,
    LikelihoodError,
    LikelihoodEvaluator,
    QuadratureRule,
)
from .model import ExperimentDesign, MeasurementParams, expand_theta, stimuli_beta
from .preprocess import AngleDataset

log = logging.getLogger(__name__)

ADAPT_EPS = 1e-6
MAX_KERNEL_FAILURES = 25


class ChainAbort(RuntimeError):
    """A chain hit repeated kernel failures and gave up."""

    def __init__(self, chain_id, iteration, cause):
        self.chain_id = chain_id
        self.iteration = iteration
        self.cause = cause
        super().__init__(
            f"chain {chain_id} aborted at iteration {iteration}: {cause}"
        )


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 20
    iterations: int = 10000
    burn_in: int = 2500
    adapt_interval: int = 25
    prior_var: float = 25.0
    seed: int = 0
    threads: int | None = None
    quad_order: int = DEFAULT_QUAD_ORDER
    state_thin: int = 10

    def __post_init__(self):
        if self.chains < 1:
            raise ValueError("need at least one chain")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn-in must be shorter than the run")
        if self.adapt_interval < 1:
            raise ValueError("adaptation interval must be >= 1")
        if not self.prior_var > 0:
            raise ValueError("prior variance must be positive")
        if self.state_thin < 1:
            raise ValueError("state thinning interval must be >= 1")


@dataclass(frozen=True)
class PosteriorDraws:
    """Kept draws plus everything needed to audit the run."""

    draws: np.ndarray  # (chains, kept, d)
    param_names: list[str]
    acceptance_rate: np.ndarray  # per chain
    adapt_trace: list[list[tuple[int, np.ndarray]]]  # per chain: (iteration, cov)
    theta0: np.ndarray
    sigma0: np.ndarray
    smoothed_mean: np.ndarray  # (I, N) posterior average of smoothed states
    smoothed_var: np.ndarray  # (I, N) total posterior variance of the states
    kernel_failures: np.ndarray  # per chain
    config: SamplerConfig

    @property
    def pooled(self) -> np.ndarray:
        return self.draws.reshape(-1, self.draws.shape[2])

    @property
    def posterior_mean(self) -> np.ndarray:
        return self.pooled.mean(axis=0)


def log_prior(theta, prior_var: float) -> float:
    theta = np.asarray(theta, dtype=float)
    return float(
        -0.5 * np.sum(theta**2) / prior_var
        - 0.5 * theta.size * math.log(2.0 * math.pi * prior_var)
    )


def log_posterior_kernel(theta, evaluator: LikelihoodEvaluator,
                         design: ExperimentDesign, prior_var: float) -> float:
    """Marginal log likelihood at theta plus the Gaussian log prior."""
    beta = stimuli_beta(design, expand_theta(theta, design))
    return evaluator.loglik(beta) + log_prior(theta, prior_var)


def _kernel_with_moments(theta, evaluator, design, prior_var):
    beta = stimuli_beta(design, expand_theta(theta, design))
    ll, moments = evaluator.loglik_and_moments(beta)
    return ll + log_prior(theta, prior_var), moments


def initialize_theta(evaluator: LikelihoodEvaluator, design: ExperimentDesign,
                     step0: float = 1.0, tol: float = 1e-5,
                     max_evals: int = 5000):
    """Start point and proposal covariance for the chains.

    theta0 maximizes the marginal log likelihood by coordinate search
    (derivative-free, with one restart at full step size); sigma0 inverts
    the negated finite-difference Hessian there, falling back to 0.1*I
    when that is not positive definite.
    """
    d = design.n_params()

    evals = 0

    def f(theta):
        nonlocal evals
        evals += 1
        return evaluator.loglik(stimuli_beta(design, expand_theta(theta, design)))

    theta = np.zeros(d)
    best = f(theta)

    def search(theta, best, step):
        while step > tol and evals < max_evals:
            improved = False
            for k in range(d):
                for delta in (step, -step):
                    cand = theta.copy()
                    cand[k] += delta
                    val = f(cand)
                    if val > best:
                        theta, best = cand, val
                        improved = True
                        break
            if not improved:
                step *= 0.5
        return theta, best

    theta, best = search(theta, best, step0)
    theta, best = search(theta, best, step0)  # restart at full step

    h = 1e-3
    H = np.empty((d, d))
    f0 = f(theta)
    for k in range(d):
        ek = np.zeros(d)
        ek[k] = h
        H[k, k] = (f(theta + ek) - 2.0 * f0 + f(theta - ek)) / h**2
        for l in range(k + 1, d):
            el = np.zeros(d)
            el[l] = h
            H[k, l] = H[l, k] = (
                f(theta + ek + el) - f(theta + ek - el)
                - f(theta - ek + el) + f(theta - ek - el)
            ) / (4.0 * h**2)
    neg = -(H + H.T) / 2.0
    try:
        vals, vecs = np.linalg.eigh(neg)
    except np.linalg.LinAlgError:
        vals = np.array([-1.0])
        vecs = None
    if vecs is None or vals.min() <= 1e-10 * max(vals.max(), 1.0) or not np.all(np.isfinite(vals)):
        log.warning("non-PD Hessian at theta0; falling back to 0.1*I proposal")
        sigma0 = 0.1 * np.eye(d)
    else:
        sigma0 = (vecs / vals) @ vecs.T
        sigma0 = (sigma0 + sigma0.T) / 2.0
    return theta, sigma0


def _cholesky(sigma, context):
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        d = sigma.shape[0]
        jitter = ADAPT_EPS * max(1.0, float(np.trace(sigma)) / d)
        log.warning("%s: proposal covariance not PD, adding jitter", context)
        return np.linalg.cholesky(sigma + jitter * np.eye(d))


@dataclass
class _ChainResult:
    kept: np.ndarray
    acceptance_rate: float
    adapt_trace: list
    smooth_mean_sum: np.ndarray
    smooth_mean_sqsum: np.ndarray
    smooth_var_sum: np.ndarray
    smooth_count: int
    kernel_failures: int


def _chain_worker(evaluator, design, config: SamplerConfig, chain_id: int,
                  theta0, sigma0, seed_seq) -> _ChainResult:
    rng = np.random.Generator(np.random.Philox(seed_seq))
    d = theta0.size
    s_d = 2.38**2 / d
    sigma = sigma0.copy()
    L = _cholesky(sigma, f"chain {chain_id} init")
    theta = theta0.copy()
    try:
        lp, moments = _kernel_with_moments(theta, evaluator, design, config.prior_var)
    except (FilterError, LikelihoodError) as exc:
        raise ChainAbort(chain_id, 0, exc) from exc
    if not math.isfinite(lp):
        raise ChainAbort(chain_id, 0, f"non-finite kernel at theta0 ({lp})")

    history = np.empty((config.iterations, d))
    I, N = moments.filt_mean.shape
    msum = np.zeros((I, N))
    msqsum = np.zeros((I, N))
    vsum = np.zeros((I, N))
    scount = 0
    accepts = 0
    failures = 0
    streak = 0
    adapt_trace = [(0, sigma.copy())]

    for t in range(config.iterations):
        prop = theta + L @ rng.standard_normal(d)
        try:
            lp_prop, moments_prop = _kernel_with_moments(
                prop, evaluator, design, config.prior_var
            )
            streak = 0
        except (FilterError, LikelihoodError) as exc:
            failures += 1
            streak += 1
            if streak > MAX_KERNEL_FAILURES:
                raise ChainAbort(chain_id, t, exc) from exc
            log.warning("chain %d iteration %d: kernel failure (%s)", chain_id, t, exc)
            lp_prop, moments_prop = -math.inf, None
        r = rng.random()
        log_r = math.log(r) if r > 0.0 else -math.inf
        if lp_prop - lp > log_r:
            theta, lp, moments = prop, lp_prop, moments_prop
            accepts += 1
        history[t] = theta
        if t >= config.burn_in and (t - config.burn_in) % config.state_thin == 0:
            sm = smooth(moments)
            msum += sm.mean
            msqsum += sm.mean**2
            vsum += sm.var
            scount += 1
        t1 = t + 1
        if t1 <= config.burn_in and t1 % config.adapt_interval == 0 and t1 >= 2:
            cov = np.atleast_2d(np.cov(history[:t1].T))
            sigma = s_d * cov + s_d * ADAPT_EPS * np.eye(d)
            L = _cholesky(sigma, f"chain {chain_id} iteration {t1}")
            adapt_trace.append((t1, sigma.copy()))

    return _ChainResult(
        kept=history[config.burn_in:],
        acceptance_rate=accepts / config.iterations,
        adapt_trace=adapt_trace,
        smooth_mean_sum=msum,
        smooth_mean_sqsum=msqsum,
        smooth_var_sum=vsum,
        smooth_count=scount,
        kernel_failures=failures,
    )


def run_chain(config: SamplerConfig, dataset: AngleDataset,
              design: ExperimentDesign, meas: MeasurementParams,
              chain_id: int, theta0=None, sigma0=None) -> _ChainResult:
    """Run a single chain; matches the corresponding chain of run_sampler."""
    evaluator = LikelihoodEvaluator(
        dataset, meas, quad=QuadratureRule.gauss_hermite(config.quad_order)
    )
    if theta0 is None or sigma0 is None:
        theta0, sigma0 = initialize_theta(evaluator, design)
    children = np.random.SeedSequence(config.seed).spawn(config.chains)
    return _chain_worker(
        evaluator, design, config, chain_id,
        np.asarray(theta0, dtype=float), np.asarray(sigma0, dtype=float),
        children[chain_id],
    )


def run_sampler(dataset: AngleDataset, design: ExperimentDesign,
                meas: MeasurementParams, config: SamplerConfig) -> PosteriorDraws:
    """Fit the model: initialize once, run all chains, merge by chain index."""
    evaluator = LikelihoodEvaluator(
        dataset, meas, quad=QuadratureRule.gauss_hermite(config.quad_order)
    )
    theta0, sigma0 = initialize_theta(evaluator, design)
    children = np.random.SeedSequence(config.seed).spawn(config.chains)
    workers = config.threads or min(config.chains, os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(
                _chain_worker, evaluator, design, config, c, theta0, sigma0, children[c]
            )
            for c in range(config.chains)
        ]
        results = [f.result() for f in futures]

    draws = np.stack([r.kept for r in results])
    total = sum(r.smooth_count for r in results)
    msum = sum(r.smooth_mean_sum for r in results)
    msqsum = sum(r.smooth_mean_sqsum for r in results)
    vsum = sum(r.smooth_var_sum for r in results)
    smoothed_mean = msum / total
    smoothed_var = vsum / total + msqsum / total - smoothed_mean**2
    return PosteriorDraws(
        draws=draws,
        param_names=design.param_names(),
        acceptance_rate=np.array([r.acceptance_rate for r in results]),
        adapt_trace=[r.adapt_trace for r in results],
        theta0=theta0,
        sigma0=sigma0,
        smoothed_mean=smoothed_mean,
        smoothed_var=smoothed_var,
        kernel_failures=np.array([r.kernel_failures for r in results]),
        config=config,
    )
