"""Adaptive MH sampler: kernel algebra, determinism, initialization."""

import math

import numpy as np
import pytest

from mtssm.gof import simulate_dataset
from mtssm.likelihood import LikelihoodEvaluator, QuadratureRule
from mtssm.model import ExperimentDesign, MeasurementParams, expand_theta, stimuli_beta
from mtssm.sampler import (
    ChainAbort,
    PosteriorDraws,
    SamplerConfig,
    initialize_theta,
    log_posterior_kernel,
    log_prior,
    run_chain,
    run_sampler,
)
from tests.test_likelihood import _dataset_from_angles, trapezoid_marginal_loglik

QUICK = SamplerConfig(chains=2, iterations=120, burn_in=40, seed=7)


@pytest.fixture(scope="module")
def fit_inputs():
    meas = MeasurementParams(2.75, 0.75, 100.0, 100.0)
    design = ExperimentDesign.from_levels([1, 1, 2, 2], kind="categorical")
    dataset = simulate_dataset(np.array([0.6, -0.4]), design, meas,
                               n_subjects=3, n_steps=16, seed=13)
    return dataset, design, meas


class TestKernel:
    def test_prior_gaussian_algebra(self):
        got = log_prior(np.array([5.0, 0.0]), 25.0)
        expect = -(5.0**2) / (2 * 25.0) - 2 * 0.5 * math.log(2 * math.pi * 25.0)
        assert got == pytest.approx(expect, abs=1e-13)

    def test_kernel_is_loglik_plus_prior(self, fit_inputs):
        dataset, design, meas = fit_inputs
        ev = LikelihoodEvaluator(dataset, meas)
        theta = np.zeros(2)
        got = log_posterior_kernel(theta, ev, design, 25.0)
        beta = stimuli_beta(design, expand_theta(theta, design))
        assert got == pytest.approx(ev.loglik(beta) + log_prior(theta, 25.0),
                                    abs=1e-12)

    def test_kernel_matches_bruteforce_grid(self, meas100):
        """Independent recomputation: trapezoid likelihood + prior formula."""
        design = ExperimentDesign.from_levels([1, 2], kind="categorical")
        dataset = simulate_dataset(np.array([0.7, -0.2]), design, meas100,
                                   n_subjects=2, n_steps=4, seed=29)
        ev = LikelihoodEvaluator(dataset, meas100)
        for theta in ([0.0, 0.0], [0.7, -0.2], [-1.0, 1.5], [2.0, 2.0]):
            theta = np.array(theta)
            got = log_posterior_kernel(theta, ev, design, 25.0)
            beta = stimuli_beta(design, expand_theta(theta, design))
            ll = trapezoid_marginal_loglik(dataset, beta, meas100,
                                           n_points=400_001)
            prior = -0.5 * float(theta @ theta) / 25.0 \
                - theta.size / 2.0 * math.log(2 * math.pi * 25.0)
            assert got == pytest.approx(ll + prior, rel=1e-6)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            SamplerConfig(chains=0)
        with pytest.raises(ValueError):
            SamplerConfig(iterations=100, burn_in=100)
        with pytest.raises(ValueError):
            SamplerConfig(adapt_interval=0)
        with pytest.raises(ValueError):
            SamplerConfig(prior_var=0.0)


class TestDeterminism:
    def test_same_seed_bit_identical(self, fit_inputs):
        dataset, design, meas = fit_inputs
        a = run_sampler(dataset, design, meas, QUICK)
        b = run_sampler(dataset, design, meas, QUICK)
        np.testing.assert_array_equal(a.draws, b.draws)
        np.testing.assert_array_equal(a.acceptance_rate, b.acceptance_rate)

    def test_thread_count_does_not_matter(self, fit_inputs):
        dataset, design, meas = fit_inputs
        one = run_sampler(dataset, design, meas,
                          SamplerConfig(chains=3, iterations=90, burn_in=30,
                                        seed=11, threads=1))
        three = run_sampler(dataset, design, meas,
                            SamplerConfig(chains=3, iterations=90, burn_in=30,
                                          seed=11, threads=3))
        np.testing.assert_array_equal(one.draws, three.draws)

    def test_different_seeds_differ(self, fit_inputs):
        dataset, design, meas = fit_inputs
        a = run_sampler(dataset, design, meas, QUICK)
        b = run_sampler(dataset, design, meas,
                        SamplerConfig(chains=2, iterations=120, burn_in=40, seed=8))
        assert not np.array_equal(a.draws, b.draws)

    def test_run_chain_matches_sampler_chain(self, fit_inputs):
        dataset, design, meas = fit_inputs
        full = run_sampler(dataset, design, meas, QUICK)
        single = run_chain(QUICK, dataset, design, meas, chain_id=1,
                           theta0=full.theta0, sigma0=full.sigma0)
        np.testing.assert_array_equal(single.kept, full.draws[1])


class TestRunShape:
    def test_draws_shape_and_rates(self, fit_inputs):
        dataset, design, meas = fit_inputs
        out = run_sampler(dataset, design, meas, QUICK)
        assert isinstance(out, PosteriorDraws)
        assert out.draws.shape == (2, 80, 2)
        assert out.param_names == ["gamma1", "gamma2"]
        assert np.all((out.acceptance_rate >= 0) & (out.acceptance_rate <= 1))
        assert out.pooled.shape == (160, 2)
        assert out.posterior_mean.shape == (2,)
        assert out.smoothed_mean.shape == (3, 16)
        assert np.all(out.smoothed_var > 0)

    def test_adaptation_stops_at_burn_in(self, fit_inputs):
        dataset, design, meas = fit_inputs
        out = run_sampler(dataset, design, meas, QUICK)
        for trace in out.adapt_trace:
            assert len(trace) > 1  # adapted at least once
            for iteration, cov in trace:
                assert iteration <= QUICK.burn_in
                assert cov.shape == (2, 2)
                # proposal stays symmetric positive definite
                np.testing.assert_allclose(cov, cov.T, atol=1e-15)
                assert np.linalg.eigvalsh(cov).min() > 0

    def test_acceptance_moves_the_chain(self, fit_inputs):
        dataset, design, meas = fit_inputs
        out = run_sampler(dataset, design, meas, QUICK)
        assert out.acceptance_rate.mean() > 0.05
        assert np.ptp(out.draws[:, :, 0]) > 0  # not frozen


class TestInitialization:
    def test_symmetric_data_starts_at_zero(self):
        # one trial per hemispace at every step, angles mirror-paired about
        # pi/2, kappas equal: the likelihood is symmetric in theta, with
        # its maximum at 0 (verified against the grid below)
        meas = MeasurementParams(2.75, 0.75, 50.0, 50.0)
        design = ExperimentDesign.from_levels([1, 1], kind="categorical")
        Y = np.empty((2, 2, 5))
        Y[:, 0, :] = 2.75
        Y[:, 1, :] = 0.75
        dataset = _dataset_from_angles(Y)
        ev = LikelihoodEvaluator(dataset, meas)
        theta0, sigma0 = initialize_theta(ev, design)

        grid = np.linspace(-2, 2, 81)
        vals = [ev.loglik(stimuli_beta(design, expand_theta([g], design)))
                for g in grid]
        assert abs(grid[int(np.argmax(vals))]) < 0.51  # flat top near 0
        assert abs(theta0[0]) < 1e-4
        assert sigma0.shape == (1, 1)

    def test_grid_oracle_one_parameter(self, meas100):
        design = ExperimentDesign.from_levels([1, 1, 1], kind="categorical")
        dataset = simulate_dataset(np.array([0.9]), design, meas100,
                                   n_subjects=3, n_steps=13, seed=4)
        ev = LikelihoodEvaluator(dataset, meas100)
        theta0, sigma0 = initialize_theta(ev, design)
        grid = np.arange(-4.0, 4.0, 1e-3)
        vals = np.array([
            ev.loglik(stimuli_beta(design, expand_theta([g], design)))
            for g in grid
        ])
        assert abs(theta0[0] - grid[int(np.argmax(vals))]) < 2e-3

    def test_proposal_spd(self, fit_inputs):
        dataset, design, meas = fit_inputs
        ev = LikelihoodEvaluator(dataset, meas)
        _, sigma0 = initialize_theta(ev, design)
        np.testing.assert_allclose(sigma0, sigma0.T, atol=1e-12)
        assert np.linalg.eigvalsh(sigma0).min() > 0


class TestFailurePolicy:
    def test_bad_kernel_at_start_aborts(self):
        # angles far from both means at huge concentration: every kernel
        # call fails, so the chain cannot even initialize
        Y = np.full((1, 2, 3), 1.75)
        dataset = _dataset_from_angles(Y)
        meas = MeasurementParams(2.75, 0.75, 1e6, 1e6)
        design = ExperimentDesign.from_levels([1, 2], kind="categorical")
        with pytest.raises(ChainAbort) as info:
            run_chain(SamplerConfig(chains=1, iterations=10, burn_in=5, seed=0),
                      dataset, design, meas, chain_id=0,
                      theta0=np.zeros(2), sigma0=np.eye(2))
        assert info.value.chain_id == 0
        assert info.value.iteration == 0
