"""Marginal likelihood quadrature and the concentration estimators."""

import math

import numpy as np
import pytest

from mtssm.filtering import run_filter
from mtssm.gof import simulate_dataset
from mtssm.likelihood import (
    LikelihoodError,
    LikelihoodEvaluator,
    QuadratureRule,
    component_densities,
    estimate_kappas,
    marginal_loglik,
)
from mtssm.model import ExperimentDesign, MeasurementParams, vonmises_logpdf
from mtssm.preprocess import AngleDataset, hemispace_indicator


def _dataset_from_angles(Y):
    Y = np.asarray(Y, dtype=float)
    return AngleDataset(
        Y=Y,
        U=hemispace_indicator(Y),
        subjects=np.arange(1, Y.shape[0] + 1),
        trials=np.arange(1, Y.shape[1] + 1),
    )


def trapezoid_marginal_loglik(dataset, beta, meas, n_points=1_000_000, span=10.0):
    """Independent reference: filter + dense trapezoid integration.

    Each observation's mixture density is integrated against the Gaussian
    predictive on [mean - span*sd, mean + span*sd].
    """
    moments = run_filter(dataset.U, beta)
    f1, f2 = component_densities(dataset.Y, meas)
    total = 0.0
    I, J, N = dataset.Y.shape
    for i in range(I):
        for n in range(N):
            m = moments.pred_mean[i, n]
            sd = math.sqrt(moments.pred_var[i, n])
            z = np.linspace(m - span * sd, m + span * sd, n_points)
            w = np.exp(-0.5 * ((z - m) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))
            pi = 1.0 / (1.0 + np.exp(-(beta[:, None] + z[None, :])))
            for j in range(J):
                dens = f2[i, j, n] + (f1[i, j, n] - f2[i, j, n]) * pi[j]
                total += math.log(np.trapezoid(dens * w, z))
    return total


class TestQuadratureRule:
    def test_gauss_hermite_contract(self):
        rule = QuadratureRule.gauss_hermite(32)
        assert rule.order == 32
        assert np.all(rule.weights > 0)
        assert rule.weights.sum() == pytest.approx(math.sqrt(math.pi), abs=1e-12)

    def test_tampered_weights_rejected(self):
        rule = QuadratureRule.gauss_hermite(8)
        with pytest.raises(ValueError):
            QuadratureRule(nodes=rule.nodes, weights=rule.weights * 1.01)
        with pytest.raises(ValueError):
            QuadratureRule(nodes=rule.nodes, weights=-rule.weights)

    def test_integrates_gaussian_moments(self):
        # E[z^2] under N(0,1) via the substitution z = sqrt(2) x
        rule = QuadratureRule.gauss_hermite(32)
        z = math.sqrt(2.0) * rule.nodes
        val = float((rule.weights * z**2).sum() / math.sqrt(math.pi))
        assert val == pytest.approx(1.0, abs=1e-12)


class TestMarginalLoglik:
    def test_uniform_components_collapse(self):
        rng = np.random.default_rng(0)
        Y = rng.uniform(-math.pi + 1e-9, math.pi, size=(2, 3, 7))
        dataset = _dataset_from_angles(Y)
        meas = MeasurementParams(2.75, 0.75, 0.0, 0.0)
        got = marginal_loglik(dataset, rng.normal(size=3), meas)
        expect = -2 * 3 * 7 * math.log(2 * math.pi)
        assert got == pytest.approx(expect, abs=1e-8)

    def test_single_observation_against_trapezoid(self, meas100):
        dataset = _dataset_from_angles(np.array([[[2.6]]]))
        beta = np.array([0.4])
        got = marginal_loglik(dataset, beta, meas100,
                              quad=QuadratureRule.gauss_hermite(64))
        ref = trapezoid_marginal_loglik(dataset, beta, meas100)
        assert got == pytest.approx(ref, rel=1e-6)

    def test_small_dataset_against_trapezoid(self, meas100):
        rng = np.random.default_rng(5)
        dataset = simulate_dataset(np.array([0.5, -0.3]),
                                   ExperimentDesign.from_levels([1, 2], kind="categorical"),
                                   meas100, n_subjects=2, n_steps=4, seed=rng)
        beta = np.array([0.5, -0.3])
        got = marginal_loglik(dataset, beta, meas100)
        ref = trapezoid_marginal_loglik(dataset, beta, meas100, n_points=200_001)
        assert got == pytest.approx(ref, rel=1e-6)

    def test_quadrature_order_stability(self, meas100, small_dataset):
        dataset, theta = small_dataset
        beta = np.array([theta[0], theta[0], theta[1], theta[1]])
        m32 = marginal_loglik(dataset, beta, meas100,
                              quad=QuadratureRule.gauss_hermite(32))
        m64 = marginal_loglik(dataset, beta, meas100,
                              quad=QuadratureRule.gauss_hermite(64))
        assert m32 == pytest.approx(m64, rel=1e-8)

    def test_monotone_in_beta_for_target_data(self, meas100):
        # all angles at the target mean with u = 0: pushing probability
        # toward the distractor component can only hurt
        Y = np.full((1, 2, 6), 0.75)
        dataset = _dataset_from_angles(Y)
        vals = [
            marginal_loglik(dataset, np.full(2, b), meas100)
            for b in np.linspace(-2.0, 4.0, 13)
        ]
        assert np.all(np.diff(vals) < 0)

    def test_noise_degrades_fit(self, meas100, small_dataset):
        dataset, theta = small_dataset
        beta = np.array([theta[0], theta[0], theta[1], theta[1]])
        clean = marginal_loglik(dataset, beta, meas100)
        rng = np.random.default_rng(8)
        noisy = dataset.Y + rng.normal(scale=0.6, size=dataset.Y.shape)
        noisy = np.remainder(noisy + math.pi, 2 * math.pi) - math.pi
        noisy[noisy <= -math.pi] += 2 * math.pi
        noised = _dataset_from_angles(noisy)
        assert marginal_loglik(noised, beta, meas100) < clean

    def test_beta_length_validated(self, meas100, small_dataset):
        dataset, _ = small_dataset
        with pytest.raises(ValueError):
            marginal_loglik(dataset, np.zeros(3), meas100)

    def test_nonfinite_term_reports_location(self):
        # with both components extremely concentrated, an angle far from
        # either mean underflows the mixture density to zero and the log
        # term blows up; the error must name the observation
        Y = np.full((2, 2, 3), 0.75)
        Y[1, 1, 2] = 1.75  # ~1 rad from both means
        dataset = _dataset_from_angles(Y)
        meas = MeasurementParams(2.75, 0.75, 1e6, 1e6)
        with pytest.raises(LikelihoodError) as info:
            marginal_loglik(dataset, np.zeros(2), meas)
        assert info.value.subject == 2
        assert info.value.trial == 2
        assert info.value.step == 2


class TestEstimateKappas:
    def test_recovers_generating_concentration(self, meas100, design_k2):
        dataset = simulate_dataset(np.array([0.0, 0.0]), design_k2, meas100,
                                   n_subjects=20, n_steps=26, seed=3)
        k1, k2 = estimate_kappas(dataset, 2.75, 0.75)
        # 20*4*26 ~ 2000 observations: expect within ~10%
        assert k1 == pytest.approx(100.0, rel=0.10)
        assert k2 == pytest.approx(100.0, rel=0.10)

    def test_invariant_to_index_permutation(self, meas100, design_k2):
        dataset = simulate_dataset(np.array([0.3, -0.3]), design_k2, meas100,
                                   n_subjects=4, n_steps=11, seed=1)
        rng = np.random.default_rng(0)
        pi = rng.permutation(dataset.n_subjects)
        pj = rng.permutation(dataset.n_trials)
        shuffled = AngleDataset(
            Y=dataset.Y[pi][:, pj],
            U=dataset.U[pi][:, pj],
            subjects=dataset.subjects[pi],
            trials=dataset.trials[pj],
        )
        assert estimate_kappas(shuffled, 2.75, 0.75) == pytest.approx(
            estimate_kappas(dataset, 2.75, 0.75), abs=1e-12
        )

    def test_empty_component_rejected(self):
        Y = np.full((1, 1, 4), 0.3)  # all target side
        with pytest.raises(ValueError, match="first"):
            estimate_kappas(_dataset_from_angles(Y), 2.75, 0.75)

    def test_anticoncentrated_rejected(self):
        # angles sit opposite the component mean: r < 0
        Y = np.full((1, 2, 4), 0.3)
        Y[0, 1] = 2.9  # populate the first component
        with pytest.raises(ValueError, match="anti-concentrated"):
            estimate_kappas(_dataset_from_angles(Y), 2.75, 0.3 - math.pi)

    def test_degenerate_concentration_rejected(self):
        Y = np.full((1, 2, 4), 0.75)
        Y[0, 1] = 2.75
        with pytest.raises(ValueError, match="degenerately"):
            estimate_kappas(_dataset_from_angles(Y), 2.75, 0.75)


class TestEvaluator:
    def test_matches_one_shot_function(self, meas100, small_dataset):
        dataset, theta = small_dataset
        beta = np.array([theta[0], theta[0], theta[1], theta[1]])
        ev = LikelihoodEvaluator(dataset, meas100)
        assert ev.loglik(beta) == marginal_loglik(dataset, beta, meas100)

    def test_moments_match_run_filter(self, meas100, small_dataset):
        dataset, theta = small_dataset
        beta = np.array([theta[0], theta[0], theta[1], theta[1]])
        _, moments = LikelihoodEvaluator(dataset, meas100).loglik_and_moments(beta)
        direct = run_filter(dataset.U, beta)
        np.testing.assert_allclose(moments.filt_mean, direct.filt_mean, atol=1e-14)
        np.testing.assert_allclose(moments.pred_var, direct.pred_var, atol=1e-14)
