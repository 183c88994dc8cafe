"""Forward filter and backward smoother against grid and recode oracles."""

import numpy as np
import pytest

from mtssm.filtering import (
    FilterError,
    curvature,
    filter_init,
    filter_predict,
    filter_update,
    run_filter,
    score,
    smooth,
    update_objective,
)
from mtssm.model import MeasurementParams


def _objective_on_grid(z_grid, pred_mean, pred_var, u_row, beta):
    """Vectorized log posterior of the state over a z grid.

    Only the terms that depend on z matter for the argmax: the Gaussian
    pull and, per trial, u*log(pi) + (1-u)*log(1-pi).
    """
    z = z_grid[:, None]
    t = beta[None, :] + z
    # log sigmoid / log(1 - sigmoid) in a stable form
    log_pi = np.where(t > 0, -np.log1p(np.exp(-t)), t - np.log1p(np.exp(t)))
    log_1mpi = log_pi - t
    quad = -0.5 * (z_grid - pred_mean) ** 2 / pred_var
    return quad + (u_row[None, :] * log_pi + (1 - u_row[None, :]) * log_1mpi).sum(axis=1)


class TestPrimitives:
    def test_init_constants(self):
        assert filter_init() == (0.0, 1.0)
        assert filter_init() == filter_init()

    def test_predict_adds_state_variance(self):
        assert filter_predict(0.3, 0.5, 1.0) == (0.3, 1.5)
        assert filter_predict(0.3, 0.5, 0.0) == (0.3, 0.5)

    def test_predict_telescopes(self):
        m, v = filter_init()
        for _ in range(7):
            m, v = filter_predict(m, v, 1.0)
        assert (m, v) == (0.0, 8.0)

    def test_predict_rejects_bad_variance(self):
        with pytest.raises(ValueError):
            filter_predict(0.0, 0.0)


class TestScoreCurvature:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(21)
        meas = MeasurementParams(2.75, 0.75, 5.0, 5.0)
        h = 1e-5
        for _ in range(40):
            J = int(rng.integers(1, 7))
            beta = rng.normal(scale=2, size=J)
            u = rng.integers(0, 2, size=J).astype(float)
            y = np.where(u == 1, 2.75, 0.75) + rng.normal(scale=0.05, size=J)
            m, v = rng.normal(), rng.uniform(0.5, 3.0)
            z = rng.normal()

            def f(zz):
                return update_objective(zz, m, v, y, u, beta, meas)

            fd1 = (f(z + h) - f(z - h)) / (2 * h)
            fd2 = (f(z + h) - 2 * f(z) + f(z - h)) / h**2
            assert score(z, m, v, u, beta) == pytest.approx(fd1, rel=1e-6, abs=1e-6)
            assert curvature(z, v, beta) == pytest.approx(fd2, rel=1e-4, abs=1e-4)

    def test_score_strictly_decreasing_in_z(self):
        beta = np.array([0.5, -1.0, 2.0])
        u = np.array([1.0, 0.0, 1.0])
        zs = np.linspace(-6, 6, 101)
        vals = [score(z, 0.2, 1.3, u, beta) for z in zs]
        assert np.all(np.diff(vals) < 0)


class TestFilterUpdate:
    def test_no_trials_returns_predictive(self):
        m, v = filter_update(0.7, 1.9, np.zeros(0), np.zeros(0))
        assert (m, v) == (0.7, 1.9)

    def test_symmetric_configuration_stays_at_zero(self):
        # balanced indicators with zero intercepts: the score vanishes at
        # the predictive mean
        m, v = filter_update(0.0, 1.0, np.array([1.0, 0.0]), np.zeros(2))
        assert m == pytest.approx(0.0, abs=1e-10)
        assert v < 1.0  # the update always sharpens

    def test_grid_oracle_small_instances(self):
        rng = np.random.default_rng(9)
        z_grid = np.arange(-10.0, 10.0, 1e-4)
        for _ in range(10):
            J = 4
            beta = rng.normal(scale=2.0, size=J)
            u = rng.integers(0, 2, size=J).astype(float)
            m = rng.normal(scale=1.5)
            v = rng.uniform(0.5, 2.5)
            mode, var = filter_update(m, v, u, beta)
            obj = _objective_on_grid(z_grid, m, v, u, beta)
            k = int(np.argmax(obj))
            assert abs(mode - z_grid[k]) < 2e-4
            d2 = (obj[k + 1] - 2 * obj[k] + obj[k - 1]) / 1e-8
            assert var == pytest.approx(-1.0 / d2, rel=1e-3)

    def test_invariant_to_trial_order(self):
        rng = np.random.default_rng(2)
        beta = rng.normal(size=5)
        u = rng.integers(0, 2, size=5).astype(float)
        perm = rng.permutation(5)
        a = filter_update(0.4, 1.2, u, beta)
        b = filter_update(0.4, 1.2, u[perm], beta[perm])
        assert a == pytest.approx(b, abs=1e-12)

    def test_extreme_intercepts_converge(self):
        # widely spread intercepts produce long sigmoid plateaus; the
        # safeguarded Newton must still land on the root
        beta = np.array([-30.0, -10.0, 10.0, 30.0])
        for usum_pattern in ([0, 0, 1, 1], [1, 1, 1, 1], [0, 0, 0, 0], [1, 0, 1, 0]):
            u = np.array(usum_pattern, dtype=float)
            z, var = filter_update(0.0, 25.0, u, beta)
            assert abs(score(z, 0.0, 25.0, u, beta)) < 1e-9
            assert var > 0

    def test_mismatched_rows_rejected(self):
        with pytest.raises(ValueError):
            filter_update(0.0, 1.0, np.zeros(2), np.zeros(3))


class TestRunFilter:
    def test_matches_scalar_recursion(self):
        rng = np.random.default_rng(31)
        I, J, N = 3, 4, 12
        U = rng.integers(0, 2, size=(I, J, N))
        beta = rng.normal(size=J)
        out = run_filter(U, beta)
        for i in range(I):
            m, v = filter_init()
            assert out.filt_mean[i, 0] == 0.0 and out.filt_var[i, 0] == 1.0
            for n in range(1, N):
                pm, pv = filter_predict(m, v)
                m, v = filter_update(pm, pv, U[i, :, n].astype(float), beta)
                assert out.pred_mean[i, n] == pytest.approx(pm, abs=1e-12)
                assert out.pred_var[i, n] == pytest.approx(pv, abs=1e-12)
                assert out.filt_mean[i, n] == pytest.approx(m, abs=1e-12)
                assert out.filt_var[i, n] == pytest.approx(v, abs=1e-12)

    def test_step_zero_is_anchor(self):
        U = np.ones((2, 3, 5), dtype=np.int8)
        out = run_filter(U, np.zeros(3))
        np.testing.assert_array_equal(out.filt_mean[:, 0], 0.0)
        np.testing.assert_array_equal(out.filt_var[:, 0], 1.0)

    def test_predictive_variance_identity(self):
        rng = np.random.default_rng(4)
        U = rng.integers(0, 2, size=(2, 3, 9))
        out = run_filter(U, rng.normal(size=3), state_var=1.0)
        np.testing.assert_allclose(
            out.pred_var[:, 1:], out.filt_var[:, :-1] + 1.0, atol=1e-12
        )

    def test_error_carries_subject_label(self):
        err = FilterError("S7", 33)
        assert err.subject == "S7" and err.step == 33
        assert "S7" in str(err) and "33" in str(err)


def _independent_smoother(fm, fv, pm, pv):
    """Loop-coded backward recursion, kept deliberately separate."""
    I, N = fm.shape
    sm = np.empty_like(fm)
    sv = np.empty_like(fv)
    sm[:, -1] = fm[:, -1]
    sv[:, -1] = fv[:, -1]
    for i in range(I):
        for n in range(N - 2, -1, -1):
            g = fv[i, n] / pv[i, n + 1]
            sm[i, n] = fm[i, n] + g * (sm[i, n + 1] - pm[i, n + 1])
            sv[i, n] = fv[i, n] + g * g * (sv[i, n + 1] - pv[i, n + 1])
    return sm, sv


class TestSmoother:
    def _moments(self, seed=17, I=3, J=4, N=15):
        rng = np.random.default_rng(seed)
        U = rng.integers(0, 2, size=(I, J, N))
        return run_filter(U, rng.normal(size=J))

    def test_terminal_equals_filtered(self):
        moments = self._moments()
        out = smooth(moments)
        np.testing.assert_array_equal(out.mean[:, -1], moments.filt_mean[:, -1])
        np.testing.assert_array_equal(out.var[:, -1], moments.filt_var[:, -1])

    def test_matches_independent_recode(self):
        moments = self._moments(seed=23, I=4, J=5, N=5)
        out = smooth(moments)
        sm, sv = _independent_smoother(
            moments.filt_mean, moments.filt_var,
            moments.pred_mean, moments.pred_var,
        )
        np.testing.assert_allclose(out.mean, sm, atol=1e-12)
        np.testing.assert_allclose(out.var, sv, atol=1e-12)

    def test_smoothed_variance_never_exceeds_filtered(self):
        for seed in range(5):
            moments = self._moments(seed=seed)
            out = smooth(moments)
            assert np.all(out.var <= moments.filt_var + 1e-12)
            assert np.all(out.var > 0)

    def test_constant_filtered_means_pass_through(self):
        # zero innovation: pred mean == filt mean everywhere, so smoothing
        # changes nothing about the means
        I, N = 2, 8
        fm = np.full((I, N), 0.6)
        fv = np.linspace(1.0, 0.4, N) * np.ones((I, 1))
        pm = np.full((I, N), 0.6)
        pv = np.empty((I, N))
        pv[:, 0] = 1.0
        pv[:, 1:] = fv[:, :-1] + 1.0
        from mtssm.filtering import FilterMoments

        out = smooth(FilterMoments(pred_mean=pm, pred_var=pv,
                                   filt_mean=fm, filt_var=fv))
        np.testing.assert_allclose(out.mean, 0.6, atol=1e-14)
