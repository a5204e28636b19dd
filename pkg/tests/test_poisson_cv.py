import math

import numpy as np
import pytest
from scipy.special import ndtr

from gimcmc import (
    GaussianTarget,
    ProposalSpec,
    control_variates,
    cv_estimator,
    estimate_beta,
    gi_proposal_cov,
    run_chain,
    solution_exp,
    solution_indicator,
    solution_linear,
    solution_quadratic,
    zero_variance_estimator_gaussian,
)
from gimcmc.poisson_cv import f_exp, f_identity, f_indicator, f_quadratic
from gimcmc.samplers import ChainTrace

from conftest import random_spd


def _gauss(rng, d, scale=1.0):
    return GaussianTarget(rng.standard_normal(d), random_spd(rng, d, scale))


def _gi_trace(target, gamma, n, seed=0, kind="gi-mala-const"):
    kwargs = {"precond_const": target.covariance}
    if kind == "gi-rwm":
        kwargs["mean_param"] = target.mean
    spec = ProposalSpec(kind, gamma, **kwargs)
    return run_chain(spec, target, target.mean, 0, n, adapt=False, seed=seed)


def _fake_trace(states, proposals, means, alphas, accepted, gamma,
                kind="gi-mala-const"):
    return ChainTrace(states=states, proposals=proposals, proposal_means=means,
                      alphas=alphas, accepted=accepted, n_burnin=0, seed=None,
                      gamma_final=gamma, accept_rate=float(accepted.mean()),
                      burnin_accept_rate=0.0, kind=kind)


# ---------------------------------------------------------------------------
# Solutions of the Poisson equation
# ---------------------------------------------------------------------------


class TestLinearSolution:
    def test_pointwise_values(self):
        sol = solution_linear(0.5)
        assert sol.evaluate(np.array([[4.0]]))[0, 0] == pytest.approx(8.0)
        sol1 = solution_linear(1.0)
        x = np.array([[1.0, -2.0]])
        np.testing.assert_allclose(sol1.evaluate(x), x)

    def test_poisson_residual_identity(self, rng):
        # analytic one-step expectation: P G - G + F - pi(F) == 0
        for d in (1, 2, 5):
            target = _gauss(rng, d)
            for gamma in (0.4, 1.0, 1.6):
                sol = solution_linear(gamma)
                xs = target.sample(rng, 50)
                means = (1 - gamma) * xs + gamma * target.mean
                resid = (sol.proposal_expectation(means) - sol.evaluate(xs)
                         + xs - target.mean)
                assert np.abs(resid).max() < 1e-10

    def test_rejects_bad_gamma(self):
        with pytest.raises(ValueError):
            solution_linear(0.0)


class TestQuadraticSolution:
    def test_centered_gamma_one_is_outer_product(self, rng):
        sol = solution_quadratic(1.0, np.zeros(3), raw=False)
        x = rng.standard_normal((4, 3))
        expected = np.einsum("ni,nj->nij", x, x).reshape(4, 9)
        np.testing.assert_allclose(sol.evaluate(x), expected)

    @pytest.mark.parametrize("raw", [False, True])
    def test_poisson_residual_identity(self, rng, raw):
        d = 2
        target = _gauss(rng, d)
        gamma = 0.7
        sol = solution_quadratic(gamma, target.mean, raw=raw)
        xs = target.sample(rng, 50)
        means = (1 - gamma) * xs + gamma * target.mean
        cov_prop = gi_proposal_cov(gamma, target.covariance)
        if raw:
            f_vals = np.einsum("ni,nj->nij", xs, xs).reshape(50, 4)
            pi_f = (target.covariance + np.outer(target.mean, target.mean)).ravel()
        else:
            r = xs - target.mean
            f_vals = np.einsum("ni,nj->nij", r, r).reshape(50, 4)
            pi_f = target.covariance.ravel()
        resid = (sol.proposal_expectation(means, cov_prop) - sol.evaluate(xs)
                 + f_vals - pi_f)
        assert np.abs(resid).max() < 1e-10

    def test_raw_minus_centered_is_affine(self, rng):
        mu = rng.standard_normal(2)
        raw = solution_quadratic(0.6, mu, raw=True)
        cen = solution_quadratic(0.6, mu, raw=False)

        def diff(x):
            x = x[None, :]
            return (raw.evaluate(x) - cen.evaluate(x))[0]

        x1, x2 = rng.standard_normal(2), rng.standard_normal(2)
        # affine identity: D(x1) + D(x2) == D(x1 + x2) + D(0)
        lhs = diff(x1) + diff(x2)
        rhs = diff(x1 + x2) + diff(np.zeros(2))
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_expectation_requires_covariance(self):
        sol = solution_quadratic(0.5, np.zeros(2))
        with pytest.raises(ValueError, match="covariance"):
            sol.proposal_expectation(np.zeros((3, 2)))


class TestIndicatorSolution:
    def test_gamma_one_collapses_to_constant_shift(self, rng):
        mu = rng.standard_normal(2)
        sigma = random_spd(rng, 2)
        a = rng.standard_normal(2)
        b = 0.3
        n_trunc = 4
        sol = solution_indicator(1.0, mu, sigma, a, b, truncation=n_trunc)
        const = ndtr((a @ mu - b) / math.sqrt(a @ sigma @ a))
        xs = rng.standard_normal((20, 2)) * 3
        expected = (xs @ a > b).astype(float) + n_trunc * const
        np.testing.assert_allclose(sol.evaluate(xs)[:, 0], expected, atol=1e-12)

    def test_expectation_matches_monte_carlo(self, rng):
        mu = np.array([0.3, -0.5])
        sigma = random_spd(rng, 2)
        a = np.array([1.2, -0.4])
        b = 0.1
        gamma = 0.6
        sol = solution_indicator(gamma, mu, sigma, a, b, truncation=3)
        mean = np.array([0.5, 0.2])
        cov = gi_proposal_cov(gamma, sigma)
        draws = rng.multivariate_normal(mean, cov, size=1_000_000)
        vals = sol.evaluate(draws)[:, 0]
        mc, se = vals.mean(), vals.std() / 1000.0
        closed = sol.proposal_expectation(mean[None, :], cov)[0, 0]
        assert abs(closed - mc) < 4 * se

    def test_rejects_degenerate_direction(self):
        with pytest.raises(ValueError, match="positive"):
            solution_indicator(0.5, np.zeros(2), np.eye(2), np.zeros(2), 0.0, 2)

    def test_projected_variance_input(self, rng):
        # (n,) pre-projected a'Ca values give the same expectations
        mu = np.zeros(2)
        sigma = np.eye(2)
        a = np.array([1.0, 1.0])
        sol = solution_indicator(0.5, mu, sigma, a, 0.0, truncation=2)
        means = rng.standard_normal((5, 2))
        cov = gi_proposal_cov(0.5, sigma)
        full = sol.proposal_expectation(means, cov)
        proj = np.full(5, float(a @ cov @ a))
        np.testing.assert_allclose(sol.proposal_expectation(means, proj), full)


class TestExpSolution:
    def test_zero_direction_constant(self):
        sol = solution_exp(0.5, np.zeros(2), np.eye(2), np.zeros(2), truncation=3)
        vals = sol.evaluate(np.random.default_rng(0).standard_normal((6, 2)))
        np.testing.assert_allclose(vals, 4.0)  # N + 1 equal unit terms

    def test_gamma_one_summands(self):
        a = np.array([0.8])
        n_trunc = 3
        sol = solution_exp(1.0, np.zeros(1), np.eye(1), a, truncation=n_trunc)
        x = np.array([[0.4]])
        expected = math.exp(0.8 * 0.4) + n_trunc * math.exp(0.5 * 0.8**2)
        assert sol.evaluate(x)[0, 0] == pytest.approx(expected, rel=1e-12)

    def test_expectation_matches_monte_carlo(self, rng):
        mu = np.array([0.2])
        sigma = np.array([[0.8]])
        a = np.array([0.9])
        gamma = 0.7
        sol = solution_exp(gamma, mu, sigma, a, truncation=3)
        mean = np.array([[0.1]])
        cov = gi_proposal_cov(gamma, sigma)
        draws = rng.normal(0.1, math.sqrt(cov[0, 0]), size=1_000_000)[:, None]
        vals = sol.evaluate(draws)[:, 0]
        mc, se = vals.mean(), vals.std() / 1000.0
        closed = sol.proposal_expectation(mean, cov)[0, 0]
        assert abs(closed - mc) < 4 * se

    def test_overflow_raises(self):
        sol = solution_exp(0.5, np.zeros(1), np.eye(1), np.array([10.0]),
                           truncation=2)
        with pytest.raises(FloatingPointError):
            sol.evaluate(np.array([[200.0]]))


@pytest.mark.parametrize("gamma", [0.3, 0.7])
class TestTruncationDecay:
    """Delta_N ratios approach |beta| = |1 - gamma| (geometric residual)."""

    def _deltas(self, make_solution, f_value, pi_f, gamma, x, mean, cov_prop):
        out = []
        for n_trunc in range(3, 11):
            sol = make_solution(n_trunc)
            delta = abs(sol.proposal_expectation(mean, cov_prop)[0, 0]
                        - sol.evaluate(x)[0, 0] + f_value - pi_f)
            out.append(delta)
        return out

    def test_exp_and_indicator(self, gamma):
        beta = 1.0 - gamma
        mu = np.array([0.2])
        sigma = np.array([[1.1**2]])
        a = np.array([0.7])
        b = 0.5
        x = np.array([[1.5]])
        mean = (1 - gamma) * x + gamma * mu
        cov_prop = gi_proposal_cov(gamma, sigma)

        pi_exp = math.exp(a[0] * mu[0] + 0.5 * a[0]**2 * sigma[0, 0])
        deltas = self._deltas(
            lambda n: solution_exp(gamma, mu, sigma, a, truncation=n),
            math.exp(a[0] * x[0, 0]), pi_exp, gamma, x, mean, cov_prop)
        ratios = np.array(deltas[1:]) / np.array(deltas[:-1])
        assert np.all(np.abs(ratios - abs(beta)) < 0.1 * abs(beta))

        pi_ind = ndtr((a[0] * mu[0] - b) / math.sqrt(a[0]**2 * sigma[0, 0]))
        deltas = self._deltas(
            lambda n: solution_indicator(gamma, mu, sigma, a, b, truncation=n),
            float(a[0] * x[0, 0] > b), pi_ind, gamma, x, mean, cov_prop)
        ratios = np.array(deltas[1:]) / np.array(deltas[:-1])
        assert np.all(np.abs(ratios - abs(beta)) < 0.1 * abs(beta))


# ---------------------------------------------------------------------------
# Control variates and coefficient estimation
# ---------------------------------------------------------------------------


class TestControlVariates:
    def test_zero_mean_at_stationarity(self, rng):
        target = _gauss(rng, 2)
        trace = _gi_trace(target, 0.8, 100_000, seed=4)
        pair = control_variates(trace, solution_linear(0.8))
        for h in (pair.h1, pair.h2):
            for n in (1000, 10_000, 100_000):
                running = h[:n].mean(axis=0)
                se = h[:n].std(axis=0) / math.sqrt(n)
                assert np.all(np.abs(running) < 5 * se + 1e-12)

    def test_gamma_mismatch_raises(self, rng):
        target = _gauss(rng, 2)
        trace = _gi_trace(target, 0.8, 100)
        with pytest.raises(ValueError, match="gamma"):
            control_variates(trace, solution_linear(0.5))


class TestEstimateBeta:
    @pytest.mark.slow
    def test_gaussian_limit_is_one_minus_one(self, rng):
        target = _gauss(rng, 2)
        trace = _gi_trace(target, 0.8, 100_000, seed=8)
        b1, b2 = estimate_beta(trace, f_identity(trace.states),
                               solution_linear(0.8))
        np.testing.assert_allclose(b1, 1.0, atol=0.05)
        np.testing.assert_allclose(b2, -1.0, atol=0.05)

    def test_matches_covariance_regression_oracle(self, rng):
        # independent linear-algebra path on a 100-step toy trace
        target = _gauss(rng, 2)
        trace = _gi_trace(target, 0.6, 100, seed=3, kind="gi-rwm")
        sol = solution_linear(0.6)
        f_vals = f_identity(trace.states)
        b1, b2 = estimate_beta(trace, f_vals, sol)
        pair = control_variates(trace, sol)
        n = 100
        for j in range(2):
            h = np.column_stack([pair.h1[:, j], pair.h2[:, j]])
            k = h.T @ h / (n - 1)
            r = (h * (f_vals[:, j] - f_vals[:, j].mean())[:, None]).mean(axis=0)
            expected = -np.linalg.solve(k, r)
            assert b1[j] == pytest.approx(expected[0], abs=1e-10)
            assert b2[j] == pytest.approx(expected[1], abs=1e-10)

    def test_degenerate_h2_engages_ridge(self):
        n = 50
        rng = np.random.default_rng(0)
        states = rng.standard_normal((n, 1))
        proposals = states + rng.standard_normal((n, 1))
        means = proposals.copy()  # h2 = (y - m)/gamma = 0
        trace = _fake_trace(states, proposals, means, np.ones(n),
                            np.ones(n, dtype=bool), 1.0)
        b1, b2 = estimate_beta(trace, f_identity(states), solution_linear(1.0))
        assert np.all(np.isfinite(b1)) and np.all(np.isfinite(b2))

    def test_too_few_samples(self, rng):
        target = _gauss(rng, 1)
        trace = _gi_trace(target, 0.5, 2)
        with pytest.raises(ValueError, match="at least 3"):
            estimate_beta(trace, f_identity(trace.states), solution_linear(0.5))


class TestCvEstimator:
    def test_zero_betas_reduce_to_plain(self, rng):
        target = _gauss(rng, 3)
        trace = _gi_trace(target, 0.9, 500)
        rep = cv_estimator(trace, f_identity(trace.states), solution_linear(0.9),
                           beta1=np.zeros(3), beta2=np.zeros(3))
        np.testing.assert_array_equal(rep.cv, rep.plain)

    def test_unit_betas_give_exact_mean_every_run(self, rng):
        for seed in range(5):
            target = _gauss(rng, 3)
            trace = _gi_trace(target, 0.7, 200, seed=seed)
            rep = cv_estimator(trace, f_identity(trace.states),
                               solution_linear(0.7),
                               beta1=np.ones(3), beta2=-np.ones(3))
            assert np.abs(rep.cv - target.mean).max() < 1e-10

    def test_scale_equivariance(self, rng):
        # scaling G by c scales beta by 1/c and leaves the estimate alone
        target = _gauss(rng, 2)
        trace = _gi_trace(target, 0.8, 2000, seed=1)
        sol = solution_linear(0.8)

        class Scaled:
            kind = "linear-scaled"
            gamma = sol.gamma
            needs_cov = False

            def evaluate(self, x):
                return 100.0 * sol.evaluate(x)

            def proposal_expectation(self, m, cov=None):
                return 100.0 * sol.proposal_expectation(m, cov)

        f_vals = f_identity(trace.states)
        rep = cv_estimator(trace, f_vals, sol)
        rep_scaled = cv_estimator(trace, f_vals, Scaled())
        np.testing.assert_allclose(rep_scaled.beta1, rep.beta1 / 100.0,
                                   rtol=1e-12)
        np.testing.assert_allclose(rep_scaled.beta2, rep.beta2 / 100.0,
                                   rtol=1e-12)
        np.testing.assert_allclose(rep_scaled.cv, rep.cv, atol=1e-12)

    def test_split_mode_uses_halves(self, rng):
        target = _gauss(rng, 2)
        trace = _gi_trace(target, 0.8, 1000, seed=2)
        rep = cv_estimator(trace, f_identity(trace.states), solution_linear(0.8),
                           split=True)
        assert rep.n == 500
        np.testing.assert_allclose(rep.plain,
                                   trace.states[500:].mean(axis=0), atol=1e-12)

    def test_report_csv(self, rng, tmp_path):
        target = _gauss(rng, 2)
        trace = _gi_trace(target, 0.8, 100)
        rep = cv_estimator(trace, f_identity(trace.states), solution_linear(0.8))
        rep.to_csv(tmp_path / "est.csv")
        body = np.loadtxt(tmp_path / "est.csv", delimiter=",", skiprows=1)
        assert body.shape == (2, 5)


class TestZeroVarianceEstimator:
    @pytest.mark.parametrize("kind", ["gi-mala-const", "gi-rwm"])
    @pytest.mark.parametrize("gamma", [0.3, 1.0, 1.7])
    def test_exact_mean(self, rng, kind, gamma):
        target = _gauss(rng, 4)
        trace = _gi_trace(target, gamma, 100, seed=6, kind=kind)
        est = zero_variance_estimator_gaussian(trace, target)
        assert np.abs(est - target.mean).max() < 1e-10

    def test_single_sample(self, rng):
        target = _gauss(rng, 3)
        trace = _gi_trace(target, 0.8, 1, seed=1)
        est = zero_variance_estimator_gaussian(trace, target)
        assert np.abs(est - target.mean).max() < 1e-10

    def test_rejection_refused(self, rng):
        target = _gauss(rng, 2)
        trace = _gi_trace(target, 0.8, 50, seed=2)
        trace.accepted[3] = False
        with pytest.raises(ValueError, match="rejections"):
            zero_variance_estimator_gaussian(trace, target)

    def test_non_gi_kind_refused(self, rng):
        target = _gauss(rng, 2)
        spec = ProposalSpec("rwm", 0.5, precond_const=target.covariance)
        trace = run_chain(spec, target, target.mean, 0, 50, adapt=False, seed=0)
        trace.accepted[:] = True
        with pytest.raises(ValueError, match="GI"):
            zero_variance_estimator_gaussian(trace, target)


class TestFValueHelpers:
    def test_shapes(self, rng):
        x = rng.standard_normal((7, 3))
        assert f_identity(x).shape == (7, 3)
        assert f_quadratic(x).shape == (7, 9)
        assert f_indicator(x, np.ones(3), 0.0).shape == (7, 1)
        assert f_exp(x, 0.1 * np.ones(3)).shape == (7, 1)

    def test_indicator_values(self):
        x = np.array([[1.0], [-1.0]])
        np.testing.assert_array_equal(
            f_indicator(x, np.ones(1), 0.0)[:, 0], [1.0, 0.0])
