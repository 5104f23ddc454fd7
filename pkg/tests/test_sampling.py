"""Sampling engines: truncated normals, truncated-MVN Gibbs, NUTS, and the
bound-constrained least-squares solver."""

import itertools
import math

import numpy as np
import pytest
from scipy.special import ndtr

from monogp.sampling import (
    BoundedLsqProblem,
    RngStream,
    TargetDensity,
    gibbs_truncated_mvn,
    nuts_sample,
    sample_truncnorm_lower,
    sample_truncnorm_lower_batch,
    solve_bounded_lsq,
)


class TestRngStream:
    def test_reproducible(self):
        a = RngStream(7, 3).generator().standard_normal(10)
        b = RngStream(7, 3).generator().standard_normal(10)
        assert np.all(a == b)

    def test_streams_differ(self):
        a = RngStream(7, 3).generator().standard_normal(10)
        b = RngStream(7, 4).generator().standard_normal(10)
        assert not np.allclose(a, b)

    def test_kernel_seed_deterministic(self):
        assert RngStream(1, 2).kernel_seed() == RngStream(1, 2).kernel_seed()
        assert RngStream(1, 2).kernel_seed() != RngStream(1, 3).kernel_seed()


class TestTruncnorm:
    def test_half_normal_mean(self):
        g = np.random.default_rng(0)
        draws = sample_truncnorm_lower_batch(0.0, 1.0, 0.0, 200000, g)
        assert draws.min() >= 0
        assert draws.mean() == pytest.approx(math.sqrt(2 / math.pi), abs=0.005)

    def test_untruncated_sentinel(self):
        g = np.random.default_rng(1)
        draws = np.array([sample_truncnorm_lower(2.0, 1.0, -np.inf, g)
                          for _ in range(20000)])
        assert draws.mean() == pytest.approx(2.0, abs=3 / math.sqrt(20000))

    def test_extreme_tail(self):
        g = np.random.default_rng(2)
        draws = np.array([sample_truncnorm_lower(0.0, 1.0, 8.0, g)
                          for _ in range(20000)])
        assert draws.min() >= 8.0
        # analytic mean: phi(8)/Phi_c(8) added beyond the bound
        assert draws.mean() == pytest.approx(8.1216, abs=0.01)

    def test_batch_matches_scalar_distribution(self):
        g = np.random.default_rng(3)
        batch = sample_truncnorm_lower_batch(1.0, 2.0, 0.5, 100000, g)
        assert batch.min() >= 0.5
        a = (0.5 - 1.0) / 2.0
        # analytic truncated-normal mean
        phi = math.exp(-0.5 * a * a) / math.sqrt(2 * math.pi)
        ref = 1.0 + 2.0 * phi / ndtr(-a)
        assert batch.mean() == pytest.approx(ref, abs=0.02)

    def test_invalid_sd(self):
        with pytest.raises(ValueError):
            sample_truncnorm_lower(0.0, 0.0, 0.0, np.random.default_rng(0))


class TestGibbsTruncated:
    def test_1d_matches_truncnorm_moments(self):
        batch = gibbs_truncated_mvn(np.zeros(1), np.eye(1), 50000, 100,
                                    RngStream(0, 1))
        x = batch.draws[:, 0]
        assert x.min() >= 0
        assert x.mean() == pytest.approx(math.sqrt(2 / math.pi), abs=0.02)
        assert x.var() == pytest.approx(1 - 2 / math.pi, abs=0.02)

    def test_2d_matches_rejection_oracle(self):
        mean = np.array([0.0, 0.0])
        cov = np.array([[1.0, 0.8], [0.8, 1.0]])
        batch = gibbs_truncated_mvn(mean, cov, 50000, 200, RngStream(0, 2))
        g = np.random.default_rng(12)
        L = np.linalg.cholesky(cov)
        prop = (L @ g.standard_normal((2, 1000000))).T
        keep = prop[(prop >= 0).all(axis=1)]
        nk = keep.shape[0]
        for j in range(2):
            se = keep[:, j].std() / math.sqrt(nk) + \
                batch.draws[:, j].std() / math.sqrt(50000 / 20)
            assert abs(batch.draws[:, j].mean() - keep[:, j].mean()) < 3 * se + 0.01
        cg = np.cov(batch.draws.T)
        cr = np.cov(keep.T)
        assert np.allclose(cg, cr, atol=0.02)

    def test_support_nonnegative(self):
        rng = np.random.default_rng(4)
        C = rng.standard_normal((3, 3))
        cov = C @ C.T + 3 * np.eye(3)
        batch = gibbs_truncated_mvn(rng.normal(size=3), cov, 2000, 50,
                                    RngStream(0, 3))
        assert batch.draws.min() >= 0

    def test_deterministic_replay(self):
        cov = np.array([[1.0, 0.5], [0.5, 2.0]])
        a = gibbs_truncated_mvn(np.ones(2), cov, 500, 10, RngStream(5, 5))
        b = gibbs_truncated_mvn(np.ones(2), cov, 500, 10, RngStream(5, 5))
        assert np.all(a.draws == b.draws)


def _gaussian_target(mean, cov):
    prec = np.linalg.inv(cov)
    mean = np.asarray(mean, dtype=float)

    def logpdf(x):
        d = x - mean
        return float(-0.5 * d @ prec @ d)

    def grad(x):
        return -prec @ (x - mean)

    return TargetDensity(mean.shape[0], logpdf, grad)


class TestNuts:
    def test_standard_normal_moments(self):
        target = _gaussian_target(np.zeros(1), np.eye(1))
        batch = nuts_sample(target, np.zeros(1), 50000, 500, RngStream(0, 6))
        x = batch.draws[:, 0]
        assert -0.02 <= x.mean() <= 0.02
        assert 0.95 <= x.var() <= 1.05

    def test_5d_correlated_gaussian(self):
        rng = np.random.default_rng(8)
        C = rng.standard_normal((5, 5))
        cov = C @ C.T + 5 * np.eye(5)
        mean = rng.normal(size=5)
        target = _gaussian_target(mean, cov)
        batch = nuts_sample(target, mean.copy(), 20000, 500, RngStream(0, 7))
        from monogp.diagnostics import iat

        for j in range(5):
            x = batch.draws[:, j]
            tau = iat(x)
            se_mean = math.sqrt(cov[j, j] * tau / 20000)
            assert abs(x.mean() - mean[j]) < 4 * se_mean
            se_var = cov[j, j] * math.sqrt(2 * tau / 20000)
            assert abs(x.var() - cov[j, j]) < 4 * se_var

    def test_deterministic_replay(self):
        target = _gaussian_target(np.zeros(2), np.eye(2))
        a = nuts_sample(target, np.zeros(2), 500, 100, RngStream(3, 3))
        b = nuts_sample(target, np.zeros(2), 500, 100, RngStream(3, 3))
        assert np.all(a.draws == b.draws)

    def test_no_minus_inf_states(self):
        # target with a hard wall at x < 0: -inf logpdf there
        def logpdf(x):
            if x[0] < 0:
                return -np.inf
            return float(-0.5 * x @ x)

        def grad(x):
            return -x

        target = TargetDensity(1, logpdf, grad)
        batch = nuts_sample(target, np.ones(1), 2000, 200, RngStream(0, 8))
        assert np.all(batch.draws >= 0)

    def test_rejects_bad_start(self):
        target = _gaussian_target(np.zeros(1), np.eye(1))
        bad = TargetDensity(1, lambda x: -np.inf, target.grad_logpdf)
        with pytest.raises(ValueError):
            nuts_sample(bad, np.zeros(1), 10, 10, RngStream(0, 9))

    def test_reports_acceptance_stats(self):
        target = _gaussian_target(np.zeros(1), np.eye(1))
        batch = nuts_sample(target, np.zeros(1), 1000, 200, RngStream(0, 10))
        assert 0.5 < batch.extras["mean_accept"] <= 1.0
        assert batch.extras["step_size"] > 0
        assert batch.extras["divergence_flag"] in (False, True)


def enumeration_oracle(H, g):
    """Best nonnegative minimizer of 0.5 x^T H x - g^T x over all active sets."""
    m = g.shape[0]
    best, best_f = None, np.inf
    for mask in itertools.product([0, 1], repeat=m):
        free = np.array(mask, dtype=bool)
        x = np.zeros(m)
        if free.any():
            x[free] = np.linalg.solve(H[np.ix_(free, free)], g[free])
        if (x < -1e-12).any():
            continue
        grad = H @ x - g
        if (grad[~free] < -1e-8).any():
            continue
        f = 0.5 * x @ H @ x - g @ x
        if f < best_f:
            best, best_f = np.maximum(x, 0.0), f
    return best


class TestBoundedLsq:
    def _problem(self, A, b, c, lower=0.0):
        n, m = A.shape
        return BoundedLsqProblem(A, np.eye(n), np.eye(m), np.asarray(b, float),
                                 np.asarray(c, float), lower)

    def test_interior_solution(self):
        x, conv = solve_bounded_lsq(self._problem(np.eye(1), [1.0], [1.0]))
        assert conv
        assert x[0] == pytest.approx(1.0, abs=1e-7)

    def test_active_constraint(self):
        x, conv = solve_bounded_lsq(self._problem(np.eye(1), [-2.0], [-2.0]))
        assert conv
        assert x[0] == 0.0

    def test_enumeration_oracle_random(self):
        rng = np.random.default_rng(9)
        for _ in range(25):
            A = rng.standard_normal((6, 4))
            b = rng.standard_normal(6)
            c = rng.standard_normal(4)
            prob = self._problem(A, b, c)
            x, conv = solve_bounded_lsq(prob)
            assert conv
            assert x.min() >= 0
            H, g = prob.normal_equations()
            ref = enumeration_oracle(H, g)
            assert np.max(np.abs(x - ref)) < 1e-6

    def test_unbounded_matches_closed_form(self):
        rng = np.random.default_rng(10)
        A = rng.standard_normal((5, 3))
        b = rng.standard_normal(5)
        c = rng.standard_normal(3)
        prob = self._problem(A, b, c, lower=None)
        x, conv = solve_bounded_lsq(prob)
        assert conv
        ref = np.linalg.solve(A.T @ A + np.eye(3), A.T @ b + c)
        assert np.max(np.abs(x - ref)) / max(1.0, np.max(np.abs(ref))) < 1e-8

    def test_general_metrics(self):
        # non-identity Sigma and prior metrics against a dense oracle
        rng = np.random.default_rng(11)
        n, m = 5, 3
        A = rng.standard_normal((n, m))
        Cs = rng.standard_normal((n, n))
        sigma = Cs @ Cs.T + n * np.eye(n)
        Cp = rng.standard_normal((m, m))
        prior = Cp @ Cp.T + m * np.eye(m)
        b = rng.standard_normal(n)
        c = rng.standard_normal(m)
        prob = BoundedLsqProblem(A, np.linalg.cholesky(sigma),
                                 np.linalg.cholesky(prior), b, c, 0.0)
        H, g = prob.normal_equations()
        W = np.linalg.inv(sigma)
        P = np.linalg.inv(prior)
        assert np.allclose(H, A.T @ W @ A + P, atol=1e-10)
        assert np.allclose(g, A.T @ W @ b + P @ c, atol=1e-10)
        x, conv = solve_bounded_lsq(prob)
        assert conv
        ref = enumeration_oracle(H, g)
        assert np.max(np.abs(x - ref)) < 1e-6

    def test_ill_conditioned_still_converges(self):
        # spectrum spanning 9 orders of magnitude, like jitter-limited
        # GP precision matrices
        rng = np.random.default_rng(12)
        m = 12
        Q, _ = np.linalg.qr(rng.standard_normal((m, m)))
        H = (Q * np.logspace(0, 9, m)) @ Q.T
        H = 0.5 * (H + H.T)
        g = rng.standard_normal(m) * 1e4
        from monogp.accel import kernels

        x, n_iter, conv = kernels.pgd_bb(H, g, np.zeros(m), True,
                                         1e-8 * (1 + np.max(np.abs(g))), 5000)
        assert conv
        grad = H @ x - g
        res = np.abs(x - np.maximum(x - grad, 0.0)).max()
        assert res <= 1e-8 * (1 + np.max(np.abs(g)))
