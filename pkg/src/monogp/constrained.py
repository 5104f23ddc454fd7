"""The three constrained-GP methods (truncated prior, ReLU likelihood,
RLRTO), each producing nonnegative derivative samples at the virtual points,
plus the prediction step that pushes them through the derivative-enhanced
conditional."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .accel import kernels as _kern
from .gp_core import GpModel, posterior_value
from .kernels import DerivSpec, add_jitter, cholesky_jittered, cov_block, psd_factor
from .sampling import (
    BoundedLsqProblem,
    RngStream,
    SampleBatch,
    TargetDensity,
    gibbs_truncated_mvn,
    nuts_sample,
    solve_bounded_lsq,
    MAX_LSQ_ITER,
)


@dataclass(frozen=True)
class VirtualDesign:
    """Virtual points and, per point, the coordinate whose partial derivative
    is constrained to be nonnegative."""

    points: np.ndarray   # (m, d)
    dims: np.ndarray     # (m,) ints

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] == 1 and np.asarray(self.points).ndim == 1:
            pts = pts.T
        dims = np.asarray(self.dims, dtype=int)
        if dims.shape[0] != pts.shape[0]:
            raise ValueError("one constrained dim per virtual point required")
        if pts.shape[0] < 1:
            raise ValueError("need at least one virtual point")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "dims", dims)

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def specs(self):
        return [DerivSpec(int(j), 1) for j in self.dims]


@dataclass(frozen=True)
class ConstrainedProblem:
    """Precomputed pieces shared by all three methods.

    A maps derivative values at the virtual points to predicted training
    values; sigma_star is the residual covariance of that prediction; K11 is
    the derivative prior covariance.
    """

    model: GpModel
    design: VirtualDesign
    A: np.ndarray             # (n, m)
    sigma_star: np.ndarray    # (n, n), jittered
    K11: np.ndarray           # (m, m), jittered
    chol_sigma: np.ndarray = field(repr=False, default=None)
    chol_K11: np.ndarray = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[1]

    def prior_precision(self) -> np.ndarray:
        P = cho_solve((self.chol_K11, True), np.eye(self.m))
        return 0.5 * (P + P.T)

    def lik_operator(self) -> np.ndarray:
        """G = A^T Sigma*^-1, the likelihood-side adjoint."""
        return cho_solve((self.chol_sigma, True), self.A).T


def build_problem(model: GpModel, design: VirtualDesign) -> ConstrainedProblem:
    p = model.params
    t = model.data.inputs
    specs = design.specs
    K11 = add_jitter(cov_block(design.points, specs, design.points, specs, p), p.variance)
    chol_K11 = np.linalg.cholesky(K11)
    K01 = cov_block(t, None, design.points, specs, p)
    A = cho_solve((chol_K11, True), K01.T).T
    Ktt = cov_block(t, None, t, None, p)
    if model.data.noise_sd > 0:
        Ktt = Ktt + model.data.noise_sd ** 2 * np.eye(t.shape[0])
    V = solve_triangular(chol_K11, K01.T, lower=True)
    sigma_star = add_jitter(Ktt - V.T @ V, p.variance)
    sigma_star = 0.5 * (sigma_star + sigma_star.T)
    try:
        chol_sigma = np.linalg.cholesky(sigma_star)
    except np.linalg.LinAlgError:
        # conditional covariances of dense smooth-kernel designs can dip
        # below the fixed jitter; fall back to the robust factorization
        F = psd_factor(sigma_star, p.variance)
        sigma_star = add_jitter(F @ F.T, p.variance)
        chol_sigma = np.linalg.cholesky(sigma_star)
    return ConstrainedProblem(model, design, A, sigma_star, K11, chol_sigma, chol_K11)


def _posterior_gaussian(prob: ConstrainedProblem, f_t: np.ndarray):
    """Mean and covariance of the (untruncated) conjugate Gaussian posterior
    over f'(s)."""
    G = prob.lik_operator()
    Lam = G @ prob.A + prob.prior_precision()
    Lam = 0.5 * (Lam + Lam.T)
    L = np.linalg.cholesky(Lam)
    mean = cho_solve((L, True), G @ f_t)
    cov = cho_solve((L, True), np.eye(prob.m))
    return mean, 0.5 * (cov + cov.T)


def sample_truncated_gibbs(prob: ConstrainedProblem, f_t, n_samples: int,
                           burn_in: int, rng: RngStream) -> SampleBatch:
    mean, cov = _posterior_gaussian(prob, np.asarray(f_t, dtype=float))
    batch = gibbs_truncated_mvn(mean, cov, n_samples, burn_in, rng)
    batch.method = "truncated-gibbs"
    return batch


def _truncated_transformed_target(prob: ConstrainedProblem, f_t) -> TargetDensity:
    """Log-transformed truncated posterior: x -> f' = exp(x), with the
    log-Jacobian sum(x)."""
    P = prob.prior_precision()
    f_t = np.asarray(f_t, dtype=float)
    A = prob.A
    Sinv = cho_solve((prob.chol_sigma, True), np.eye(f_t.shape[0]))
    Sinv = 0.5 * (Sinv + Sinv.T)

    def fused(x):
        if np.max(x) > 500.0:   # exp would overflow well before this matters
            y = np.exp(np.minimum(x, 500.0))
            with np.errstate(over="ignore", invalid="ignore"):
                r = A @ y - f_t
                Sr = Sinv @ r
                Py = P @ y
                g = -(A.T @ Sr + Py) * y + 1.0
            return -np.inf, g
        y = np.exp(x)
        with np.errstate(over="ignore"):   # inf quadratic just means -inf density
            r = A @ y - f_t
            Sr = Sinv @ r
            Py = P @ y
            q = r @ Sr + y @ Py
        lp = float(-0.5 * q + np.sum(x)) if np.isfinite(q) else -np.inf
        return lp, -(A.T @ Sr + Py) * y + 1.0

    def logpdf(x):
        return fused(x)[0]

    def grad(x):
        return fused(x)[1]

    return TargetDensity(prob.m, logpdf, grad, fused)


def _whitened(target: TargetDensity, x_map: np.ndarray, L: np.ndarray) -> TargetDensity:
    """Affine reparametrization x = x_map + L^{-T} z with L lower Cholesky of
    the curvature at x_map.  Exact change of variables (constant Jacobian),
    so NUTS draws in z map back to draws of the original target; the
    whitened geometry keeps leapfrog trees shallow on stiff problems."""

    Li = solve_triangular(L, np.eye(L.shape[0]), lower=True)

    def logpdf(z):
        x = x_map + Li.T @ z
        return target.logpdf(x)

    def grad(z):
        x = x_map + Li.T @ z
        return Li @ target.grad_logpdf(x)

    def fused(z):
        x = x_map + Li.T @ z
        lp, g = target.value_and_grad(x)
        return lp, Li @ g

    return TargetDensity(x_map.shape[0], logpdf, grad, fused)


def _unwhiten(Z: np.ndarray, x_map: np.ndarray, L: np.ndarray) -> np.ndarray:
    return x_map + solve_triangular(L, Z.T, lower=True, trans=1).T


def _truncated_laplace(prob: ConstrainedProblem, f_t):
    """MAP and curvature Cholesky of the log-transformed truncated target.

    Damped Newton on the smooth unconstrained transformed density; at the
    mode the negative Hessian is Y Lam Y + I (Y = diag(exp(x))), which is
    SPD by construction.
    """
    G = prob.lik_operator()
    Lam = G @ prob.A + prob.prior_precision()
    Lam = 0.5 * (Lam + Lam.T)
    h = G @ np.asarray(f_t, dtype=float)
    target = _truncated_transformed_target(prob, f_t)
    # start from the nonnegative mode in derivative space; the log of it is
    # near the transformed mode, unlike the clipped Gaussian mean
    y0, _, _ = _kern.pgd_bb(Lam, h, np.zeros(prob.m), True,
                            1e-10 * (1.0 + np.max(np.abs(h))), MAX_LSQ_ITER)
    x = np.log(np.maximum(y0, 1e-8 * np.sqrt(np.diag(prob.K11))))
    fx = target.logpdf(x)
    for _ in range(500):
        y = np.exp(x)
        g_x = y * (h - Lam @ y) + 1.0
        if np.max(np.abs(g_x)) < 1e-8 * (1.0 + np.abs(fx)):
            break
        # always-SPD Gauss-Newton style metric; exact Hessian at the mode
        negH = (y[:, None] * Lam) * y[None, :] + np.eye(prob.m)
        try:
            d = np.linalg.solve(negH, g_x)
        except np.linalg.LinAlgError:
            d = g_x / (1.0 + np.max(np.abs(g_x)))
        step = 1.0
        for _bt in range(60):
            xn = x + step * d
            fn = target.logpdf(xn)
            if np.isfinite(fn) and fn > fx:
                break
            step *= 0.5
        else:
            break
        x, fx = xn, fn
    y = np.exp(x)
    negH = (y[:, None] * Lam) * y[None, :] + np.eye(prob.m)
    return x, np.linalg.cholesky(0.5 * (negH + negH.T))


def sample_truncated_nuts(prob: ConstrainedProblem, f_t, n_samples: int,
                          burn_in: int, rng: RngStream) -> SampleBatch:
    target = _truncated_transformed_target(prob, f_t)
    x_map, L = _truncated_laplace(prob, f_t)
    g = rng.generator() if isinstance(rng, RngStream) else rng
    # the mode curvature underestimates the log-space scales of components
    # whose mass sits against the boundary by orders of magnitude, so a
    # short pilot run learns the actual posterior scales and the main run
    # is whitened by the pilot's empirical moments
    n_pilot = max(50, min(300, burn_in))
    pilot = nuts_sample(_whitened(target, x_map, L), np.zeros(prob.m),
                        n_pilot, n_pilot // 2, g)
    X = _unwhiten(pilot.draws, x_map, L)
    mu = X.mean(axis=0)
    C = np.atleast_2d(np.cov(X.T))
    # shrink toward the diagonal: the pilot covariance is noisy at large m
    C = 0.9 * C + 0.1 * np.diag(np.diag(C))
    C += 1e-8 * np.trace(C) / prob.m * np.eye(prob.m)
    Lp = np.linalg.cholesky(np.linalg.inv(C))
    batch = nuts_sample(_whitened(target, mu, Lp), np.zeros(prob.m),
                        n_samples, burn_in, g)
    batch.draws = np.exp(_unwhiten(batch.draws, mu, Lp))
    batch.method = "truncated-nuts"
    return batch


def _relu_target(prob: ConstrainedProblem, f_t) -> TargetDensity:
    """ReLU-likelihood posterior over the raw (unconstrained) derivative
    variables; gradient uses subgradient 0 at the kink."""
    P = prob.prior_precision()
    f_t = np.asarray(f_t, dtype=float)
    A = prob.A
    Sinv = cho_solve((prob.chol_sigma, True), np.eye(f_t.shape[0]))
    Sinv = 0.5 * (Sinv + Sinv.T)

    def fused(x):
        y = np.maximum(x, 0.0)
        r = A @ y - f_t
        Sr = Sinv @ r
        Px = P @ x
        lp = float(-0.5 * (r @ Sr + x @ Px))
        return lp, -(A.T @ Sr) * (x > 0.0) - Px

    def logpdf(x):
        return fused(x)[0]

    def grad(x):
        return fused(x)[1]

    return TargetDensity(prob.m, logpdf, grad, fused)


def sample_relu_gibbs(prob: ConstrainedProblem, f_t, n_samples: int,
                      burn_in: int, rng: RngStream) -> SampleBatch:
    f_t = np.asarray(f_t, dtype=float)
    G = prob.lik_operator()
    M = G @ prob.A
    M = 0.5 * (M + M.T)
    P = prob.prior_precision()
    h = G @ f_t
    # start at the unconstrained conjugate mean: the relu posterior keeps
    # real mass at negative coordinates (exactly-flat regions), which a
    # nonnegative start point misses for many multiples of the sweep's
    # autocorrelation time
    x0 = cho_solve((np.linalg.cholesky(add_jitter(M + P, 1.0)), True), h)
    seed = rng.kernel_seed()
    t0 = time.perf_counter()
    draws = _kern.gibbs_relu(M, P, h, x0, n_samples, burn_in, seed)
    dt = time.perf_counter() - t0
    return SampleBatch(draws, "relu-gibbs", dt, burn_in)


def sample_relu_nuts(prob: ConstrainedProblem, f_t, n_samples: int,
                     burn_in: int, rng: RngStream) -> SampleBatch:
    target = _relu_target(prob, f_t)
    f_t = np.asarray(f_t, dtype=float)
    G = prob.lik_operator()
    Lam = G @ prob.A + prob.prior_precision()
    Lam = 0.5 * (Lam + Lam.T)
    # center at the nonnegative mode, whiten with the positive-region
    # curvature Lam (the prior-only negative-region curvature is bounded
    # above by it, so whitened curvature stays <= identity)
    x_map, _, _ = _kern.pgd_bb(Lam, G @ f_t, np.zeros(prob.m), True,
                               1e-10 * (1.0 + np.max(np.abs(G @ f_t))), MAX_LSQ_ITER)
    L = np.linalg.cholesky(add_jitter(Lam, 1.0))
    batch = nuts_sample(_whitened(target, x_map, L), np.zeros(prob.m),
                        n_samples, burn_in, rng)
    batch.draws = _unwhiten(batch.draws, x_map, L)
    batch.method = "relu-nuts"
    return batch


def sample_rlrto(prob: ConstrainedProblem, f_t, n_samples: int, rng: RngStream,
                 warm_start: bool = True) -> SampleBatch:
    """Randomize-then-optimize with nonnegativity: each draw solves one
    randomized bound-constrained least-squares problem.  No burn-in."""
    f_t = np.asarray(f_t, dtype=float)
    base = BoundedLsqProblem(prob.A, prob.chol_sigma, prob.chol_K11,
                             f_t, np.zeros(prob.m), 0.0)
    H, _ = base.normal_equations()
    G = prob.lik_operator()
    P = prob.prior_precision()
    g = rng.generator()
    n, m = prob.n, prob.m
    t0 = time.perf_counter()
    Zb = g.standard_normal((n_samples, n))
    Zc = g.standard_normal((n_samples, m))
    draws = np.empty((n_samples, m))
    degraded = 0
    x = np.zeros(m)
    grad0 = H @ x - (G @ f_t)
    tol = 1e-8 * (1.0 + np.max(np.abs(grad0)))
    for i in range(n_samples):
        b_hat = f_t + prob.chol_sigma @ Zb[i]
        c_hat = prob.chol_K11 @ Zc[i]
        gvec = G @ b_hat + P @ c_hat
        x0 = x if warm_start else np.zeros(m)
        x, _, conv = _kern.pgd_bb(H, gvec, x0, True, tol, MAX_LSQ_ITER)
        if not conv:
            degraded += 1
        draws[i] = x
    dt = time.perf_counter() - t0
    zero_frac = float(np.mean(np.any(draws == 0.0, axis=1)))
    return SampleBatch(draws, "rlrto", dt, 0, degraded,
                       {"zero_component_fraction": zero_frac})


@dataclass
class ConstrainedPrediction:
    points: np.ndarray      # (p, d)
    samples: np.ndarray     # (N, p) posterior draws of f(u)
    mean: np.ndarray
    lower: np.ndarray       # 2.5% quantile
    upper: np.ndarray       # 97.5% quantile


def predict_constrained(prob: ConstrainedProblem, f_t, batch: SampleBatch, u,
                        rng: RngStream) -> ConstrainedPrediction:
    """Push constrained derivative samples through the derivative-enhanced
    conditional of f(u) given (f(t), f'(s)), drawing one realization per
    derivative sample."""
    model = prob.model
    p = model.params
    U = np.atleast_2d(np.asarray(u, dtype=float))
    if U.shape[1] != p.dim and p.dim == 1:
        U = U.reshape(-1, 1)
    f_t = np.asarray(f_t, dtype=float)
    Y = batch.draws
    if batch.method.startswith("relu"):
        Y = np.maximum(Y, 0.0)

    t = model.data.inputs
    pts = np.vstack([t, prob.design.points])
    specs = [DerivSpec(0, 0)] * t.shape[0] + prob.design.specs
    Kj = add_jitter(cov_block(pts, specs, pts, specs, p), p.variance)
    if model.data.noise_sd > 0:
        idx = np.arange(t.shape[0])
        Kj[idx, idx] += model.data.noise_sd ** 2
    Lj = np.linalg.cholesky(Kj)
    cross = cov_block(U, None, pts, specs, p)        # (p, n+m)
    B = cho_solve((Lj, True), cross.T)                # (n+m, p)
    Kuu = cov_block(U, None, U, None, p)
    cov_u = Kuu - cross @ B
    cov_u = 0.5 * (cov_u + cov_u.T)
    F = psd_factor(cov_u, p.variance)

    rhs = np.concatenate(
        [np.broadcast_to(f_t, (Y.shape[0], f_t.shape[0])), Y], axis=1)  # (N, n+m)
    means = rhs @ B                                   # (N, p)
    g = rng.generator()
    Z = g.standard_normal((F.shape[1], Y.shape[0]))
    samples = means + (F @ Z).T
    mean = samples.mean(axis=0)
    lower = np.quantile(samples, 0.025, axis=0)
    upper = np.quantile(samples, 0.975, axis=0)
    return ConstrainedPrediction(U, samples, mean, lower, upper)
