"""Generic sampling engines: truncated-normal draws, truncated-MVN Gibbs,
a self-contained multinomial NUTS, and the bound-constrained least-squares
solver used by randomize-then-optimize."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import ndtr, ndtri

from .accel import kernels
from .kernels import NumericalError, cholesky_jittered


@dataclass(frozen=True)
class RngStream:
    """Seed plus stream id; distinct streams give independent sequences."""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        return np.random.default_rng([self.seed, self.stream])

    def kernel_seed(self) -> int:
        """32-bit seed for the jitted kernels' internal generator."""
        ss = np.random.SeedSequence([self.seed, self.stream])
        return int(ss.generate_state(1, np.uint32)[0])

    def child(self, stream: int) -> "RngStream":
        return RngStream(self.seed, self.stream * 1000 + stream)


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass(frozen=True)
class TargetDensity:
    dim: int
    logpdf: Callable[[np.ndarray], float]
    grad_logpdf: Callable[[np.ndarray], np.ndarray]
    # optional fused evaluation returning (logpdf, grad); the NUTS leapfrog
    # leaf needs both at every step and fused targets share the intermediates
    logpdf_and_grad: Optional[Callable[[np.ndarray], tuple]] = None

    def value_and_grad(self, x):
        if self.logpdf_and_grad is not None:
            return self.logpdf_and_grad(x)
        return self.logpdf(x), self.grad_logpdf(x)


@dataclass
class SampleBatch:
    draws: np.ndarray          # (N, m)
    method: str
    seconds: float = 0.0
    burn_in: int = 0
    degraded: int = 0
    extras: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.draws.shape[0]


# ---------------------------------------------------------------------------
# truncated normal
# ---------------------------------------------------------------------------

def sample_truncnorm_lower(mu: float, sd: float, lo: float, rng) -> float:
    """Exact draw from N(mu, sd^2) restricted to [lo, inf).

    Inverse CDF in the complementary parameterization for moderate
    truncation, Robert-style exponential rejection beyond 4 sd.
    ``lo = -inf`` gives an untruncated draw.
    """
    if sd <= 0:
        raise ValueError("sd must be positive")
    g = _as_generator(rng)
    if lo == -np.inf:
        return mu + sd * g.standard_normal()
    a = (lo - mu) / sd
    if a > 4.0:
        alpha = 0.5 * (a + math.sqrt(a * a + 4.0))
        while True:
            z = a - math.log(g.random()) / alpha
            d = z - alpha
            if g.random() <= math.exp(-0.5 * d * d):
                return mu + sd * z
    qc = ndtr(-a)
    z = -ndtri((1.0 - g.random()) * qc)
    return mu + sd * max(z, a)


def sample_truncnorm_lower_batch(mu, sd, lo, size: int, rng) -> np.ndarray:
    """Vectorized counterpart of :func:`sample_truncnorm_lower`."""
    g = _as_generator(rng)
    mu, sd, lo = (np.broadcast_to(np.asarray(v, float), (size,)) for v in (mu, sd, lo))
    out = np.empty(size)
    free = np.isinf(lo) & (lo < 0)
    out[free] = mu[free] + sd[free] * g.standard_normal(free.sum())
    rest = ~free
    a = (lo[rest] - mu[rest]) / sd[rest]
    easy = a <= 4.0
    idx = np.flatnonzero(rest)
    qc = ndtr(-a[easy])
    z = -ndtri((1.0 - g.random(easy.sum())) * qc)
    z = np.maximum(z, a[easy])
    out[idx[easy]] = mu[idx[easy]] + sd[idx[easy]] * z
    for i, ai in zip(idx[~easy], a[~easy]):
        alpha = 0.5 * (ai + math.sqrt(ai * ai + 4.0))
        while True:
            zi = ai - math.log(g.random()) / alpha
            d = zi - alpha
            if g.random() <= math.exp(-0.5 * d * d):
                out[i] = mu[i] + sd[i] * zi
                break
    return out


# ---------------------------------------------------------------------------
# Gibbs for truncated MVN
# ---------------------------------------------------------------------------

def gibbs_truncated_mvn(mean, cov, n_samples: int, burn_in: int, rng) -> SampleBatch:
    """Component-wise Gibbs sampling of N(mean, cov) truncated to x >= 0."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    m = mean.shape[0]
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"covariance not SPD: {e}") from None
    prec = cho_solve((L, True), np.eye(m))
    prec = 0.5 * (prec + prec.T)
    # start at the mode of the truncated Gaussian so stiff problems need no
    # long transient
    pm = prec @ mean
    x0, _, _ = kernels.pgd_bb(prec, pm, np.maximum(mean, 0.0), True,
                              1e-8 * (1.0 + np.max(np.abs(pm))), MAX_LSQ_ITER)
    seed = rng.kernel_seed() if isinstance(rng, RngStream) else int(rng)
    t0 = time.perf_counter()
    draws = kernels.gibbs_truncated(prec, mean, x0, n_samples, burn_in, seed)
    dt = time.perf_counter() - t0
    return SampleBatch(draws, "gibbs-truncated", dt, burn_in)


# ---------------------------------------------------------------------------
# NUTS
# ---------------------------------------------------------------------------

def _logsumexp2(a: float, b: float) -> float:
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


class _Tree:
    __slots__ = ("x_minus", "r_minus", "g_minus", "x_plus", "r_plus", "g_plus",
                 "x_prop", "log_w", "alpha_sum", "n_alpha", "stop")

    def __init__(self, x, r, g, log_w, alpha, stop=False):
        self.x_minus = self.x_plus = self.x_prop = x
        self.r_minus = self.r_plus = r
        self.g_minus = self.g_plus = g
        self.log_w = log_w
        self.alpha_sum = alpha
        self.n_alpha = 1
        self.stop = stop


def _leapfrog(target, x, r, g, eps):
    r = r + 0.5 * eps * g
    x = x + eps * r
    lp, g2 = target.value_and_grad(x)
    r = r + 0.5 * eps * g2
    return x, r, g2, lp


def _uturn(tree) -> bool:
    dx = tree.x_plus - tree.x_minus
    return (dx @ tree.r_minus < 0.0) or (dx @ tree.r_plus < 0.0)


def _build_tree(target, x, r, g, direction, depth, eps, h0, rng, div_counter):
    if depth == 0:
        x1, r1, g1, lp = _leapfrog(target, x, direction * r, g, eps)
        h = lp - 0.5 * r1 @ r1
        log_w = h - h0
        if not np.isfinite(h) or h0 - h > 1000.0:
            div_counter[0] += 1
            t = _Tree(x1, direction * r1, g1, -np.inf, 0.0, stop=True)
            return t
        alpha = min(1.0, math.exp(min(0.0, log_w)))
        return _Tree(x1, direction * r1, g1, log_w, alpha)

    first = _build_tree(target, x, r, g, direction, depth - 1, eps, h0, rng, div_counter)
    if first.stop:
        return first
    if direction == 1:
        second = _build_tree(target, first.x_plus, first.r_plus, first.g_plus,
                             direction, depth - 1, eps, h0, rng, div_counter)
        first.x_plus, first.r_plus, first.g_plus = second.x_plus, second.r_plus, second.g_plus
    else:
        second = _build_tree(target, first.x_minus, first.r_minus, first.g_minus,
                             direction, depth - 1, eps, h0, rng, div_counter)
        first.x_minus, first.r_minus, first.g_minus = second.x_minus, second.r_minus, second.g_minus
    first.alpha_sum += second.alpha_sum
    first.n_alpha += second.n_alpha
    if not second.stop:
        total = _logsumexp2(first.log_w, second.log_w)
        # multinomial selection within the subtree
        if math.log(rng.random() + 1e-300) < second.log_w - total:
            first.x_prop = second.x_prop
        first.log_w = total
        first.stop = _uturn(first)
    else:
        first.stop = True
    return first


def _find_reasonable_epsilon(target, x0, rng):
    eps = 1.0
    g0 = target.grad_logpdf(x0)
    r = rng.standard_normal(x0.shape[0])
    h0 = target.logpdf(x0) - 0.5 * r @ r
    x1, r1, _, lp1 = _leapfrog(target, x0, r, g0, eps)
    h1 = lp1 - 0.5 * r1 @ r1
    if not np.isfinite(h1):
        h1 = -np.inf
    direction = 1.0 if (h1 - h0) > math.log(0.5) else -1.0
    for _ in range(50):
        eps *= 2.0 ** direction
        x1, r1, _, lp1 = _leapfrog(target, x0, r, g0, eps)
        h1 = lp1 - 0.5 * r1 @ r1
        if not np.isfinite(h1):
            h1 = -np.inf
        if direction * (h1 - h0) <= direction * math.log(0.5):
            break
    return eps


def nuts_sample(target: TargetDensity, x0, n_samples: int, burn_in: int, rng,
                target_accept: float = 0.8, max_depth: int = 10) -> SampleBatch:
    """No-U-Turn sampler with multinomial tree selection and dual-averaging
    step size adaptation during burn-in."""
    g = _as_generator(rng)
    x = np.asarray(x0, dtype=float).copy()
    lp = target.logpdf(x)
    if not np.isfinite(lp):
        raise ValueError("logpdf not finite at x0")
    grad = target.grad_logpdf(x)
    if not np.all(np.isfinite(grad)):
        raise ValueError("gradient not finite at x0")

    t_start = time.perf_counter()
    eps = _find_reasonable_epsilon(target, x, g)
    # dual averaging (Hoffman & Gelman defaults)
    mu_da = math.log(10.0 * eps)
    log_eps_bar = 0.0
    h_bar = 0.0
    gamma, t0, kappa = 0.05, 10.0, 0.75

    dim = x.shape[0]
    draws = np.empty((n_samples, dim))
    accept_hist = []
    div_burn = 0
    div_counter = [0]

    for it in range(burn_in + n_samples):
        r0 = g.standard_normal(dim)
        h0 = target.logpdf(x) - 0.5 * r0 @ r0
        tree = _Tree(x, r0, grad, 0.0, 1.0)
        tree.g_minus = tree.g_plus = grad
        depth = 0
        div_before = div_counter[0]
        while depth < max_depth and not tree.stop:
            direction = 1 if g.random() < 0.5 else -1
            if direction == 1:
                sub = _build_tree(target, tree.x_plus, tree.r_plus, tree.g_plus,
                                  1, depth, eps, h0, g, div_counter)
                tree.x_plus, tree.r_plus, tree.g_plus = sub.x_plus, sub.r_plus, sub.g_plus
            else:
                sub = _build_tree(target, tree.x_minus, tree.r_minus, tree.g_minus,
                                  -1, depth, eps, h0, g, div_counter)
                tree.x_minus, tree.r_minus, tree.g_minus = sub.x_minus, sub.r_minus, sub.g_minus
            tree.alpha_sum += sub.alpha_sum
            tree.n_alpha += sub.n_alpha
            if not sub.stop:
                # biased progressive sampling across doublings
                if math.log(g.random() + 1e-300) < sub.log_w - tree.log_w:
                    tree.x_prop = sub.x_prop
                tree.log_w = _logsumexp2(tree.log_w, sub.log_w)
                tree.stop = _uturn(tree)
            else:
                tree.stop = True
            depth += 1
        if not np.array_equal(tree.x_prop, x):
            x = tree.x_prop
            grad = target.grad_logpdf(x)
        alpha_mean = tree.alpha_sum / tree.n_alpha

        if it < burn_in:
            if div_counter[0] > div_before:
                div_burn += 1
            m_adapt = it + 1
            h_bar = (1.0 - 1.0 / (m_adapt + t0)) * h_bar + (target_accept - alpha_mean) / (m_adapt + t0)
            log_eps = mu_da - math.sqrt(m_adapt) / gamma * h_bar
            w = m_adapt ** (-kappa)
            log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar
            eps = math.exp(log_eps)
            if it == burn_in - 1:
                eps = math.exp(log_eps_bar)
        else:
            draws[it - burn_in] = x
            accept_hist.append(alpha_mean)

    dt = time.perf_counter() - t_start
    extras = {
        "step_size": eps,
        "mean_accept": float(np.mean(accept_hist)) if accept_hist else float("nan"),
        "divergences": div_counter[0],
        "divergent_burnin_frac": div_burn / burn_in if burn_in else 0.0,
    }
    extras["divergence_flag"] = burn_in > 0 and div_burn > 0.5 * burn_in
    return SampleBatch(draws, "nuts", dt, burn_in, 0, extras)


# ---------------------------------------------------------------------------
# bound-constrained least squares
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundedLsqProblem:
    """min 0.5 ||A x - b||^2_{Sigma^-1} + 0.5 ||x - c||^2_{Prior^-1}, x >= 0.

    `chol_sigma` and `chol_prior` are lower Cholesky factors of the data
    covariance Sigma and the prior covariance; the objective uses their
    inverses as metrics.  ``lower_bound=None`` removes the constraint.
    """

    A: np.ndarray
    chol_sigma: np.ndarray
    chol_prior: np.ndarray
    b: np.ndarray
    c: np.ndarray
    lower_bound: Optional[float] = 0.0

    def normal_equations(self):
        """(H, g) of the equivalent quadratic 0.5 x^T H x - g^T x."""
        At = solve_triangular(self.chol_sigma, self.A, lower=True)
        n = self.chol_prior.shape[0]
        P = cho_solve((self.chol_prior, True), np.eye(n))
        H = At.T @ At + P
        bt = solve_triangular(self.chol_sigma, self.b, lower=True)
        gvec = At.T @ bt + P @ self.c
        return 0.5 * (H + H.T), gvec


MAX_LSQ_ITER = 5000


def solve_bounded_lsq(prob: BoundedLsqProblem, x0=None):
    """Solve the (possibly bound-constrained) regularized least squares
    problem; returns (x, converged)."""
    H, gvec = prob.normal_equations()
    m = gvec.shape[0]
    if x0 is None:
        x0 = np.zeros(m)
    x0 = np.asarray(x0, dtype=float)
    bounded = prob.lower_bound is not None
    if bounded:
        x0 = np.maximum(x0, 0.0)
    grad0 = H @ x0 - gvec
    tol = 1e-8 * (1.0 + np.max(np.abs(grad0)))
    x, _, conv = kernels.pgd_bb(H, gvec, x0, bounded, tol, MAX_LSQ_ITER)
    return x, bool(conv)
