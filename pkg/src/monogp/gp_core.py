"""GP conditioning (plain and derivative-enhanced), marginal likelihood and
hyperparameter fitting."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .kernels import (
    DerivSpec,
    KernelParams,
    NumericalError,
    add_jitter,
    cholesky_jittered,
    cov_block,
)


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray   # (n, d)
    values: np.ndarray   # (n,)
    noise_sd: float = 0.0   # known observation-noise sd; enters the model as
                            # a fixed noise_sd^2 diagonal on observed-value
                            # covariance blocks (never inferred)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        if X.shape[0] == 1 and np.asarray(self.inputs).ndim == 1:
            X = X.T
        y = np.atleast_1d(np.asarray(self.values, dtype=float))
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} inputs vs {y.shape[0]} values")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "values", y)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]


@dataclass(frozen=True)
class GpModel:
    params: KernelParams
    data: Dataset
    mean_const: float = 0.0
    chol_Ktt: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.params.dim != self.data.dim:
            raise ValueError("kernel dim does not match data dim")
        if self.chol_Ktt is None:
            Ktt = cov_block(self.data.inputs, None, self.data.inputs, None, self.params)
            if self.data.noise_sd > 0:
                Ktt = Ktt + self.data.noise_sd ** 2 * np.eye(self.data.n)
            object.__setattr__(self, "chol_Ktt", cholesky_jittered(Ktt, self.params.variance))

    @property
    def centered(self) -> np.ndarray:
        return self.data.values - self.mean_const


@dataclass(frozen=True)
class GaussianPrediction:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def variance(self) -> np.ndarray:
        return np.clip(np.diag(self.cov), 0.0, None)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)


def posterior_value(model: GpModel, u) -> GaussianPrediction:
    """Condition f(u) on the training values."""
    p = model.params
    U = np.atleast_2d(np.asarray(u, dtype=float))
    if U.size == 0:
        return GaussianPrediction(np.zeros(0), np.zeros((0, 0)))
    if U.shape[1] != p.dim and p.dim == 1:
        U = U.reshape(-1, 1)
    Kut = cov_block(U, None, model.data.inputs, None, p)
    Kuu = cov_block(U, None, U, None, p)
    L = model.chol_Ktt
    alpha = cho_solve((L, True), model.centered)
    V = solve_triangular(L, Kut.T, lower=True)
    mean = model.mean_const + Kut @ alpha
    cov = Kuu - V.T @ V
    return GaussianPrediction(mean, cov)


def _deriv_specs(dims) -> list:
    return [DerivSpec(int(j), 1) for j in dims]


def predict_values_from_derivs(params: KernelParams, s_points, s_dims, fprime,
                               t_points, mean_const: float = 0.0) -> GaussianPrediction:
    """Condition f(t) on derivative observations f'(s) alone."""
    specs = _deriv_specs(s_dims)
    K11 = cov_block(s_points, specs, s_points, specs, params)
    L = cholesky_jittered(K11, params.variance)
    K01 = cov_block(t_points, None, s_points, specs, params)
    Ktt = cov_block(t_points, None, t_points, None, params)
    fprime = np.asarray(fprime, dtype=float)
    mean = mean_const + K01 @ cho_solve((L, True), fprime)
    V = solve_triangular(L, K01.T, lower=True)
    return GaussianPrediction(mean, Ktt - V.T @ V)


def predict_enhanced(model: GpModel, s_points, s_dims, fprime, u) -> GaussianPrediction:
    """Condition f(u) on the stacked vector [f(t); f'(s)]."""
    p = model.params
    U = np.atleast_2d(np.asarray(u, dtype=float))
    if U.shape[1] != p.dim and p.dim == 1:
        U = U.reshape(-1, 1)
    s_points = np.asarray(s_points, dtype=float).reshape(-1, p.dim)
    fprime = np.asarray(fprime, dtype=float)
    if s_points.shape[0] == 0:
        return posterior_value(model, U)
    specs = _deriv_specs(s_dims)
    t = model.data.inputs

    if model.data.n == 0:
        return predict_values_from_derivs(p, s_points, s_dims, fprime, U, model.mean_const)

    pts = np.vstack([t, s_points])
    all_specs = [DerivSpec(0, 0)] * t.shape[0] + specs
    Kj = cov_block(pts, all_specs, pts, all_specs, p)
    if model.data.noise_sd > 0:
        idx = np.arange(t.shape[0])
        Kj[idx, idx] += model.data.noise_sd ** 2
    L = cholesky_jittered(Kj, p.variance)
    cross = cov_block(U, None, pts, all_specs, p)
    rhs = np.concatenate([model.centered, fprime])
    mean = model.mean_const + cross @ cho_solve((L, True), rhs)
    V = solve_triangular(L, cross.T, lower=True)
    Kuu = cov_block(U, None, U, None, p)
    return GaussianPrediction(mean, Kuu - V.T @ V)


def log_marginal_likelihood(model: GpModel) -> float:
    L = model.chol_Ktt
    y = model.centered
    alpha = cho_solve((L, True), y)
    n = y.shape[0]
    return float(-0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * np.log(2 * np.pi))


def _lml_and_grad(data: Dataset, log_var: float, log_ls: np.ndarray, mean_const: float):
    """LML and its gradient w.r.t. (log variance, log lengthscales)."""
    p = KernelParams(np.exp(log_var), np.exp(log_ls))
    X = data.inputs
    n = data.n
    ls2 = p.lengthscales ** 2
    diff = X[:, None, :] - X[None, :, :]
    sq = diff ** 2 / ls2
    K = p.variance * np.exp(-0.5 * np.sum(sq, axis=2))
    Kj = add_jitter(K, p.variance)
    L = np.linalg.cholesky(Kj + data.noise_sd ** 2 * np.eye(n))
    y = data.values - mean_const
    alpha = cho_solve((L, True), y)
    lml = float(-0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * np.log(2 * np.pi))
    Kinv = cho_solve((L, True), np.eye(n))
    inner = np.outer(alpha, alpha) - Kinv
    grads = np.empty(1 + p.dim)
    grads[0] = 0.5 * np.sum(inner * Kj)              # dK/dlog sigma^2 = K + jitter
    for j in range(p.dim):
        grads[1 + j] = 0.5 * np.sum(inner * (K * sq[:, :, j]))
    return lml, grads


def fit_hyperparameters(data: Dataset, init: KernelParams, lr: float = 0.01,
                        max_iter: int = 20000, mean_const: float = 0.0,
                        grad_tol: float = 1e-6) -> KernelParams:
    """Gradient ascent on the log marginal likelihood in log-parameter space.

    Steps are clipped to 0.1 per coordinate so a steep gradient cannot throw
    the iterate into a degenerate region (lengthscale underflow).  Returns
    the iterate with the highest LML seen.
    """
    if data.n < 2 and max_iter > 0:
        raise ValueError("need at least two observations to fit hyperparameters")
    theta = np.concatenate([[np.log(init.variance)], np.log(init.lengthscales)])
    lml, g = _lml_and_grad(data, theta[0], theta[1:], mean_const)
    if not np.isfinite(lml):
        raise ValueError("log marginal likelihood not finite at init")
    best_theta, best_lml = theta.copy(), lml
    for _ in range(max_iter):
        if np.max(np.abs(g)) < grad_tol:
            break
        theta = theta + np.clip(lr * g, -0.1, 0.1)
        try:
            lml, g = _lml_and_grad(data, theta[0], theta[1:], mean_const)
        except (np.linalg.LinAlgError, ValueError, OverflowError):
            break
        if not np.isfinite(lml) or not np.all(np.isfinite(g)):
            break
        if lml > best_lml:
            best_lml, best_theta = lml, theta.copy()
    return KernelParams(np.exp(best_theta[0]), np.exp(best_theta[1:]))
