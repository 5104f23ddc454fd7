"""Squared-exponential kernel with ARD lengthscales and its derivative
cross-covariances, plus assembly of mixed value/derivative blocks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

JITTER_REL = 1e-8


class DimensionError(ValueError):
    pass


class NumericalError(RuntimeError):
    pass


@dataclass(frozen=True)
class KernelParams:
    """Hyperparameters: signal variance and one lengthscale per input dim."""

    variance: float
    lengthscales: np.ndarray

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(self, "lengthscales", ls)
        if not (self.variance > 0):
            raise ValueError(f"variance must be positive, got {self.variance}")
        if not np.all(ls > 0):
            raise ValueError(f"lengthscales must be positive, got {ls}")

    @property
    def dim(self) -> int:
        return self.lengthscales.shape[0]


@dataclass(frozen=True)
class DerivSpec:
    """What is observed at a point: the value (order 0) or the partial
    derivative along coordinate `dim` (order 1)."""

    dim: int = 0
    order: int = 0

    def __post_init__(self):
        if self.order not in (0, 1):
            raise ValueError(f"order must be 0 or 1, got {self.order}")
        if self.dim < 0:
            raise ValueError(f"dim must be nonnegative, got {self.dim}")


VALUE = DerivSpec(0, 0)


def _check_point(x, p: KernelParams):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape[0] != p.dim:
        raise DimensionError(f"point has dim {x.shape[0]}, kernel expects {p.dim}")
    return x


def k(x, y, p: KernelParams) -> float:
    x, y = _check_point(x, p), _check_point(y, p)
    r = (x - y) / p.lengthscales
    return p.variance * np.exp(-0.5 * np.dot(r, r))


def k01(x, y, j: int, p: KernelParams) -> float:
    """d k / d y_j."""
    x, y = _check_point(x, p), _check_point(y, p)
    return k(x, y, p) * (x[j] - y[j]) / p.lengthscales[j] ** 2


def k10(x, y, j: int, p: KernelParams) -> float:
    """d k / d x_j."""
    return -k01(x, y, j, p)


def k11(x, y, j: int, p: KernelParams) -> float:
    """d^2 k / (d x_j d y_j)."""
    x, y = _check_point(x, p), _check_point(y, p)
    lj2 = p.lengthscales[j] ** 2
    return k(x, y, p) * (1.0 / lj2 - (x[j] - y[j]) ** 2 / lj2 ** 2)


def _as_matrix(X, p: KernelParams):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1) if p.dim == 1 else X.reshape(1, -1)
    if X.ndim != 2 or (X.size and X.shape[1] != p.dim):
        raise DimensionError(f"points of shape {X.shape} do not match dim {p.dim}")
    return X


def _spec_arrays(specs, n):
    if specs is None:
        return np.zeros(n, dtype=np.int64), np.zeros(n, dtype=np.int64)
    orders = np.array([s.order for s in specs], dtype=np.int64)
    dims = np.array([s.dim for s in specs], dtype=np.int64)
    if orders.shape[0] != n:
        raise DimensionError(f"{orders.shape[0]} specs for {n} points")
    return orders, dims


def cov_block(X, SX, Y, SY, p: KernelParams) -> np.ndarray:
    """Covariance between mixed value/derivative observations.

    Entry (i, r) is cov(obs_i at X[i], obs_r at Y[r]) where each obs is the
    value or a first partial derivative per its DerivSpec.  Cross terms
    between derivatives along different coordinates are supported.
    """
    X = _as_matrix(X, p)
    Y = _as_matrix(Y, p)
    ox, dx = _spec_arrays(SX, X.shape[0])
    oy, dy = _spec_arrays(SY, Y.shape[0])
    if (dx >= p.dim).any() or (dy >= p.dim).any():
        raise DimensionError("derivative dim out of range")
    n, m = X.shape[0], Y.shape[0]
    if n == 0 or m == 0:
        return np.zeros((n, m))

    ls2 = p.lengthscales ** 2
    diff = X[:, None, :] - Y[None, :, :]           # (n, m, d)
    base = p.variance * np.exp(-0.5 * np.sum(diff ** 2 / ls2, axis=2))

    # derivative coordinate of each row/column (value rows use dummy dim 0)
    da = diff[np.arange(n)[:, None], np.arange(m)[None, :], dx[:, None]]
    db = diff[np.arange(n)[:, None], np.arange(m)[None, :], dy[None, :]]
    la2 = ls2[dx][:, None]
    lb2 = ls2[dy][None, :]
    same = (dx[:, None] == dy[None, :])

    fac = np.ones((n, m))
    mx = ox[:, None] == 1
    my = oy[None, :] == 1
    both = mx & my
    only_x = mx & ~my
    only_y = ~mx & my
    # d/dy_b: (x_b - y_b)/l_b^2
    fac = np.where(only_y, db / lb2, fac)
    # d/dx_a: (y_a - x_a)/l_a^2
    fac = np.where(only_x, -da / la2, fac)
    # d^2/dx_a dy_b: delta_ab/l_b^2 - (x_a-y_a)(x_b-y_b)/(l_a^2 l_b^2)
    fac = np.where(both, same / lb2 - da * db / (la2 * lb2), fac)
    return base * fac


def add_jitter(K: np.ndarray, variance: float) -> np.ndarray:
    out = K.copy()
    out[np.diag_indices_from(out)] += JITTER_REL * variance
    return out


def cholesky_jittered(K: np.ndarray, variance: float) -> np.ndarray:
    """Lower Cholesky factor of K + relative jitter; raises NumericalError
    with a condition report on failure."""
    Kj = add_jitter(K, variance)
    try:
        return np.linalg.cholesky(Kj)
    except np.linalg.LinAlgError:
        eigs = np.linalg.eigvalsh(Kj)
        raise NumericalError(
            f"Cholesky failed: eig range [{eigs.min():.3e}, {eigs.max():.3e}], "
            f"size {K.shape[0]}"
        ) from None


def psd_factor(K: np.ndarray, variance: float) -> np.ndarray:
    """A factor F with F F^T ~= K, robust to rank deficiency.

    Tries Cholesky with escalating jitter, then falls back to a clipped
    eigendecomposition.  Used only where samples are drawn from a predictive
    covariance, where any PSD square root is acceptable.
    """
    for rel in (JITTER_REL, 1e-6, 1e-4):
        Kj = K + rel * variance * np.eye(K.shape[0])
        try:
            return np.linalg.cholesky(Kj)
        except np.linalg.LinAlgError:
            continue
    w, V = np.linalg.eigh(K)
    w = np.clip(w, 0.0, None)
    return V * np.sqrt(w)
