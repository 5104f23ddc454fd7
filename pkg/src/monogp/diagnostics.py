"""Quality and efficiency metrics: MSE, credible-interval width, integrated
autocorrelation time and effective samples per second."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class MetricsReport:
    mse: float
    mean_ci_width: float
    mean_iat: Optional[float]       # None when not applicable (no chain)
    ess_per_second: Optional[float]
    n_samples: int
    runtime_seconds: float


def mse(samples: np.ndarray, truth: np.ndarray) -> float:
    """Mean over samples of the squared error, normalized per point."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    truth = np.asarray(truth, dtype=float).ravel()
    if samples.shape[1] != truth.shape[0]:
        raise ValueError(f"samples have {samples.shape[1]} points, truth {truth.shape[0]}")
    err = samples - truth
    return float(np.mean(np.sum(err ** 2, axis=1)) / truth.shape[0])


def ci_width(samples: np.ndarray, level: float = 0.95) -> float:
    """Mean component-wise width of the central credible interval."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] < 40:
        raise ValueError("need at least 40 samples for quantile estimation")
    tail = 0.5 * (1.0 - level)
    lo = np.quantile(samples, tail, axis=0)
    hi = np.quantile(samples, 1.0 - tail, axis=0)
    return float(np.mean(hi - lo))


def iat(chain: np.ndarray) -> float:
    """Integrated autocorrelation time with Geyer's initial positive
    sequence truncation; floored at 1.  Zero-variance chains return 1."""
    chain = np.asarray(chain, dtype=float).ravel()
    n = chain.shape[0]
    if n < 100:
        raise ValueError("need at least 100 samples")
    x = chain - chain.mean()
    var = x @ x / n
    if var == 0.0:
        warnings.warn("zero-variance chain; IAT defaults to 1", RuntimeWarning)
        return 1.0
    # autocovariance via FFT
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n].real / n
    rho = acov / acov[0]
    # sum consecutive lag-pair sums while positive
    tau = -1.0
    k = 0
    while 2 * k + 1 < n:
        gamma = rho[2 * k] + rho[2 * k + 1]
        if gamma <= 0.0:
            break
        tau += 2.0 * gamma
        k += 1
    return max(tau, 1.0)


def mean_iat(draws: np.ndarray) -> float:
    """Average component-wise IAT of an (N, m) chain."""
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    if draws.ndim == 2 and draws.shape[1] > 1:
        return float(np.mean([iat(draws[:, j]) for j in range(draws.shape[1])]))
    return iat(draws.ravel())


def ess_per_second(n_samples: int, mean_iat_value: float, runtime_seconds: float) -> float:
    if n_samples <= 0 or mean_iat_value <= 0 or runtime_seconds <= 0:
        raise ValueError("all inputs must be positive")
    return (n_samples / mean_iat_value) / runtime_seconds
