"""Point-set generation: scrambled Sobol sequences for virtual points and
Latin hypercube designs for training data."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

MAX_SOBOL_DIM = 16


@dataclass(frozen=True)
class DomainBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or not np.all(lo < hi):
            raise ValueError(f"invalid box: lower={lo}, upper={hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def scale(self, unit_pts: np.ndarray) -> np.ndarray:
        return self.lower + unit_pts * (self.upper - self.lower)


def sobol_points(m: int, box: DomainBox, scramble_seed=None) -> np.ndarray:
    """First m points of a (digitally scrambled) Sobol sequence in the box.

    Index 0 of the raw sequence (the origin) is skipped.  For a fixed seed
    the first m points of a longer request are a prefix of it.
    """
    d = box.dim
    if d > MAX_SOBOL_DIM:
        raise ValueError(f"dimension {d} above supported maximum {MAX_SOBOL_DIM}")
    eng = qmc.Sobol(d, scramble=scramble_seed is not None, seed=scramble_seed)
    eng.fast_forward(1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # non-power-of-two draws
        pts = eng.random(m)
    return box.scale(pts)


def latin_hypercube(n: int, box: DomainBox, rng) -> np.ndarray:
    """Stratified design: one point per axis stratum in every dimension,
    uniform jitter within strata, independent permutations across dims."""
    if n < 1:
        raise ValueError("n must be >= 1")
    g = rng.generator() if hasattr(rng, "generator") else np.random.default_rng(rng)
    unit = np.empty((n, box.dim))
    for j in range(box.dim):
        perm = g.permutation(n)
        unit[:, j] = (perm + g.random(n)) / n
    return box.scale(unit)
