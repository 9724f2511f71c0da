"""Shared numerical kit: eigendecomposition, seeded randomness, moments, line fits.

Matrices are plain C-order float64 ``numpy.ndarray`` throughout the package.
All randomness flows through :class:`RngStream`, a counter-based generator
with reproducible splitting, so every experiment is a pure function of its
seed regardless of scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RngStream",
    "MomentStats",
    "sym_eig",
    "gaussian_sample",
    "sample_moments",
    "fit_line",
]


class RngStream:
    """Deterministic random stream built on the counter-based Philox generator.

    ``split(*ids)`` derives an independent child stream identified purely by
    ``(seed, spawn path)``; children never depend on how much the parent has
    been consumed, so parallel jobs that split by stable indices reproduce
    bit-exactly in any execution order.
    """

    def __init__(self, seed: int, _spawn_key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.spawn_key = tuple(int(k) for k in _spawn_key)
        seq = np.random.SeedSequence(self.seed, spawn_key=self.spawn_key)
        self.gen = np.random.Generator(np.random.Philox(seq))

    def split(self, *ids: int) -> "RngStream":
        """Independent child stream addressed by one or more integer ids."""
        return RngStream(self.seed, self.spawn_key + tuple(int(i) for i in ids))

    # Thin passthroughs so callers rarely need .gen directly.
    def normal(self, size=None):
        return self.gen.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size=size)

    def choice(self, n, size=None, replace=True):
        return self.gen.choice(n, size=size, replace=replace)

    def permutation(self, x):
        return self.gen.permutation(x)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, spawn_key={self.spawn_key})"


@dataclass(frozen=True)
class MomentStats:
    """First four sample moments of a 1-D sample.

    ``variance`` is Bessel-corrected (divisor n-1).  ``skewness`` and
    ``excess_kurtosis`` are the population-standardized central moments
    (divisor n), NaN when the sample is constant.
    """

    mean: float
    variance: float
    skewness: float
    excess_kurtosis: float
    count: int


def sym_eig(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a real symmetric matrix.

    Returns ``(w, v)`` with eigenvalues ``w`` ascending and orthonormal
    eigenvectors in the columns of ``v``, satisfying ``a @ v = v @ diag(w)``.

    Raises ``ValueError`` if ``a`` is not square or departs from symmetry by
    more than ``1e-9 * max|a|``.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    scale = np.abs(a).max() if a.size else 0.0
    if np.abs(a - a.T).max(initial=0.0) > 1e-9 * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    w, v = np.linalg.eigh(a)
    return w, v


def gaussian_sample(rng: RngStream, count: int) -> np.ndarray:
    """``count`` i.i.d. standard normal draws, advancing the stream."""
    if count < 0:
        raise ValueError("count must be >= 0")
    return rng.gen.standard_normal(int(count))


def sample_moments(data) -> MomentStats:
    """Mean, Bessel variance, skewness and excess kurtosis of a sample.

    Raises ``ValueError`` for samples shorter than 2.  Constant samples get
    variance 0 and NaN skewness/kurtosis (undefined, flagged rather than
    invented).
    """
    x = np.asarray(data, dtype=np.float64).ravel()
    n = x.size
    if n < 2:
        raise ValueError("need at least 2 observations")
    mean = float(np.mean(x))
    d = x - mean
    m2 = float(np.mean(d * d))
    variance = float(np.sum(d * d) / (n - 1))
    if m2 == 0.0:
        return MomentStats(mean, 0.0, math.nan, math.nan, n)
    m3 = float(np.mean(d**3))
    m4 = float(np.mean(d**4))
    skew = m3 / m2**1.5
    kurt = m4 / m2**2 - 3.0
    return MomentStats(mean, variance, skew, kurt, n)


def fit_line(x, y) -> tuple[float, float, float]:
    """Least-squares line fit: returns ``(slope, intercept, r_squared)``.

    Requires at least two distinct x values; raises ``ValueError`` for a
    degenerate (constant-x) configuration.  ``r_squared`` is 1.0 for an
    exact fit, including the constant-y case.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ValueError("x and y must have equal length")
    if x.size < 2 or np.unique(x).size < 2:
        raise ValueError("need at least 2 distinct x values")
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    sxy = float(np.sum((x - xm) * (y - ym)))
    slope = sxy / sxx
    intercept = ym - slope * xm
    resid = y - (slope * x + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return slope, intercept, max(0.0, min(1.0, r2))
