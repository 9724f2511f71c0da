"""Minibatch gradient-noise analysis: noise scales, covariance, exact oracles.

The central quantity is the error of the rescaled minibatch gradient,

    alpha = (N/B) * sum_{i in batch} g_i  -  sum_i g_i,

for batches drawn WITHOUT replacement.  With the per-example gradient
covariance F taken with Bessel divisor N-1, finite-population algebra gives

    E[alpha] = 0,    Cov[alpha] = N * (N/B - 1) * F       (exactly),

which reconciles the i.i.d. central-limit derivation with subset sampling;
with the population divisor N the identity would be off by N/(N-1).  The
brute-force enumerator below checks this identity to machine precision.

Noise scales: plain SGD carries g = eps*(N/B - 1) ~ eps*N/B; heavy-ball
momentum rescales it by 1/(1-m) and maps onto an underdamped Langevin
equation with time step dt = sqrt(eps*N) and damping (1-m)*N/dt.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from . import models as mdl
from .data import Dataset
from .numkit import MomentStats, RngStream, sample_moments
from .optim import sample_minibatch

__all__ = [
    "NoiseScaleConfig",
    "MomentumSdeMap",
    "GradNoiseReport",
    "RegimeError",
    "noise_scale",
    "momentum_noise_scale",
    "grad_covariance_F",
    "alpha_moments_bruteforce",
    "gaussianity_report",
]

MAX_ENUMERATION = 1_000_000


class RegimeError(ValueError):
    """Exact enumeration would be too large; sample instead of enumerating."""


@dataclass(frozen=True)
class NoiseScaleConfig:
    epsilon: float
    n: int
    batch: int
    momentum: float = 0.0

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if not 1 <= self.batch <= self.n:
            raise ValueError("need 1 <= batch <= n")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")


@dataclass(frozen=True)
class MomentumSdeMap:
    """Mapping between (epsilon, m) and the underdamped-Langevin (dt, damping)."""

    dt: float
    damping: float

    @classmethod
    def from_hyper(cls, epsilon: float, n: int, momentum: float) -> "MomentumSdeMap":
        dt = float(np.sqrt(epsilon * n))
        return cls(dt=dt, damping=(1.0 - momentum) * n / dt)

    def to_hyper(self, n: int) -> tuple[float, float]:
        """Recover (epsilon, momentum); round-trips with from_hyper."""
        return self.dt**2 / n, 1.0 - self.damping * self.dt / n


@dataclass(frozen=True)
class GradNoiseReport:
    """Exact enumeration results next to the closed-form prediction."""

    F: np.ndarray  # per-example gradient covariance (diag vector or full matrix)
    alpha_mean: np.ndarray
    alpha_cov: np.ndarray  # enumerated covariance of alpha
    formula_cov: np.ndarray  # N*(N/B-1)*F


def noise_scale(cfg: NoiseScaleConfig) -> tuple[float, float]:
    """SGD noise scale: ``(eps*(N/B - 1), eps*N/B)`` as (exact, approximate)."""
    g_exact = cfg.epsilon * (cfg.n / cfg.batch - 1.0)
    g_approx = cfg.epsilon * cfg.n / cfg.batch
    return g_exact, g_approx


def momentum_noise_scale(cfg: NoiseScaleConfig) -> tuple[float, float, MomentumSdeMap]:
    """Noise scale with heavy-ball momentum: the SGD value times 1/(1-m)."""
    g_exact, g_approx = noise_scale(cfg)
    factor = 1.0 / (1.0 - cfg.momentum)
    sde = MomentumSdeMap.from_hyper(cfg.epsilon, cfg.n, cfg.momentum)
    return g_exact * factor, g_approx * factor, sde


def grad_covariance_F(per_example_grads: np.ndarray, full: bool = False) -> np.ndarray:
    """Bessel-corrected covariance of per-example gradient rows.

    Returns the diagonal by default (parameter counts can reach ~6e5); pass
    ``full=True`` for the complete matrix on small problems.
    """
    g = np.asarray(per_example_grads, dtype=np.float64)
    if g.ndim != 2 or g.shape[0] < 2:
        raise ValueError("need an N x p matrix with N >= 2")
    centered = g - g.mean(axis=0)
    if full:
        return centered.T @ centered / (g.shape[0] - 1)
    return np.sum(centered**2, axis=0) / (g.shape[0] - 1)


def alpha_moments_bruteforce(
    per_example_grads: np.ndarray, batch: int, full: bool = False
) -> GradNoiseReport:
    """Exact moments of alpha by enumerating every size-``batch`` subset.

    The enumerated mean must vanish and the enumerated covariance must equal
    ``N*(N/B-1)*F`` to machine precision; see the module docstring.  Raises
    :class:`RegimeError` when C(N, B) exceeds ``MAX_ENUMERATION``.
    """
    g = np.asarray(per_example_grads, dtype=np.float64)
    if g.ndim != 2:
        raise ValueError("per-example gradients must be an N x p matrix")
    n, p = g.shape
    if not 1 <= batch <= n:
        raise ValueError(f"need 1 <= batch <= {n}")
    count = comb(n, batch)
    if count > MAX_ENUMERATION or count * p > 8 * MAX_ENUMERATION:
        raise RegimeError(
            f"C({n},{batch}) = {count} subsets is beyond the exact-enumeration regime"
        )
    total = g.sum(axis=0)
    subsets = np.fromiter(
        (i for c in combinations(range(n), batch) for i in c),
        dtype=np.int64,
        count=count * batch,
    ).reshape(count, batch)
    alphas = (n / batch) * g[subsets].sum(axis=1) - total
    mean = alphas.mean(axis=0)
    if full:
        cov = alphas.T @ alphas / count
        formula = n * (n / batch - 1.0) * grad_covariance_F(g, full=True)
    else:
        cov = np.mean(alphas**2, axis=0)
        formula = n * (n / batch - 1.0) * grad_covariance_F(g)
    return GradNoiseReport(
        F=grad_covariance_F(g, full=full),
        alpha_mean=mean,
        alpha_cov=cov,
        formula_cov=formula,
    )


def gaussianity_report(
    model: mdl.ModelState,
    ds: Dataset,
    param_index: int,
    batch: int,
    draws: int,
    rng: RngStream,
) -> tuple[MomentStats, MomentStats]:
    """Moment summary of one parameter's gradient, per example vs per minibatch.

    Returns ``(single_example_stats, minibatch_mean_stats)`` where the second
    distribution is over ``draws`` means of size-``batch`` batches sampled
    without replacement (independently across draws).  Averaging shrinks the
    skew roughly like 1/sqrt(B), pulling the distribution toward the Gaussian
    limit.
    """
    if draws < 2:
        raise ValueError("need at least 2 draws")
    g_single = mdl.per_example_grad_component(model, ds, param_index)
    batch_means = np.empty(draws)
    for k in range(draws):
        idx = sample_minibatch(ds.n, batch, rng)
        batch_means[k] = g_single[idx].mean()
    return sample_moments(g_single), sample_moments(batch_means)
