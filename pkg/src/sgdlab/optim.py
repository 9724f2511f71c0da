"""Optimization dynamics: minibatch SGD, heavy-ball momentum, Langevin sampling,
and a deterministic full-batch minimizer.

Update conventions (summed-cost form, recorded once here and used everywhere):

* The estimated full-batch gradient from a minibatch ``S`` of size ``B`` is
  ``ghat = (N/B) * sum_{i in S} g_i + lam * w`` where ``g_i`` are per-example
  gradients and the penalty enters once.
* Plain SGD:       ``w <- w - eps * (ghat / N)``; equivalently eps times the
  mean minibatch per-example gradient (same expression up to the penalty's
  1/N scaling).
* Momentum:        ``A <- m*A - ghat/N``; ``w <- w + eps*A``.  With m = 0 this
  reproduces the SGD sequence bit-for-bit given the same batches.
* Langevin (SGLD): ``w <- w - eps * (gfull / N) + alpha`` with the full-batch
  gradient and ``alpha ~ Normal(0, 2*T*eps/N * I)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg as sla

from . import models as mdl
from .data import Dataset, SplitPair
from .numkit import RngStream

__all__ = [
    "TrainConfig",
    "MomentumState",
    "TrajectoryRow",
    "DivergedError",
    "ConvergenceError",
    "ModelObjective",
    "QuadraticObjective",
    "FunctionObjective",
    "sample_minibatch",
    "estimated_grad",
    "sgd_step",
    "momentum_step",
    "sgld_step",
    "train",
    "newton_minimize",
    "minimize_full_batch",
    "write_trajectory_csv",
]

DIVERGENCE_COST = 1e12


class DivergedError(RuntimeError):
    """Training produced a non-finite or absurd cost; carries the step index."""

    def __init__(self, step: int, detail: str = ""):
        self.step = step
        super().__init__(f"diverged at step {step}" + (f": {detail}" if detail else ""))


class ConvergenceError(RuntimeError):
    """Minimizer hit its iteration cap before meeting the tolerance."""


@dataclass(frozen=True)
class TrainConfig:
    """Every SGD hyperparameter in one place."""

    epsilon: float
    batch: int
    steps: int
    seed: int
    momentum: float = 0.0
    lam: float = 0.0
    temperature: float = 1.0  # SGLD only
    eval_every: int = 1000

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")


@dataclass(frozen=True)
class MomentumState:
    accumulation: np.ndarray
    params: np.ndarray


@dataclass(frozen=True)
class TrajectoryRow:
    step: int
    train_acc: float
    test_acc: float
    train_xent: float  # per-example mean, nats
    test_xent: float


# ---------------------------------------------------------------------------
# Objectives: anything exposing n_examples / grad_sum / penalty_grad / cost_total
# ---------------------------------------------------------------------------


class ModelObjective:
    """Summed-cost objective for a model on a fixed dataset."""

    def __init__(self, template: mdl.ModelState, ds: Dataset, lam, regularize_bias=True):
        self.template = template
        self.ds = ds
        self.lam_vec = mdl.lambda_vector(template, lam, regularize_bias)
        self.n_examples = ds.n

    def _state(self, params):
        return self.template.with_params(params)

    def grad_sum(self, params, idx=None):
        ds = self.ds if idx is None else Dataset(
            self.ds.inputs[idx], self.ds.labels[idx], self.ds.n_classes
        )
        return mdl.grad(self._state(params), ds, 0.0)

    def penalty_grad(self, params):
        return self.lam_vec * params

    def cost_total(self, params):
        state = self._state(params)
        xent = mdl.cost(state, self.ds, 0.0).cross_entropy
        return xent + 0.5 * float(np.sum(self.lam_vec * params**2))


class QuadraticObjective:
    """Per-example costs k*(w - c_i)**2 / 2 for a single parameter; the exact
    geometric-contraction oracle for step-rule tests."""

    def __init__(self, k: float, centers):
        self.k = float(k)
        self.centers = np.asarray(centers, dtype=np.float64)
        self.n_examples = self.centers.size

    def grad_sum(self, params, idx=None):
        c = self.centers if idx is None else self.centers[idx]
        return np.array([self.k * (c.size * params[0] - c.sum())])

    def penalty_grad(self, params):
        return np.zeros_like(params)

    def cost_total(self, params):
        return float(0.5 * self.k * np.sum((params[0] - self.centers) ** 2))


class FunctionObjective:
    """Arbitrary summed cost C(w) given directly as callables (n_examples = 1),
    e.g. the double-well potential for Langevin demos."""

    def __init__(self, cost_fn, grad_fn):
        self.cost_fn = cost_fn
        self.grad_fn = grad_fn
        self.n_examples = 1

    def grad_sum(self, params, idx=None):
        return np.asarray(self.grad_fn(params), dtype=np.float64)

    def penalty_grad(self, params):
        return np.zeros_like(params)

    def cost_total(self, params):
        return float(self.cost_fn(params))


# ---------------------------------------------------------------------------
# Steps
# ---------------------------------------------------------------------------


def sample_minibatch(n: int, batch: int, rng: RngStream) -> np.ndarray:
    """``batch`` distinct indices, uniform over all size-``batch`` subsets."""
    if not 1 <= batch <= n:
        raise ValueError(f"need 1 <= batch <= {n}, got {batch}")
    return rng.choice(n, size=batch, replace=False)


def estimated_grad(obj, params: np.ndarray, batch: np.ndarray) -> np.ndarray:
    """Minibatch estimate of the full summed-cost gradient:
    ``(N/B) * sum_batch g_i + penalty``."""
    n = obj.n_examples
    return (n / batch.size) * obj.grad_sum(params, batch) + obj.penalty_grad(params)


def sgd_step(params: np.ndarray, obj, batch: np.ndarray, epsilon: float) -> np.ndarray:
    ghat = estimated_grad(obj, params, batch)
    return params - epsilon * (ghat / obj.n_examples)


def momentum_step(
    state: MomentumState, obj, batch: np.ndarray, epsilon: float, m: float
) -> MomentumState:
    ghat = estimated_grad(obj, state.params, batch)
    accumulation = m * state.accumulation - ghat / obj.n_examples
    return MomentumState(accumulation, state.params + epsilon * accumulation)


def sgld_step(
    params: np.ndarray, obj, epsilon: float, temperature: float, rng: RngStream
) -> np.ndarray:
    """One overdamped-Langevin step on the full-batch gradient with injected
    isotropic noise of variance ``2*T*eps/N`` per coordinate."""
    if temperature < 0:
        raise ValueError("temperature must be >= 0")
    n = obj.n_examples
    gfull = obj.grad_sum(params) + obj.penalty_grad(params)
    new = params - epsilon * (gfull / n)
    if temperature > 0:
        new = new + np.sqrt(2.0 * temperature * epsilon / n) * rng.normal(params.shape)
    return new


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


def _metrics(model: mdl.ModelState, pair: SplitPair, step: int) -> TrajectoryRow:
    _, train_acc = mdl.predict_and_accuracy(model, pair.train)
    _, test_acc = mdl.predict_and_accuracy(model, pair.test)
    return TrajectoryRow(
        step,
        train_acc,
        test_acc,
        mdl.mean_xent(model, pair.train),
        mdl.mean_xent(model, pair.test),
    )


def train(
    model: mdl.ModelState,
    pair: SplitPair,
    config: TrainConfig,
    mode: str = "sgd",
) -> tuple[mdl.ModelState, list[TrajectoryRow]]:
    """Run ``config.steps`` updates of the chosen dynamics; constant learning
    rate throughout (no decay).  Metrics are recorded every ``eval_every``
    steps and at the final step.

    Raises :class:`DivergedError` (with the step index) when parameters go
    non-finite or the training cost exceeds ``1e12``.
    """
    if mode not in ("sgd", "momentum", "sgld"):
        raise ValueError(f"unknown mode {mode!r}")
    n = pair.train.n
    if mode != "sgld" and config.batch > n:
        raise ValueError(f"batch {config.batch} exceeds train size {n}")
    obj = ModelObjective(model, pair.train, config.lam)
    rng = RngStream(config.seed)
    batch_rng = rng.split(0)
    noise_rng = rng.split(1)

    params = model.params.copy()
    accumulation = np.zeros_like(params)
    trajectory: list[TrajectoryRow] = []

    for t in range(1, config.steps + 1):
        if mode == "sgd":
            batch = sample_minibatch(n, config.batch, batch_rng)
            params = sgd_step(params, obj, batch, config.epsilon)
        elif mode == "momentum":
            batch = sample_minibatch(n, config.batch, batch_rng)
            state = momentum_step(
                MomentumState(accumulation, params), obj, batch, config.epsilon,
                config.momentum,
            )
            accumulation, params = state.accumulation, state.params
        else:
            params = sgld_step(
                params, obj, config.epsilon, config.temperature, noise_rng
            )
        if not np.all(np.isfinite(params)):
            raise DivergedError(t, "non-finite parameters")
        if t % config.eval_every == 0 or t == config.steps:
            current = model.with_params(params)
            total = obj.cost_total(params)
            if not np.isfinite(total) or total > DIVERGENCE_COST:
                raise DivergedError(t, f"training cost {total:.3e}")
            trajectory.append(_metrics(current, pair, t))

    return model.with_params(params), trajectory


def write_trajectory_csv(rows: list[TrajectoryRow], path) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "train_acc", "test_acc", "train_xent", "test_xent"])
        for r in rows:
            writer.writerow([r.step, r.train_acc, r.test_acc, r.train_xent, r.test_xent])


# ---------------------------------------------------------------------------
# Deterministic full-batch minimization (damped Newton)
# ---------------------------------------------------------------------------


def newton_minimize(
    cost_fn, grad_fn, hess_fn, x0: np.ndarray, tol: float, max_iter: int = 100
) -> np.ndarray:
    """Damped Newton with Armijo backtracking; stops at ``||grad||_inf <= tol``."""
    x = np.asarray(x0, dtype=np.float64).copy()
    fx = cost_fn(x)
    for _ in range(max_iter):
        g = grad_fn(x)
        if np.abs(g).max(initial=0.0) <= tol:
            return x
        h = hess_fn(x)
        try:
            step = sla.cho_solve(sla.cho_factor(h), g)
        except np.linalg.LinAlgError:
            step = np.linalg.solve(h, g)
        t, slope = 1.0, float(g @ step)
        for _ in range(60):
            candidate = x - t * step
            fc = cost_fn(candidate)
            if fc <= fx - 1e-4 * t * slope:
                break
            t *= 0.5
        x, fx = candidate, fc
    g = grad_fn(x)
    if np.abs(g).max(initial=0.0) <= tol:
        return x
    raise ConvergenceError(
        f"no convergence in {max_iter} Newton iterations (|grad|_inf = {np.abs(g).max():.3e})"
    )


def minimize_full_batch(
    model: mdl.ModelState, ds: Dataset, lam, tol: float | None = None,
    max_iter: int = 100, regularize_bias: bool = True,
) -> mdl.ModelState:
    """Minimize the regularized logistic cost to ``||grad||_inf <= tol``
    (default ``1e-8 * N``).  Requires strictly positive regularization so the
    minimum is unique."""
    if model.kind != "logreg":
        raise ValueError("full-batch minimizer covers logistic regression")
    lam_vec = mdl.lambda_vector(model, lam, regularize_bias)
    if lam_vec.min() <= 0 and regularize_bias:
        raise ValueError("lam must be > 0 for a unique minimum")
    if tol is None:
        tol = 1e-8 * ds.n

    def cost_fn(p):
        return mdl.cost(model.with_params(p), ds, lam_vec).total

    def grad_fn(p):
        return mdl.grad(model.with_params(p), ds, lam_vec)

    def hess_fn(p):
        return mdl.logreg_hessian(model.with_params(p), ds, lam_vec)

    x = newton_minimize(cost_fn, grad_fn, hess_fn, model.params, tol, max_iter)
    return model.with_params(x)
