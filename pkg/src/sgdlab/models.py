"""The two models under study: logistic regression and a shallow ReLU/softmax net.

Both models are evaluated functionally: a :class:`ModelState` is an immutable
flat parameter vector plus an architecture descriptor, and every operation
(cost, gradient, Hessian, prediction) is a pure function of state + data.

Conventions
-----------
* Cross-entropy is summed over examples, in nats.
* The L2 penalty is ``0.5 * sum_j lambda_j * w_j**2``; ``lam`` may be a
  scalar or a per-parameter vector.  By default all parameters, biases
  included, are regularized (a proper Gaussian prior over the whole vector);
  pass ``regularize_bias=False`` for sensitivity checks.
* Parameter layout: logreg ``[w(d), b]``; mlp ``[W1(d*h), b1(h), W2(h*n), b2(n)]``
  with weight blocks stored row-major.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset
from .numkit import RngStream

__all__ = [
    "ModelState",
    "CostBreakdown",
    "init_logreg",
    "init_mlp",
    "lambda_vector",
    "cost",
    "grad",
    "per_example_grads",
    "per_example_grad_component",
    "logreg_hessian",
    "mean_margin",
    "predict_and_accuracy",
    "save_model",
    "load_model",
]


@dataclass(frozen=True)
class ModelState:
    """Flat parameter vector plus architecture descriptor."""

    kind: str  # "logreg" | "mlp"
    params: np.ndarray
    d: int
    n_classes: int
    h: int | None = None  # hidden units, mlp only

    def __post_init__(self):
        params = np.ascontiguousarray(self.params, dtype=np.float64)
        if self.kind == "logreg":
            expected = self.d + 1
        elif self.kind == "mlp":
            if not self.h or self.h < 1:
                raise ValueError("mlp needs h >= 1")
            expected = (self.d + 1) * self.h + (self.h + 1) * self.n_classes
        else:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if params.shape != (expected,):
            raise ValueError(f"params length {params.shape} != expected ({expected},)")
        if not np.all(np.isfinite(params)):
            raise ValueError("params must be finite")
        params.flags.writeable = False
        object.__setattr__(self, "params", params)

    @property
    def p(self) -> int:
        return self.params.size

    def with_params(self, params: np.ndarray) -> "ModelState":
        return ModelState(self.kind, params, self.d, self.n_classes, self.h)


@dataclass(frozen=True)
class CostBreakdown:
    cross_entropy: float  # summed over examples, nats
    l2_penalty: float
    total: float


def init_logreg(d: int, n_classes: int = 2) -> ModelState:
    """Logistic regression at the zero vector (uniform predictions)."""
    if n_classes != 2:
        raise ValueError("logistic regression here is two-class")
    return ModelState("logreg", np.zeros(d + 1), d, 2)


def init_mlp(d: int, h: int, n: int, seed) -> ModelState:
    """Shallow net init: weights ~ Normal(0, 1/fan_in), biases zero."""
    if h < 1:
        raise ValueError("need h >= 1")
    rng = seed if isinstance(seed, RngStream) else RngStream(seed)
    w1 = rng.normal((d, h)) / np.sqrt(d)
    w2 = rng.normal((h, n)) / np.sqrt(h)
    params = np.concatenate([w1.ravel(), np.zeros(h), w2.ravel(), np.zeros(n)])
    return ModelState("mlp", params, d, n, h)


def _unpack_logreg(m: ModelState):
    return m.params[: m.d], m.params[m.d]


def _unpack_mlp(m: ModelState):
    d, h, n = m.d, m.h, m.n_classes
    i0 = d * h
    i1 = i0 + h
    i2 = i1 + h * n
    w1 = m.params[:i0].reshape(d, h)
    b1 = m.params[i0:i1]
    w2 = m.params[i1:i2].reshape(h, n)
    b2 = m.params[i2:]
    return w1, b1, w2, b2


def _check_shapes(model: ModelState, ds: Dataset):
    if ds.d != model.d:
        raise ValueError(f"dataset d={ds.d} != model d={model.d}")
    if ds.n_classes != model.n_classes:
        raise ValueError(f"dataset n={ds.n_classes} != model n={model.n_classes}")


def lambda_vector(model: ModelState, lam, regularize_bias: bool = True) -> np.ndarray:
    """Expand a scalar or per-parameter regularizer to a full-length vector."""
    lam = np.asarray(lam, dtype=np.float64)
    if lam.ndim == 0:
        vec = np.full(model.p, float(lam))
    elif lam.shape == (model.p,):
        vec = lam.copy()
    else:
        raise ValueError(f"lambda must be scalar or length-{model.p} vector")
    if np.any(vec < 0):
        raise ValueError("lambda must be >= 0")
    if not regularize_bias:
        vec[_bias_mask(model)] = 0.0
    return vec


def _bias_mask(model: ModelState) -> np.ndarray:
    mask = np.zeros(model.p, dtype=bool)
    if model.kind == "logreg":
        mask[model.d] = True
    else:
        d, h, n = model.d, model.h, model.n_classes
        mask[d * h : d * h + h] = True
        mask[(d + 1) * h + h * n :] = True
    return mask


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def _logreg_logits(model: ModelState, x: np.ndarray) -> np.ndarray:
    w, b = _unpack_logreg(model)
    return x @ w + b


def _mlp_forward(model: ModelState, x: np.ndarray):
    w1, b1, w2, b2 = _unpack_mlp(model)
    z1 = x @ w1 + b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ w2 + b2
    return z1, a1, z2


def _softmax_and_xent(z2: np.ndarray, labels: np.ndarray):
    m = z2.max(axis=1, keepdims=True)
    shifted = z2 - m
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True)) + m
    probs = np.exp(z2 - lse)
    xent = lse[:, 0] - z2[np.arange(z2.shape[0]), labels]
    return probs, xent


def cost(model: ModelState, ds: Dataset, lam, regularize_bias: bool = True) -> CostBreakdown:
    """Summed cross-entropy plus L2 penalty."""
    _check_shapes(model, ds)
    lam_vec = lambda_vector(model, lam, regularize_bias)
    if model.kind == "logreg":
        z = _logreg_logits(model, ds.inputs)
        # -ln P(y) = softplus(z) - y*z, stable for any z
        xent = float(np.sum(_softplus(z) - ds.labels * z))
    else:
        _, _, z2 = _mlp_forward(model, ds.inputs)
        _, per = _softmax_and_xent(z2, ds.labels)
        xent = float(np.sum(per))
    penalty = 0.5 * float(np.sum(lam_vec * model.params**2))
    return CostBreakdown(xent, penalty, xent + penalty)


def grad(model: ModelState, ds: Dataset, lam, regularize_bias: bool = True) -> np.ndarray:
    """Gradient of the summed cost: sum of per-example gradients + lam*params."""
    _check_shapes(model, ds)
    lam_vec = lambda_vector(model, lam, regularize_bias)
    if model.kind == "logreg":
        z = _logreg_logits(model, ds.inputs)
        r = _sigmoid(z) - ds.labels  # dC_i/dz_i
        g = np.concatenate([ds.inputs.T @ r, [r.sum()]])
    else:
        z1, a1, z2 = _mlp_forward(model, ds.inputs)
        probs, _ = _softmax_and_xent(z2, ds.labels)
        delta2 = probs.copy()
        delta2[np.arange(ds.n), ds.labels] -= 1.0
        delta1 = (delta2 @ _unpack_mlp(model)[2].T) * (z1 > 0.0)
        g = np.concatenate(
            [
                (ds.inputs.T @ delta1).ravel(),
                delta1.sum(axis=0),
                (a1.T @ delta2).ravel(),
                delta2.sum(axis=0),
            ]
        )
    return g + lam_vec * model.params


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def per_example_grads(model: ModelState, ds: Dataset) -> np.ndarray:
    """N x p matrix of per-example cost gradients (no penalty term).

    Row sums plus ``lam*params`` reproduce :func:`grad` exactly; the penalty
    belongs to the summed cost, not to any single example.
    """
    _check_shapes(model, ds)
    if model.kind == "logreg":
        z = _logreg_logits(model, ds.inputs)
        r = _sigmoid(z) - ds.labels
        return np.hstack([r[:, None] * ds.inputs, r[:, None]])
    z1, a1, z2 = _mlp_forward(model, ds.inputs)
    probs, _ = _softmax_and_xent(z2, ds.labels)
    delta2 = probs
    delta2[np.arange(ds.n), ds.labels] -= 1.0
    delta1 = (delta2 @ _unpack_mlp(model)[2].T) * (z1 > 0.0)
    return np.hstack(
        [
            np.einsum("ia,ib->iab", ds.inputs, delta1).reshape(ds.n, -1),
            delta1,
            np.einsum("ia,ib->iab", a1, delta2).reshape(ds.n, -1),
            delta2,
        ]
    )


def per_example_grad_component(model: ModelState, ds: Dataset, index: int) -> np.ndarray:
    """Per-example gradient of one coordinate, without materializing N x p.

    Needed at MLP scale where the full per-example gradient matrix would not
    fit in memory.
    """
    _check_shapes(model, ds)
    index = int(index)
    if not 0 <= index < model.p:
        raise ValueError(f"index {index} outside [0, {model.p})")
    if model.kind == "logreg":
        z = _logreg_logits(model, ds.inputs)
        r = _sigmoid(z) - ds.labels
        return r * ds.inputs[:, index] if index < model.d else r.copy()
    d, h, n = model.d, model.h, model.n_classes
    z1, a1, z2 = _mlp_forward(model, ds.inputs)
    probs, _ = _softmax_and_xent(z2, ds.labels)
    delta2 = probs
    delta2[np.arange(ds.n), ds.labels] -= 1.0
    i0, i1, i2 = d * h, d * h + h, (d + 1) * h + h * n
    if index < i0:
        delta1 = (delta2 @ _unpack_mlp(model)[2].T) * (z1 > 0.0)
        a, b = divmod(index, h)
        return ds.inputs[:, a] * delta1[:, b]
    if index < i1:
        delta1 = (delta2 @ _unpack_mlp(model)[2].T) * (z1 > 0.0)
        return delta1[:, index - i0].copy()
    if index < i2:
        a, b = divmod(index - i1, n)
        return a1[:, a] * delta2[:, b]
    return delta2[:, index - i2].copy()


def logreg_hessian(model: ModelState, ds: Dataset, lam, regularize_bias: bool = True) -> np.ndarray:
    """Analytic Hessian of the regularized logistic cost.

    ``H = Xb.T @ diag(s*(1-s)) @ Xb + diag(lam)`` with ``Xb`` the inputs plus
    appended constant column.  Raises for the mlp (its Hessian is out of scope).
    """
    _check_shapes(model, ds)
    if model.kind != "logreg":
        raise ValueError("analytic Hessian is only available for logreg")
    lam_vec = lambda_vector(model, lam, regularize_bias)
    s = _sigmoid(_logreg_logits(model, ds.inputs))
    weights = s * (1.0 - s)
    xb = np.hstack([ds.inputs, np.ones((ds.n, 1))])
    h = (xb * weights[:, None]).T @ xb
    h[np.diag_indices_from(h)] += lam_vec
    return h


def mean_margin(model: ModelState, ds: Dataset) -> float:
    """Mean signed distance to the decision boundary, positive when correct:
    ``mean_i (2*y_i - 1) * (w.x_i + b) / ||w||``."""
    _check_shapes(model, ds)
    if model.kind != "logreg" or model.n_classes != 2:
        raise ValueError("margin is defined for two-class logistic regression")
    w, _ = _unpack_logreg(model)
    norm = float(np.linalg.norm(w))
    if norm == 0.0:
        raise ValueError("margin undefined for a zero weight vector")
    z = _logreg_logits(model, ds.inputs)
    return float(np.mean((2.0 * ds.labels - 1.0) * z) / norm)


def predict_and_accuracy(model: ModelState, ds: Dataset) -> tuple[np.ndarray, float]:
    """Per-example class probabilities (rows sum to 1) and argmax accuracy.

    Argmax ties resolve toward the smaller class index.
    """
    _check_shapes(model, ds)
    if model.kind == "logreg":
        p1 = _sigmoid(_logreg_logits(model, ds.inputs))
        probs = np.column_stack([1.0 - p1, p1])
    else:
        _, _, z2 = _mlp_forward(model, ds.inputs)
        probs, _ = _softmax_and_xent(z2, ds.labels)
    predictions = np.argmax(probs, axis=1)  # first max wins: smaller index on ties
    accuracy = float(np.mean(predictions == ds.labels))
    return probs, accuracy


def mean_xent(model: ModelState, ds: Dataset) -> float:
    """Per-example mean cross-entropy in nats (test-set-size independent)."""
    return cost(model, ds, 0.0).cross_entropy / ds.n


# ---------------------------------------------------------------------------
# Checkpoints: JSON record {kind, d, h, n_classes, params_b64}
# where params_b64 is base64 of the little-endian float64 parameter vector.
# ---------------------------------------------------------------------------


def save_model(model: ModelState, path) -> None:
    record = {
        "kind": model.kind,
        "d": model.d,
        "h": model.h,
        "n_classes": model.n_classes,
        "params_b64": base64.b64encode(
            np.ascontiguousarray(model.params, dtype="<f8").tobytes()
        ).decode("ascii"),
    }
    Path(path).write_text(json.dumps(record))


def load_model(path) -> ModelState:
    record = json.loads(Path(path).read_text())
    params = np.frombuffer(
        base64.b64decode(record["params_b64"]), dtype="<f8"
    ).astype(np.float64)
    return ModelState(
        record["kind"], params, record["d"], record["n_classes"], record["h"]
    )
