"""Model tests: analytic gradients/Hessians against finite differences,
cost values, margins, prediction contracts, initialization statistics."""

import numpy as np
import pytest

from sgdlab import optim
from sgdlab.data import Dataset, synthetic_logreg_problem, synthetic_mnist
from sgdlab.models import (
    ModelState,
    cost,
    grad,
    init_logreg,
    init_mlp,
    lambda_vector,
    load_model,
    logreg_hessian,
    mean_margin,
    per_example_grad_component,
    per_example_grads,
    predict_and_accuracy,
    save_model,
)
from sgdlab.numkit import RngStream, sym_eig


def random_state(kind: str, rng: np.random.Generator, d=4, h=3, n=3) -> ModelState:
    if kind == "logreg":
        return ModelState("logreg", rng.standard_normal(d + 1), d, 2)
    p = (d + 1) * h + (h + 1) * n
    return ModelState("mlp", 0.5 * rng.standard_normal(p), d, n, h)


def random_dataset(rng: np.random.Generator, n_examples=12, d=4, n_classes=2) -> Dataset:
    x = rng.standard_normal((n_examples, d))
    y = rng.integers(0, n_classes, n_examples)
    return Dataset(x, y, n_classes)


def finite_difference_grad(state: ModelState, ds, lam, coords, step=1e-5):
    out = {}
    for j in coords:
        for sign in (+1, -1):
            params = state.params.copy()
            params[j] += sign * step
            value = cost(state.with_params(params), ds, lam).total
            out[j] = out.get(j, 0.0) + sign * value / (2 * step)
    return out


# -----------------------------------------------------------------------
# cost
# -----------------------------------------------------------------------


class TestCost:
    def test_logreg_zero_params_uniform(self):
        rng = np.random.default_rng(0)
        ds = random_dataset(rng, 800, d=6)
        breakdown = cost(init_logreg(6), ds, 0.0)
        assert breakdown.cross_entropy == pytest.approx(800 * np.log(2), rel=1e-12)
        assert breakdown.l2_penalty == 0.0

    def test_mlp_zero_params_uniform(self):
        rng = np.random.default_rng(1)
        x = rng.random((1000, 5))
        y = rng.integers(0, 10, 1000)
        ds = Dataset(x, y, 10)
        state = ModelState("mlp", np.zeros((5 + 1) * 4 + (4 + 1) * 10), 5, 10, 4)
        breakdown = cost(state, ds, 0.0)
        assert breakdown.cross_entropy == pytest.approx(1000 * np.log(10), rel=1e-12)

    def test_penalty_half_lambda_omega_squared(self):
        ds = Dataset(np.zeros((2, 1)), np.array([0, 1]), 2)
        state = ModelState("logreg", np.array([3.0, 4.0]), 1, 2)
        breakdown = cost(state, ds, 2.0)
        assert breakdown.l2_penalty == pytest.approx(25.0, rel=1e-14)
        assert breakdown.total == pytest.approx(
            breakdown.cross_entropy + breakdown.l2_penalty, rel=1e-14
        )

    def test_lambda_vector_form(self):
        ds = Dataset(np.zeros((2, 1)), np.array([0, 1]), 2)
        state = ModelState("logreg", np.array([3.0, 4.0]), 1, 2)
        lam = np.array([2.0, 0.0])
        assert cost(state, ds, lam).l2_penalty == pytest.approx(9.0)

    def test_shape_mismatch(self):
        ds = Dataset(np.zeros((2, 3)), np.array([0, 1]), 2)
        with pytest.raises(ValueError):
            cost(init_logreg(4), ds, 0.0)

    def test_convexity_of_logreg_cost(self):
        rng = np.random.default_rng(5)
        ds = random_dataset(rng, 40, d=6)
        for _ in range(25):
            a = random_state("logreg", rng, d=6)
            b = random_state("logreg", rng, d=6)
            t = rng.uniform(0.05, 0.95)
            mix = a.with_params(t * a.params + (1 - t) * b.params)
            lhs = cost(mix, ds, 0.7).total
            rhs = t * cost(a, ds, 0.7).total + (1 - t) * cost(b, ds, 0.7).total
            assert lhs <= rhs + 1e-10


# -----------------------------------------------------------------------
# gradients
# -----------------------------------------------------------------------


class TestGrad:
    @pytest.mark.parametrize("kind", ["logreg", "mlp"])
    def test_matches_finite_differences(self, kind):
        rng = np.random.default_rng(7)
        for trial in range(5):
            n_classes = 2 if kind == "logreg" else 3
            ds = random_dataset(rng, 15, d=4, n_classes=n_classes)
            state = random_state(kind, rng, d=4)
            lam = 0.3
            g = grad(state, ds, lam)
            coords = rng.choice(state.p, size=min(20, state.p), replace=False)
            fd = finite_difference_grad(state, ds, lam, coords)
            for j, fd_j in fd.items():
                denom = max(abs(fd_j), 1.0)
                assert abs(g[j] - fd_j) / denom <= 1e-5

    @pytest.mark.parametrize("kind", ["logreg", "mlp"])
    def test_per_example_rows_sum_to_grad(self, kind):
        rng = np.random.default_rng(11)
        n_classes = 2 if kind == "logreg" else 3
        ds = random_dataset(rng, 10, d=4, n_classes=n_classes)
        state = random_state(kind, rng, d=4)
        lam = 0.5
        rows = per_example_grads(state, ds)
        assert rows.shape == (10, state.p)
        total = rows.sum(axis=0) + lambda_vector(state, lam) * state.params
        g = grad(state, ds, lam)
        np.testing.assert_allclose(total, g, rtol=1e-10, atol=1e-12)

    @pytest.mark.parametrize("kind", ["logreg", "mlp"])
    def test_per_example_grad_component(self, kind):
        rng = np.random.default_rng(13)
        n_classes = 2 if kind == "logreg" else 3
        ds = random_dataset(rng, 9, d=4, n_classes=n_classes)
        state = random_state(kind, rng, d=4)
        rows = per_example_grads(state, ds)
        for j in rng.choice(state.p, size=min(12, state.p), replace=False):
            np.testing.assert_allclose(
                per_example_grad_component(state, ds, int(j)), rows[:, j],
                rtol=1e-12, atol=1e-14,
            )

    def test_duplicated_dataset_doubles_gradient(self):
        rng = np.random.default_rng(17)
        ds = random_dataset(rng, 8, d=3)
        doubled = Dataset(
            np.vstack([ds.inputs, ds.inputs]),
            np.concatenate([ds.labels, ds.labels]),
            2,
        )
        state = random_state("logreg", rng, d=3)
        # equality up to summation-order rounding (different reduction trees)
        np.testing.assert_allclose(
            grad(state, doubled, 0.0), 2.0 * grad(state, ds, 0.0), rtol=1e-14
        )

    def test_symmetric_means_zero_weight_gradient(self):
        # Balanced classes with equal class-conditional input means: at
        # omega = 0 the residuals +-1/2 cancel featurewise.
        x = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
        y = np.array([0, 1, 0, 1])
        ds = Dataset(x, y, 2)
        g = grad(init_logreg(2), ds, 0.0)
        np.testing.assert_allclose(g, 0.0, atol=1e-14)


# -----------------------------------------------------------------------
# Hessian
# -----------------------------------------------------------------------


class TestLogregHessian:
    def test_zero_params_quarter_gram(self):
        rng = np.random.default_rng(19)
        ds = random_dataset(rng, 12, d=3)
        lam = 0.8
        h = logreg_hessian(init_logreg(3), ds, lam)
        xb = np.hstack([ds.inputs, np.ones((12, 1))])
        np.testing.assert_allclose(h, 0.25 * xb.T @ xb + lam * np.eye(4), rtol=1e-12)

    def test_matches_finite_difference_of_gradient(self):
        rng = np.random.default_rng(23)
        ds = random_dataset(rng, 20, d=2)  # 3 parameters
        state = random_state("logreg", rng, d=2)
        lam = 0.4
        h = logreg_hessian(state, ds, lam)
        step = 1e-6
        for j in range(3):
            plus, minus = state.params.copy(), state.params.copy()
            plus[j] += step
            minus[j] -= step
            fd_col = (
                grad(state.with_params(plus), ds, lam)
                - grad(state.with_params(minus), ds, lam)
            ) / (2 * step)
            np.testing.assert_allclose(h[:, j], fd_col, rtol=1e-4, atol=1e-8)

    def test_lambda_shift_moves_eigenvalues_exactly(self):
        rng = np.random.default_rng(29)
        ds = random_dataset(rng, 15, d=3)
        state = random_state("logreg", rng, d=3)
        base, _ = sym_eig(logreg_hessian(state, ds, 0.5))
        shifted, _ = sym_eig(logreg_hessian(state, ds, 0.5 + 2.25))
        np.testing.assert_allclose(shifted, base + 2.25, rtol=1e-11, atol=1e-11)

    def test_rejected_for_mlp(self):
        rng = np.random.default_rng(31)
        ds = random_dataset(rng, 5, d=4, n_classes=3)
        with pytest.raises(ValueError):
            logreg_hessian(random_state("mlp", rng, d=4), ds, 0.1)


# -----------------------------------------------------------------------
# margin / prediction
# -----------------------------------------------------------------------


class TestMarginAndPredict:
    def test_unit_margin(self):
        ds = Dataset(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([1, 0]), 2)
        state = ModelState("logreg", np.array([1.0, 0.0, 0.0]), 2, 2)
        assert mean_margin(state, ds) == pytest.approx(1.0, rel=1e-14)

    def test_scale_invariance(self):
        rng = np.random.default_rng(37)
        ds = random_dataset(rng, 30, d=4)
        state = random_state("logreg", rng, d=4)
        base = mean_margin(state, ds)
        for c in (0.01, 7.0, 1234.5):
            scaled = state.with_params(c * state.params)
            assert mean_margin(scaled, ds) == pytest.approx(base, rel=1e-10)

    def test_zero_weights_error(self):
        ds = Dataset(np.ones((2, 2)), np.array([0, 1]), 2)
        state = ModelState("logreg", np.array([0.0, 0.0, 3.0]), 2, 2)
        with pytest.raises(ValueError):
            mean_margin(state, ds)

    def test_zero_logreg_predicts_half(self):
        rng = np.random.default_rng(41)
        ds = random_dataset(rng, 50, d=3)
        probs, acc = predict_and_accuracy(init_logreg(3), ds)
        np.testing.assert_allclose(probs, 0.5, atol=1e-15)
        # ties break toward class 0
        assert acc == pytest.approx(np.mean(ds.labels == 0))

    def test_zero_mlp_uniform_rows(self):
        rng = np.random.default_rng(43)
        x = rng.random((20, 4))
        ds = Dataset(x, rng.integers(0, 10, 20), 10)
        state = ModelState("mlp", np.zeros((4 + 1) * 3 + (3 + 1) * 10), 4, 10, 3)
        probs, _ = predict_and_accuracy(state, ds)
        np.testing.assert_allclose(probs, 0.1, atol=1e-15)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(47)
        ds = random_dataset(rng, 25, d=4, n_classes=3)
        state = random_state("mlp", rng, d=4)
        probs, _ = predict_and_accuracy(state, ds)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_xent_equals_minus_log_true_prob(self):
        rng = np.random.default_rng(53)
        ds = random_dataset(rng, 25, d=4, n_classes=3)
        state = random_state("mlp", rng, d=4)
        probs, _ = predict_and_accuracy(state, ds)
        manual = -np.log(probs[np.arange(25), ds.labels]).sum()
        assert cost(state, ds, 0.0).cross_entropy == pytest.approx(manual, rel=1e-10)

    def test_trained_separable_reaches_one(self):
        ds = synthetic_logreg_problem(120, 3, separation=8.0, seed=2)
        fitted = optim.minimize_full_batch(init_logreg(3), ds, 1e-2)
        _, acc = predict_and_accuracy(fitted, ds)
        assert acc == 1.0


# -----------------------------------------------------------------------
# init / checkpoints
# -----------------------------------------------------------------------


class TestInitAndCheckpoint:
    def test_parameter_count_full_scale(self):
        state = init_mlp(784, 800, 10, seed=0)
        assert state.p == 636_010

    def test_deterministic(self):
        np.testing.assert_array_equal(
            init_mlp(20, 8, 10, seed=3).params, init_mlp(20, 8, 10, seed=3).params
        )

    def test_first_layer_variance(self):
        state = init_mlp(784, 800, 10, seed=1)
        w1 = state.params[: 784 * 800]
        assert 0.9 / 784 <= w1.var() <= 1.1 / 784

    def test_biases_zero(self):
        state = init_mlp(6, 4, 10, seed=0)
        d, h, n = 6, 4, 10
        assert np.all(state.params[d * h : d * h + h] == 0.0)
        assert np.all(state.params[(d + 1) * h + h * n :] == 0.0)

    def test_checkpoint_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(59)
        state = random_state("mlp", rng, d=5)
        path = tmp_path / "model.json"
        save_model(state, path)
        loaded = load_model(path)
        assert loaded.kind == state.kind and loaded.h == state.h
        np.testing.assert_array_equal(loaded.params, state.params)

    def test_rng_stream_accepted(self):
        a = init_mlp(6, 4, 3, RngStream(11))
        b = init_mlp(6, 4, 3, RngStream(11))
        np.testing.assert_array_equal(a.params, b.params)
