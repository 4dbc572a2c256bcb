import numpy as np
import pytest

from rail.nn import (
    AdamState,
    CheckpointError,
    ContractError,
    MlpGrads,
    MlpParams,
    NonFiniteError,
    ShapeError,
    adam_step,
    finite_diff_grad,
    init_mlp,
    load_mlp,
    mlp_backward,
    mlp_forward,
    mlp_input_grads,
    save_mlp,
)


def scalar_loop_forward(params, x):
    """Independent oracle: evaluate the network one neuron at a time."""
    a = list(x)
    n = params.n_layers
    for i in range(n):
        w, b = params.weights[i], params.biases[i]
        z = []
        for r in range(w.shape[0]):
            s = b[r]
            for c in range(w.shape[1]):
                s += w[r, c] * a[c]
            z.append(s)
        if i < n - 1 or params.output_activation == "tanh":
            a = [np.tanh(v) for v in z]
        else:
            a = z
    return np.array(a)


def rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8))


def grads_rel_err(g1: MlpGrads, g2: MlpGrads) -> float:
    worst = 0.0
    for a, b in zip(g1.weights + g1.biases, g2.weights + g2.biases):
        worst = max(worst, rel_err(a, b))
    return worst


class TestForward:
    def test_zero_network_outputs_zero(self):
        rng = np.random.default_rng(0)
        params = init_mlp((3, 4, 4, 2), rng)
        params = MlpParams(
            params.layer_sizes,
            [np.zeros_like(w) for w in params.weights],
            [np.zeros_like(b) for b in params.biases],
        )
        y, _ = mlp_forward(params, rng.normal(size=(5, 3)))
        assert np.all(y == 0.0)

    def test_unit_chain_tanh_of_zero(self):
        params = MlpParams(
            (1, 1, 1, 1),
            [np.ones((1, 1)) for _ in range(3)],
            [np.zeros(1) for _ in range(3)],
            output_activation="tanh",
        )
        y, _ = mlp_forward(params, np.zeros((1, 1)))
        assert y[0, 0] == 0.0

    def test_matches_scalar_loop_oracle(self):
        rng = np.random.default_rng(42)
        params = init_mlp((3, 8, 8, 2), rng)
        x = rng.normal(size=3)
        y, _ = mlp_forward(params, x[None, :])
        expected = scalar_loop_forward(params, x)
        np.testing.assert_allclose(y[0], expected, rtol=1e-12, atol=1e-12)

    def test_forward_deterministic_bitwise(self):
        rng = np.random.default_rng(7)
        params = init_mlp((4, 16, 16, 3), rng)
        x = rng.normal(size=(6, 4))
        y1, _ = mlp_forward(params, x)
        y2, _ = mlp_forward(params, x)
        assert np.array_equal(y1, y2)

    def test_dim_mismatch_names_layer(self):
        params = init_mlp((3, 4, 2), np.random.default_rng(0))
        with pytest.raises(ShapeError, match="layer 0"):
            mlp_forward(params, np.zeros((2, 5)))

    def test_empty_batch_rejected(self):
        params = init_mlp((3, 4, 2), np.random.default_rng(0))
        with pytest.raises(ShapeError):
            mlp_forward(params, np.zeros((0, 3)))


class TestBackward:
    def test_zero_upstream_grads_are_zero(self):
        rng = np.random.default_rng(1)
        params = init_mlp((4, 8, 8, 2), rng)
        _, cache = mlp_forward(params, rng.normal(size=(3, 4)))
        grads, gx = mlp_backward(params, cache, np.zeros((3, 2)))
        assert all(np.all(w == 0) for w in grads.weights)
        assert all(np.all(b == 0) for b in grads.biases)
        assert np.all(gx == 0)

    def test_scalar_linear_product_rule(self):
        # y = w*x + b, upstream g: grad_w = x*g, grad_x = w*g
        params = MlpParams((1, 1), [np.array([[3.0]])], [np.array([0.5])])
        x = np.array([[2.0]])
        _, cache = mlp_forward(params, x)
        g = np.array([[1.5]])
        grads, gx = mlp_backward(params, cache, g)
        assert grads.weights[0][0, 0] == pytest.approx(2.0 * 1.5)
        assert grads.biases[0][0] == pytest.approx(1.5)
        assert gx[0, 0] == pytest.approx(3.0 * 1.5)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        params = init_mlp((4, 16, 16, 3), rng)
        x = rng.normal(size=(5, 4))
        g_y = rng.normal(size=(5, 3))

        def loss(p):
            y, _ = mlp_forward(p, x)
            return float(np.sum(y * g_y))

        _, cache = mlp_forward(params, x)
        analytic, _ = mlp_backward(params, cache, g_y)
        numeric = finite_diff_grad(loss, params, 1e-5)
        assert grads_rel_err(analytic, numeric) < 1e-4

    def test_tanh_output_head_grads(self):
        rng = np.random.default_rng(9)
        params = init_mlp((3, 8, 2), rng, output_activation="tanh")
        x = rng.normal(size=(4, 3))
        g_y = rng.normal(size=(4, 2))

        def loss(p):
            y, _ = mlp_forward(p, x)
            return float(np.sum(y * g_y))

        _, cache = mlp_forward(params, x)
        analytic, _ = mlp_backward(params, cache, g_y)
        numeric = finite_diff_grad(loss, params, 1e-5)
        assert grads_rel_err(analytic, numeric) < 1e-4

    def test_input_grads_match_finite_differences(self):
        rng = np.random.default_rng(4)
        params = init_mlp((5, 8, 8, 1), rng)
        x = rng.normal(size=(1, 5))
        _, cache = mlp_forward(params, x)
        g = mlp_input_grads(params, cache)
        step = 1e-6
        for j in range(5):
            hi = x.copy()
            hi[0, j] += step
            lo = x.copy()
            lo[0, j] -= step
            num = (mlp_forward(params, hi)[0] - mlp_forward(params, lo)[0]) / (2 * step)
            assert g[0, j] == pytest.approx(float(num[0, 0]), rel=1e-5, abs=1e-8)

    def test_stale_cache_rejected(self):
        rng = np.random.default_rng(5)
        params = init_mlp((3, 4, 1), rng)
        _, cache = mlp_forward(params, rng.normal(size=(2, 3)))
        other = params.copy()
        with pytest.raises(ContractError):
            mlp_backward(other, cache, np.ones((2, 1)))

    def test_shape_closure(self):
        rng = np.random.default_rng(6)
        for sizes in [(2, 3, 1), (4, 8, 8, 2), (1, 16, 16, 1)]:
            params = init_mlp(sizes, rng)
            _, cache = mlp_forward(params, rng.normal(size=(3, sizes[0])))
            grads, gx = mlp_backward(params, cache, rng.normal(size=(3, sizes[-1])))
            for w, gw in zip(params.weights, grads.weights):
                assert w.shape == gw.shape
            for b, gb in zip(params.biases, grads.biases):
                assert b.shape == gb.shape
            assert gx.shape == (3, sizes[0])


class TestGradientSuite:
    def test_twenty_random_networks(self):
        # widths <= 16, two hidden layers, random linear losses
        rng = np.random.default_rng(2024)
        for trial in range(20):
            n_in = int(rng.integers(1, 6))
            h1 = int(rng.integers(2, 17))
            h2 = int(rng.integers(2, 17))
            n_out = int(rng.integers(1, 4))
            out_act = "identity" if trial % 2 == 0 else "tanh"
            params = init_mlp((n_in, h1, h2, n_out), rng, output_activation=out_act)
            x = rng.normal(size=(4, n_in))
            g_y = rng.normal(size=(4, n_out))

            def loss(p):
                y, _ = mlp_forward(p, x)
                return float(np.sum(y * g_y))

            _, cache = mlp_forward(params, x)
            analytic, _ = mlp_backward(params, cache, g_y)
            numeric = finite_diff_grad(loss, params, 1e-5)
            assert grads_rel_err(analytic, numeric) < 1e-4, f"trial {trial}"


class TestAdam:
    def test_zero_gradient_is_identity(self):
        rng = np.random.default_rng(10)
        params = init_mlp((2, 4, 1), rng)
        state = AdamState.for_params(params, 1e-3)
        new_params, new_state = adam_step(params, MlpGrads.zeros_like(params), state)
        for a, b in zip(params.weights, new_params.weights):
            assert np.array_equal(a, b)
        assert new_state.step_count == 1

    def test_first_step_closed_form(self):
        # From zero moments: delta = lr * g / (|g| + eps * sqrt(1 - beta2))
        params = MlpParams((1, 1), [np.array([[0.7]])], [np.array([0.0])])
        lr = 0.01
        state = AdamState.for_params(params, lr)
        g = 3.0
        grads = MlpGrads([np.array([[g]])], [np.array([0.0])])
        new_params, _ = adam_step(params, grads, state)
        # m_hat = g, v_hat = g^2, so step = lr * g / (|g| + eps)
        expected = 0.7 - lr * g / (abs(g) + state.epsilon)
        assert new_params.weights[0][0, 0] == pytest.approx(expected, abs=1e-12)
        assert abs((0.7 - new_params.weights[0][0, 0]) - lr) < 1e-6

    def test_deterministic(self):
        rng = np.random.default_rng(11)
        params = init_mlp((3, 8, 2), rng)
        state = AdamState.for_params(params, 1e-3)
        grads = MlpGrads(
            [rng.normal(size=w.shape) for w in params.weights],
            [rng.normal(size=b.shape) for b in params.biases],
        )
        p1, s1 = adam_step(params, grads, state)
        p2, s2 = adam_step(params, grads, state)
        for a, b in zip(p1.weights, p2.weights):
            assert np.array_equal(a, b)
        assert s1.step_count == s2.step_count == 1

    def test_non_finite_gradients_rejected(self):
        rng = np.random.default_rng(12)
        params = init_mlp((2, 4, 1), rng)
        state = AdamState.for_params(params, 1e-3)
        grads = MlpGrads.zeros_like(params)
        grads.weights[0][0, 0] = np.nan
        with pytest.raises(NonFiniteError, match="layer"):
            adam_step(params, grads, state)


class TestFiniteDiff:
    def test_constant_function(self):
        params = init_mlp((2, 3, 1), np.random.default_rng(13))
        grads = finite_diff_grad(lambda p: 1.25, params, 1e-5)
        assert all(np.all(w == 0) for w in grads.weights)

    def test_sum_of_squares(self):
        params = init_mlp((2, 3, 1), np.random.default_rng(14))

        def f(p):
            return sum(float(np.sum(w**2)) for w in p.weights) + sum(
                float(np.sum(b**2)) for b in p.biases
            )

        grads = finite_diff_grad(f, params, 1e-6)
        for w, gw in zip(params.weights, grads.weights):
            np.testing.assert_allclose(gw, 2 * w, rtol=1e-6, atol=1e-9)

    def test_non_finite_f_names_parameter(self):
        params = init_mlp((1, 2, 1), np.random.default_rng(15))

        def f(p):
            return float("nan")

        with pytest.raises(NonFiniteError, match="layer 0"):
            finite_diff_grad(f, params, 1e-5)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(16)
        params = init_mlp((3, 16, 16, 2), rng, output_activation="tanh")
        path = tmp_path / "net.mlp"
        save_mlp(params, path)
        loaded = load_mlp(path)
        assert loaded.layer_sizes == params.layer_sizes
        assert loaded.output_activation == params.output_activation
        for a, b in zip(params.weights, loaded.weights):
            assert np.array_equal(a, b)
        for a, b in zip(params.biases, loaded.biases):
            assert np.array_equal(a, b)

    def test_truncated_file_rejected(self, tmp_path):
        rng = np.random.default_rng(17)
        params = init_mlp((3, 4, 1), rng)
        path = tmp_path / "net.mlp"
        save_mlp(params, path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-5])
        with pytest.raises(CheckpointError):
            load_mlp(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.mlp"
        path.write_bytes(b"NOTANMLP" + b"\x00" * 64)
        with pytest.raises(CheckpointError, match="magic"):
            load_mlp(path)
