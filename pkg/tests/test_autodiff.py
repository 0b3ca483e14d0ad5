import json

import numpy as np
import pytest

from ganland.autodiff import (
    ContractError,
    DimensionError,
    Mlp,
    MlpGraph,
    Tape,
    backward,
    forward,
    grad_penalty_grads,
    init_mlp,
    input_grad,
    load_checkpoint,
    param_grads,
    save_checkpoint,
    trace_forward,
)

from helpers import (
    fd_input_grad,
    fd_param_grads,
    max_rel_err,
    relu_preactivations_safe,
    scalar_forward,
)


def small_net(seed, dims=(2, 20, 20, 1), **kw):
    return init_mlp(list(dims), seed, **kw)


class TestForward:
    def test_zero_weights_broadcast_bias(self):
        net = Mlp([3, 2], [np.zeros((2, 3))], [np.array([1.5, -2.0])])
        out = forward(net, np.random.default_rng(0).normal(size=(5, 3)))
        assert np.array_equal(out, np.tile([1.5, -2.0], (5, 1)))

    def test_single_linear_layer(self):
        w = np.array([[1.0, 2.0], [3.0, 4.0]])
        b = np.array([0.5, -0.5])
        net = Mlp([2, 2], [w], [b])
        z = np.array([[1.0, -1.0]])
        assert np.allclose(forward(net, z), z @ w.T + b, atol=0)

    def test_matches_scalar_loop_oracle(self):
        net = small_net(3, dims=(2, 20, 20, 2))
        batch = np.random.default_rng(4).normal(size=(8, 2))
        fast = forward(net, batch)
        slow = scalar_forward(net, batch)
        assert np.abs(fast - slow).max() < 1e-12

    def test_scalar_loop_oracle_tanh_and_leaky(self):
        net = small_net(
            5, dims=(3, 7, 1), hidden_activation="leaky_relu",
            output_activation="tanh",
        )
        batch = np.random.default_rng(6).normal(size=(5, 3))
        assert np.abs(forward(net, batch) - scalar_forward(net, batch)).max() < 1e-12

    def test_shape_mismatch_raises(self):
        net = small_net(0)
        with pytest.raises(DimensionError):
            forward(net, np.zeros((4, 3)))

    def test_nonfinite_input_raises(self):
        net = small_net(0)
        with pytest.raises(FloatingPointError):
            forward(net, np.array([[np.nan, 0.0]]))


class TestParamGrads:
    def test_linear_loss_grad_is_input_sum(self):
        # loss = sum(W z) over a batch: dL/dW[i, j] = sum_n z[n, j]
        w = np.array([[0.3, -0.2], [0.1, 0.5]])
        net = Mlp([2, 2], [w], [np.zeros(2)])
        batch = np.array([[1.0, 2.0], [3.0, -1.0]])
        graph = trace_forward(net, batch)
        loss = graph.tape.reduce_sum(graph.output_id, None)
        grads = param_grads(graph, loss)
        expected = np.tile(batch.sum(axis=0), (2, 1))
        assert np.array_equal(grads[0][0], expected)
        assert np.array_equal(grads[0][1], np.full(2, 2.0))

    def test_matches_finite_differences(self):
        net = small_net(11, dims=(3, 8, 6, 2))
        batch = np.random.default_rng(2).normal(size=(4, 3))

        def loss_fn(m):
            return float((forward(m, batch) ** 2).sum())

        graph = trace_forward(net, batch)
        sq = graph.tape.mul(graph.output_id, graph.output_id)
        loss = graph.tape.reduce_sum(sq, None)
        got = param_grads(graph, loss)
        want = fd_param_grads(loss_fn, net)
        for (gw, gb), (fw, fb) in zip(got, want):
            assert max_rel_err(gw, fw, floor=1e-6) < 1e-5
            assert max_rel_err(gb, fb, floor=1e-6) < 1e-5

    def test_dead_relu_unit_gets_zero_grad(self):
        # hidden unit 0 is inactive for every input: its row of W0 is frozen
        w0 = np.array([[1.0, 0.0], [0.0, 1.0]])
        b0 = np.array([-100.0, 0.0])
        w1 = np.array([[1.0, 1.0]])
        net = Mlp([2, 2, 1], [w0, w1], [b0, np.zeros(1)])
        batch = np.random.default_rng(3).normal(size=(6, 2))
        graph = trace_forward(net, batch)
        loss = graph.tape.reduce_sum(graph.output_id, None)
        grads = param_grads(graph, loss)
        assert np.array_equal(grads[0][0][0], np.zeros(2))
        assert grads[0][1][0] == 0.0

    def test_non_scalar_loss_rejected(self):
        net = small_net(1)
        graph = trace_forward(net, np.zeros((3, 2)))
        with pytest.raises(ContractError):
            param_grads(graph, graph.output_id)


class TestInputGrad:
    def test_linear_scalar_net_returns_weights(self):
        w = np.array([[2.0, -3.0]])
        net = Mlp([2, 1], [w], [np.zeros(1)])
        g = input_grad(net, np.array([[0.7, 0.1]]))
        assert np.array_equal(g, w)

    def test_relu_net_matches_finite_differences(self):
        net = small_net(21)
        x = np.array([[0.37, -0.81]])
        assert relu_preactivations_safe(net, x)
        g = input_grad(net, x)
        fd = fd_input_grad(lambda v: float(forward(net, v)[0, 0]), x)
        assert max_rel_err(g, fd, floor=1e-6) < 1e-5

    def test_tanh_single_hidden_unit_closed_form(self):
        # f(x) = tanh(a x0 + a x1 + c): grad at 0 is (1 - tanh(c)^2) * [a, a]
        a, c = 0.9, 0.3
        net = Mlp(
            [2, 1], [np.array([[a, a]])], [np.array([c])],
            output_activation="tanh",
        )
        g = input_grad(net, np.zeros((1, 2)))
        expected = (1 - np.tanh(c) ** 2) * np.array([[a, a]])
        assert np.abs(g - expected).max() < 1e-15

    def test_requires_scalar_output(self):
        net = small_net(2, dims=(2, 4, 2))
        with pytest.raises(ContractError):
            input_grad(net, np.zeros((1, 2)))


class TestGradPenalty:
    def test_linear_disc_analytic(self):
        w = np.array([[3.0, 4.0]])
        net = Mlp([2, 1], [w], [np.zeros(1)])
        x = np.random.default_rng(0).normal(size=(8, 2))
        penalty, grads = grad_penalty_grads(net, x)
        assert penalty == pytest.approx((5.0 - 1.0) ** 2, abs=1e-12)
        # d/dw (||w|| - 1)^2 = 2 (||w|| - 1) w / ||w||
        expected = 2 * (5.0 - 1.0) * w / 5.0
        assert np.allclose(grads[0][0], expected, atol=1e-12)

    def test_unit_weight_zero_penalty_zero_grads(self):
        net = Mlp([2, 1], [np.array([[0.6, 0.8]])], [np.zeros(1)])
        penalty, grads = grad_penalty_grads(net, np.ones((4, 2)))
        assert penalty == 0.0
        assert all(np.all(g == 0) for pair in grads for g in pair)

    def test_double_backprop_matches_finite_differences(self):
        net = small_net(33, dims=(2, 12, 10, 1))
        x_hat = np.random.default_rng(5).normal(size=(16, 2))
        penalty, grads = grad_penalty_grads(net, x_hat)

        def penalty_fn(m):
            g = np.vstack([input_grad(m, x_hat[i]) for i in range(len(x_hat))])
            return float(((np.sqrt((g * g).sum(axis=1)) - 1.0) ** 2).mean())

        assert penalty == pytest.approx(penalty_fn(net), abs=1e-12)
        want = fd_param_grads(penalty_fn, net)
        for (gw, gb), (fw, fb) in zip(grads, want):
            assert max_rel_err(gw, fw, floor=1e-5) < 1e-4
            assert max_rel_err(gb, fb, floor=1e-5) < 1e-4

    def test_zero_gradient_convention(self):
        net = Mlp([2, 1], [np.zeros((1, 2))], [np.array([2.0])])
        penalty, grads = grad_penalty_grads(net, np.zeros((3, 2)))
        assert penalty == 1.0
        assert all(np.all(g == 0) for pair in grads for g in pair)


class TestGradCheckSweep:
    def test_random_nets_match_finite_differences(self):
        rng = np.random.default_rng(99)
        checked = 0
        for seed in range(40):
            dims = [2, int(rng.integers(3, 32)), int(rng.integers(3, 32)), 1]
            net = init_mlp(dims, seed)
            batch = rng.normal(size=(3, 2))
            if not relu_preactivations_safe(net, batch):
                continue
            graph = trace_forward(net, batch)
            loss = graph.tape.reduce_sum(graph.output_id, None)
            got = param_grads(graph, loss)
            want = fd_param_grads(lambda m: float(forward(m, batch).sum()), net)
            for (gw, gb), (fw, fb) in zip(got, want):
                assert max_rel_err(gw, fw, floor=1e-4) < 1e-5
                assert max_rel_err(gb, fb, floor=1e-4) < 1e-5
            checked += 1
            if checked >= 5:
                break
        assert checked >= 3


class TestTape:
    def test_replay_reproduces_values_bitexactly(self):
        net = small_net(8)
        x = np.random.default_rng(1).normal(size=(6, 2))
        tape = Tape()
        x_id = tape.leaf(x)
        params = [(tape.leaf(w), tape.leaf(b)) for w, b in zip(net.weights, net.biases)]
        from ganland.autodiff import emit_gradient_penalty

        pen = emit_gradient_penalty(tape, net, x_id, params)
        backward(tape, pen, [i for pair in params for i in pair])
        replayed = tape.replay()
        assert len(replayed) == len(tape)
        for i, v in enumerate(replayed):
            assert np.array_equal(np.asarray(v), np.asarray(tape.value(i)))

    def test_determinism_same_seed_same_tape(self):
        def build():
            net = small_net(13)
            batch = np.linspace(-1, 1, 8).reshape(4, 2)
            graph = trace_forward(net, batch)
            loss = graph.tape.reduce_sum(graph.output_id, None)
            grads = param_grads(graph, loss)
            return graph.tape, grads

        t1, g1 = build()
        t2, g2 = build()
        assert len(t1) == len(t2)
        assert all(t1.op(i) == t2.op(i) for i in range(len(t1)))
        for i in range(len(t1)):
            assert np.array_equal(np.asarray(t1.value(i)), np.asarray(t2.value(i)))
        for (a, b), (c, d) in zip(g1, g2):
            assert np.array_equal(a, c) and np.array_equal(b, d)

    def test_backward_requires_scalar(self):
        tape = Tape()
        a = tape.leaf(np.ones((2, 2)))
        with pytest.raises(ContractError):
            backward(tape, a, [a])


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        net = small_net(123, dims=(2, 20, 20, 2))
        path = tmp_path / "model.json"
        save_checkpoint(net, str(path), seed=123, meta={"note": "t"})
        loaded, obj = load_checkpoint(str(path))
        assert loaded.layer_dims == net.layer_dims
        assert obj["seed"] == 123
        for w1, w2 in zip(net.weights, loaded.weights):
            assert np.array_equal(w1, w2)
        for b1, b2 in zip(net.biases, loaded.biases):
            assert np.array_equal(b1, b2)
        # serialized form itself is stable
        save_checkpoint(loaded, str(tmp_path / "again.json"), seed=123, meta={"note": "t"})
        assert (tmp_path / "again.json").read_bytes() == path.read_bytes()

    def test_validation_rejects_bad_shapes(self):
        with pytest.raises(DimensionError):
            Mlp([2, 3], [np.zeros((2, 2))], [np.zeros(3)])
        with pytest.raises(ValueError):
            Mlp([2, 2], [np.zeros((2, 2))], [np.zeros(2)], hidden_activation="gelu")
