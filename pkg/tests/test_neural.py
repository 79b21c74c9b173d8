import numpy as np
import pytest

from exbound.neural import (AdamState, Mlp, NetworkClassSpec, TrainConfig,
                            adam_step, audit_class, load_mlp, mlp_backward,
                            mlp_forward, mlp_from_bytes, mlp_init,
                            mlp_to_bytes, save_mlp)


class TestInit:
    def test_shape_contract(self):
        net = mlp_init([3, 1], seed=0)
        assert net.weights[0].shape == (1, 3)
        assert net.biases[0].shape == (1,)

    def test_seed_determinism(self):
        a = mlp_init([4, 16, 2], seed=5)
        b = mlp_init([4, 16, 2], seed=5)
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert np.array_equal(pa, pb)

    def test_he_variance(self):
        net = mlp_init([2, 64, 64, 1], seed=1)
        var = net.weights[0].var()
        assert abs(var - 1.0) < 0.25  # 2 / fan_in with fan_in = 2

    def test_rejects_bad_dims(self):
        with pytest.raises(ValueError):
            mlp_init([3], seed=0)
        with pytest.raises(ValueError):
            mlp_init([3, 0, 1], seed=0)


class TestForward:
    def test_constant_network(self):
        net = mlp_init([2, 4, 3], seed=0)
        for w in net.weights:
            w[:] = 0.0
        net.biases[-1][:] = [1.0, -2.0, 0.5]
        for x in (np.zeros(2), np.array([3.0, -1.0])):
            assert np.array_equal(mlp_forward(net, x), [1.0, -2.0, 0.5])

    def test_single_layer_identity(self):
        net = Mlp([3, 3], [np.eye(3)], [np.zeros(3)])
        x = np.array([1.0, -2.0, 0.25])
        assert np.array_equal(mlp_forward(net, x), x)

    def test_relu_pair_builds_identity(self):
        # ReLU(x) - ReLU(-x) = x
        net = Mlp([1, 2, 1], [np.array([[1.0], [-1.0]]),
                              np.array([[1.0, -1.0]])],
                  [np.zeros(2), np.zeros(1)])
        xs = np.linspace(-3, 3, 41)
        out = mlp_forward(net, xs[:, None]).ravel()
        assert np.array_equal(out, xs)

    def test_positive_homogeneity_bias_free(self, rng):
        net = mlp_init([3, 16, 2], seed=8)
        for b in net.biases:
            b[:] = 0.0
        x = rng.standard_normal(3)
        for c in (0.5, 2.0, 7.5):
            assert np.allclose(mlp_forward(net, c * x),
                               c * mlp_forward(net, x), rtol=1e-12)

    def test_shape_mismatch(self):
        net = mlp_init([3, 2], seed=0)
        with pytest.raises(ValueError):
            mlp_forward(net, np.zeros(4))


class TestBackward:
    def test_perfect_fit_zero_gradients(self):
        net = mlp_init([2, 5, 1], seed=3)
        x = np.array([[0.3, -0.7], [1.0, 0.2]])
        y = mlp_forward(net, x)
        loss, grads = mlp_backward(net, x, y)
        assert loss == 0.0
        assert all(np.all(g == 0.0) for g in grads)

    def test_linear_layer_closed_form(self):
        net = mlp_init([3, 1], seed=4)
        x = np.array([[0.5, -1.0, 2.0]])
        y = np.array([[0.7]])
        loss, grads = mlp_backward(net, x, y)
        resid = (net.weights[0] @ x[0] + net.biases[0] - y[0]).item()
        assert loss == pytest.approx(resid**2, rel=1e-14)
        assert np.allclose(grads[0], 2.0 * resid * x, rtol=1e-14)
        assert np.allclose(grads[1], 2.0 * resid, rtol=1e-14)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_finite_difference_agreement(self, seed):
        rng = np.random.default_rng(seed)
        net = mlp_init([3, 5, 1], seed=100 + seed)
        x = rng.standard_normal((7, 3))
        y = rng.standard_normal((7, 1))
        _, grads = mlp_backward(net, x, y)
        h = 1e-5
        for pi, p in enumerate(net.parameters()):
            flat = p.reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + h
                lp, _ = mlp_backward(net, x, y)
                flat[j] = orig - h
                lm, _ = mlp_backward(net, x, y)
                flat[j] = orig
                fd = (lp - lm) / (2 * h)
                g = grads[pi].reshape(-1)[j]
                assert abs(fd - g) / max(1e-8, abs(fd), abs(g)) < 1e-4

    def test_batch_size_mismatch(self):
        net = mlp_init([2, 1], seed=0)
        with pytest.raises(ValueError):
            mlp_backward(net, np.zeros((3, 2)), np.zeros((2, 1)))


class TestAdam:
    def test_zero_gradient_fixed_point(self):
        net = mlp_init([2, 3, 1], seed=6)
        before = [p.copy() for p in net.parameters()]
        state = AdamState.zeros_like(net)
        grads = [np.zeros_like(p) for p in net.parameters()]
        adam_step(net, grads, state, TrainConfig())
        for b, p in zip(before, net.parameters()):
            assert np.array_equal(b, p)

    def test_first_step_is_signed_learning_rate(self):
        net = mlp_init([2, 1], seed=6)
        before = [p.copy() for p in net.parameters()]
        state = AdamState.zeros_like(net)
        grads = [np.array([[0.3, -2.0]]), np.array([0.7])]
        cfg = TrainConfig(learning_rate=1e-3)
        adam_step(net, grads, state, cfg)
        step_w = net.weights[0] - before[0]
        expected = -cfg.learning_rate * np.sign(grads[0])
        assert np.max(np.abs(step_w - expected)) < 1e-9

    def test_quadratic_bowl_convergence(self):
        # constant-rate Adam limit-cycles at O(lr) on a quadratic, so
        # the shipped decay schedule is part of the contract; the start
        # must sit within the schedule's total travel budget (~1.5)
        rng = np.random.default_rng(12)
        net = Mlp([1, 8], [0.3 * rng.standard_normal((8, 1))],
                  [0.3 * rng.standard_normal(8)])
        state = AdamState.zeros_like(net)
        cfg = TrainConfig(learning_rate=1e-2)
        for step in range(500):
            grads = [2.0 * p for p in net.parameters()]
            adam_step(net, grads, state, cfg, lr=cfg.rate_at(step))
        norm = np.sqrt(sum(float((p**2).sum()) for p in net.parameters()))
        assert norm < 1e-3

    def test_schedule_decays(self):
        cfg = TrainConfig(learning_rate=1e-3, lr_decay=0.5, decay_every=10)
        assert cfg.rate_at(0) == 1e-3
        assert cfg.rate_at(9) == 1e-3
        assert cfg.rate_at(10) == 5e-4
        assert cfg.rate_at(25) == 2.5e-4


class TestAudit:
    def test_zero_network_passes(self):
        net = Mlp([2, 4, 1], [np.zeros((4, 2)), np.zeros((1, 4))],
                  [np.zeros(4), np.zeros(1)])
        spec = NetworkClassSpec(2, 1, depth_L=2, width_p=4, sparsity_K=0,
                                weight_bound_kappa=1.0, output_bound_R=1.0)
        report = audit_class(net, spec, np.zeros((5, 2)))
        assert report.passed

    def test_kappa_violation_detected(self):
        net = mlp_init([2, 4, 1], seed=9)
        kappa = max(float(np.abs(p).max()) for p in net.parameters())
        spec = NetworkClassSpec(2, 1, depth_L=2, width_p=4, sparsity_K=10**6,
                                weight_bound_kappa=kappa / 2.0,
                                output_bound_R=1e9)
        report = audit_class(net, spec, np.zeros((3, 2)))
        assert not report.checks["kappa"]
        assert not report.passed

    def test_counts(self):
        net = Mlp([2, 3, 1], [np.array([[1.0, 0.0], [0.0, 0.0], [2.0, 3.0]]),
                              np.array([[1.0, 0.0, -1.0]])],
                  [np.array([0.0, 4.0, 0.0]), np.array([0.0])])
        spec = NetworkClassSpec(2, 1, 2, 3, 100, 100.0, 100.0)
        report = audit_class(net, spec)
        assert report.nonzero_params == 6
        assert report.depth == 2
        assert report.max_hidden_width == 3


class TestCheckpoint:
    def test_roundtrip_bitwise(self, tmp_path):
        net = mlp_init([3, 7, 2], seed=13)
        path = tmp_path / "net.ckpt"
        save_mlp(net, path)
        back = load_mlp(path)
        assert back.layer_dims == net.layer_dims
        for a, b in zip(net.parameters(), back.parameters()):
            assert np.array_equal(a, b)

    def test_magic_guard(self):
        blob = b"XXXX" + bytes(64)
        with pytest.raises(ValueError):
            mlp_from_bytes(blob)

    def test_header_layout(self):
        net = mlp_init([2, 3], seed=0)
        blob = mlp_to_bytes(net)
        assert blob[:4] == b"DNOP"
        version = int.from_bytes(blob[4:8], "little")
        n_dims = int.from_bytes(blob[8:12], "little")
        assert version == 1 and n_dims == 2
        dims = [int.from_bytes(blob[12 + 4 * i:16 + 4 * i], "little")
                for i in range(2)]
        assert dims == [2, 3]
        floats = np.frombuffer(blob, dtype="<f8", offset=20)
        assert len(floats) == 2 * 3 + 3  # weights then biases
