import json
import math

import numpy as np
import pytest

from gtbench import mlp
from gtbench import synthdata as sd

import oracles


random_net = oracles.random_net


def loop_forward(net, x):
    """Scalar-loop forward pass, independent of the vectorized path."""
    a = [(xi - mu) / sd_ for xi, mu, sd_ in zip(x, net.input_mean, net.input_std)]
    n_layers = len(net.weights)
    for k in range(n_layers):
        W, b = net.weights[k], net.biases[k]
        z = [math.fsum(a[i] * W[i][o] for i in range(len(a))) + b[o] for o in range(len(b))]
        a = [max(v, 0.0) for v in z] if k < n_layers - 1 else z
    return a[0] * net.output_std + net.output_mean


class TestShapes:
    def test_bounds(self):
        with pytest.raises(ValueError):
            mlp.NetworkShape.of()
        with pytest.raises(ValueError):
            mlp.NetworkShape.of(1, 1, 1, 1)
        with pytest.raises(ValueError):
            mlp.NetworkShape.of(1001)
        with pytest.raises(ValueError):
            mlp.NetworkShape.of(0)
        mlp.NetworkShape.of(1000, 1000, 1000)

    def test_param_count(self):
        net = mlp.init_network(mlp.NetworkShape.of(1), 6, 0)
        assert net.n_params == 6 * 1 + 1 + 1 * 1 + 1 == 9

    @pytest.mark.parametrize("widths,expected", [((1,), 7), ((10, 5), 115), ((1000, 1000, 1000), 6 * 1000 + 2 * 1000 * 1000 + 1000)])
    def test_complexity(self, widths, expected):
        net = mlp.init_network(mlp.NetworkShape.of(*widths), 6, 0)
        assert mlp.complexity(net) == expected
        assert sum(W.size for W in net.weights) == expected

    def test_random_shape_ranges(self):
        rng = np.random.default_rng(0)
        shapes = [mlp.random_shape(rng, 3, 128) for _ in range(500)]
        assert {s.hidden_layers for s in shapes} == {1, 2, 3}
        widths = [w for s in shapes for w in s.neurons_per_layer]
        assert min(widths) >= 1 and max(widths) <= 128
        assert min(widths) <= 5 and max(widths) >= 124


class TestInit:
    def test_deterministic(self):
        s = mlp.NetworkShape.of(8, 3)
        a, b = mlp.init_network(s, 6, 5), mlp.init_network(s, 6, 5)
        np.testing.assert_array_equal(a.params, b.params)
        assert not np.array_equal(a.params, mlp.init_network(s, 6, 6).params)

    def test_distribution(self):
        net = mlp.init_network(mlp.NetworkShape.of(200, 200), 6, 1)
        assert abs(net.params.mean()) < 0.002
        assert net.params.std() == pytest.approx(0.1, rel=0.01)

    def test_views_share_storage(self):
        net = mlp.init_network(mlp.NetworkShape.of(3), 2, 0)
        net.params[:] = 0
        assert all(np.all(W == 0) for W in net.weights)


class TestForward:
    def test_zero_network(self):
        net = mlp.init_network(mlp.NetworkShape.of(4, 4), 3, 0)
        net.params[:] = 0
        net.output_mean, net.output_std = 7.5, 2.0
        assert mlp.forward(net, [1.0, -2.0, 3.0]) == 7.5

    def test_relu_gating(self):
        net = mlp.init_network(mlp.NetworkShape.of(1), 2, 0)
        net.weights[0][:] = [[1.0], [1.0]]
        net.biases[0][:] = [-100.0]
        net.weights[1][:] = [[3.0]]
        net.biases[1][:] = [0.25]
        assert mlp.forward(net, [1.0, 2.0]) == 0.25
        assert mlp.forward(net, [60.0, 60.0]) == pytest.approx(0.25 + 3 * 20)

    def test_against_loop_oracle(self):
        rng = np.random.default_rng(3)
        net = random_net(rng, m=4)
        X = rng.normal(0, 3, size=(100, 4))
        out = mlp.forward(net, X)
        oracle = np.array([loop_forward(net, x) for x in X])
        np.testing.assert_allclose(out, oracle, rtol=1e-12, atol=1e-12)

    def test_non_finite_layer_reported(self):
        net = mlp.init_network(mlp.NetworkShape.of(2, 2), 2, 0)
        net.weights[1][0, 0] = np.inf
        net.weights[0][:] = 1.0
        with pytest.raises(mlp.NetworkEvaluationError) as err:
            mlp.forward(net, [1.0, 1.0])
        assert err.value.layer == 2

    def test_scaler_round_trip(self):
        rng = np.random.default_rng(1)
        net = random_net(rng, m=3)
        x = rng.normal(0, 100, size=(50, 3))
        np.testing.assert_allclose(net.destandardize_inputs(net.standardize(x)), x, rtol=1e-12)
        y = rng.normal(0, 1e5, 50)
        np.testing.assert_allclose(net.destandardize(net.standardize_output(y)), y, rtol=1e-12)


class TestGradient:
    def test_zero_residual(self):
        rng = np.random.default_rng(0)
        net = random_net(rng)
        X = rng.normal(size=(10, net.m))
        y = mlp.forward(net, X)
        loss, g = mlp.gradient(net, X, y)
        assert loss == 0.0
        assert np.all(g == 0.0)

    def test_single_neuron_output_bias(self):
        net = mlp.init_network(mlp.NetworkShape.of(1), 1, 0)
        net.weights[0][:] = 1.0
        net.biases[0][:] = 0.0
        net.weights[1][:] = 1.0
        net.biases[1][:] = 0.0
        net.output_std = 4.0
        # prediction 4 * relu(2) = 8 > y = 1: d|yhat - y|/d b_out = +1 * output_std
        _, g = mlp.gradient(net, [[2.0]], [1.0])
        assert g[-1] == 4.0
        # d/d w_out = output_std * relu(2) = 8; d/d w_in = output_std * w_out * x = 8; d/d b_in = 4
        np.testing.assert_array_equal(g, [8.0, 4.0, 8.0, 4.0])

    @pytest.mark.parametrize("seed", range(20))
    def test_finite_differences(self, seed):
        rng = np.random.default_rng(100 + seed)
        net = random_net(rng)
        X = rng.normal(net.input_mean, 2 * net.input_std, size=(int(rng.integers(1, 30)), net.m))
        y = rng.normal(net.output_mean, 3 * net.output_std, size=X.shape[0])
        checked, bad = oracles.finite_difference_check(net, X, y)
        assert not bad, bad[:3]
        assert checked >= net.n_params // 2


class TestAdaMax:
    def test_zero_gradient(self):
        opt = mlp.AdaMax(3)
        theta = np.array([1.0, -2.0, 3.0])
        opt.step(theta, np.zeros(3))
        np.testing.assert_array_equal(theta, [1.0, -2.0, 3.0])

    def test_first_step(self):
        opt = mlp.AdaMax(1)
        theta = np.array([0.0])
        opt.step(theta, np.array([1.0]))
        assert opt.m[0] == pytest.approx(0.1)
        assert opt.u[0] == 1.0
        assert theta[0] == pytest.approx(-0.002, rel=1e-15)

    def test_matches_scripted_update(self):
        lr, b1, b2 = 0.002, 0.9, 0.999
        grads = [np.array([0.3, -1.2, 5.0]), np.array([0.3, -1.2, 5.0])]
        theta = np.array([0.5, 0.5, -0.5])
        opt = mlp.AdaMax(3, lr, b1, b2)
        ref = [0.5, 0.5, -0.5]
        m = [0.0] * 3
        u = [0.0] * 3
        for t, g in enumerate(grads, start=1):
            opt.step(theta, g)
            for i in range(3):
                m[i] = b1 * m[i] + (1 - b1) * g[i]
                u[i] = max(b2 * u[i], abs(g[i]))
                ref[i] = ref[i] - (lr / (1 - b1**t)) * m[i] / u[i]
        np.testing.assert_allclose(theta, ref, rtol=1e-15, atol=0)


class TestEarlyStopping:
    def test_patience_sequence(self):
        stopper = mlp.EarlyStopping(patience=5)
        stops = [stopper.update(v) for v in [5, 4, 4, 4, 4, 4, 4]]
        # Stop fires on the seventh epoch (0-based index 6); the best is the second epoch.
        assert stops == [False] * 6 + [True]
        assert stopper.best_epoch == 1
        assert stopper.best == 4

    def test_improvement_resets(self):
        stopper = mlp.EarlyStopping(patience=2)
        assert [stopper.update(v) for v in [3, 3, 2, 2, 2]] == [False, False, False, False, True]


@pytest.fixture(scope="module")
def linear_data():
    return sd.generate(sd.make_spec("a", 4, 20_000))


class TestTrain:
    def test_constant_target(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(2000, 3))
        y = np.full(2000, 4.2)
        net = mlp.init_network(mlp.NetworkShape.of(8), 3, 0)
        net, rep = mlp.train(net, (X, y), mlp.TrainConfig(max_epochs=3))
        # Best constant predictor has zero MAE; allow the 10% margin in absolute terms of |y|.
        assert rep.best_validation_loss <= 0.0 + 0.1 * 4.2

    def test_linear_archetype_near_noise_floor(self, linear_data):
        spec = linear_data.spec
        # Effective noise is N(0, (sigma * ||w||)^2), so E|eps| = sigma * ||w|| * sqrt(2/pi).
        floor = spec.noise_std * np.linalg.norm(spec.weights) * math.sqrt(2 / math.pi)
        net = mlp.init_network(mlp.NetworkShape.of(32, 32), 6, 1)
        net, rep = mlp.train(net, linear_data, mlp.TrainConfig(seed=2))
        assert rep.epochs_run <= 20
        assert not rep.diverged
        assert rep.best_validation_loss < 0.15
        assert rep.best_validation_loss > 0.8 * floor

    def test_deterministic_and_restored(self, linear_data):
        cfg = mlp.TrainConfig(seed=9, max_epochs=4)
        a, ra = mlp.train(mlp.init_network(mlp.NetworkShape.of(5, 3), 6, 3), linear_data, cfg)
        b, rb = mlp.train(mlp.init_network(mlp.NetworkShape.of(5, 3), 6, 3), linear_data, cfg)
        assert a.params.tobytes() == b.params.tobytes()
        assert ra == rb
        # Rebuild the validation split and confirm the restored weights reproduce the best loss exactly.
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed)))
        perm = rng.permutation(linear_data.n_obs)
        val = perm[: int(round(linear_data.n_obs * cfg.validation_fraction))]
        pred = mlp.forward(a, linear_data.inputs[val])
        assert float(np.abs(pred - linear_data.outputs[val]).mean()) == ra.best_validation_loss

    def test_epochs_bounded(self, linear_data):
        net, rep = mlp.train(mlp.init_network(mlp.NetworkShape.of(2), 6, 0), linear_data, mlp.TrainConfig(max_epochs=2))
        assert rep.epochs_run <= 2

    def test_divergence_flagged(self, linear_data):
        cfg = mlp.TrainConfig(lr=1e308, max_epochs=3)
        net, rep = mlp.train(mlp.init_network(mlp.NetworkShape.of(4, 4), 6, 0), linear_data, cfg)
        assert rep.diverged
        assert rep.epochs_run <= 3

    def test_too_few_rows(self):
        with pytest.raises(ValueError):
            mlp.train(mlp.init_network(mlp.NetworkShape.of(2), 1, 0), (np.zeros((10, 1)), np.zeros(10)))


def test_json_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    net = random_net(rng, m=3)
    mlp.save_network(net, tmp_path / "net.json")
    back = mlp.load_network(tmp_path / "net.json")
    assert back.params.tobytes() == net.params.tobytes()
    assert back.input_std.tobytes() == net.input_std.tobytes()
    assert back.output_mean == net.output_mean
    doc = json.loads((tmp_path / "net.json").read_text())
    assert set(doc) == {"shape", "m", "input_scaler", "output_scaler", "layers"}
