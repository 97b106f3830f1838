import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mortar import neuralnet
from mortar.neuralnet import Mlp, ModelFormatError, TrainConfig

from oracles import central_difference, mlp_forward


def random_mlp(rng, layers):
    m = neuralnet.init_mlp(layers, seed=int(rng.integers(2**31)))
    for b in m.biases:
        b[:] = rng.normal(0, 0.3, b.shape)
    m.mu_x = rng.normal(0, 1, layers[0])
    m.sigma_x = rng.uniform(0.5, 2.0, layers[0])
    return m


def linear_mlp(w, b):
    w = np.asarray(w, dtype=float)
    return Mlp([w[None, :]], [np.array([b], dtype=float)], np.zeros(len(w)), np.ones(len(w)))


def grad_rel_error(model, x):
    g = neuralnet.grad_input(model, x)
    fd = central_difference(lambda z: neuralnet.forward(model, z), x, h=1e-5)
    return np.abs(g - fd) / np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1e-8)


class TestForward:

    def test_zero_weights(self):
        m = neuralnet.init_mlp([3, 5, 1])
        for w in m.weights:
            w[:] = 0
        m.biases[-1][:] = 0.42
        assert neuralnet.forward(m, [1.0, -7.0, 3.0]) == 0.42

    def test_linear(self):
        m = linear_mlp([0.5, -2.0, 1.0], 0.25)
        x = np.array([2.0, 1.0, -3.0])
        assert neuralnet.forward(m, x) == 0.5 * 2.0 - 2.0 * 1.0 + 1.0 * -3.0 + 0.25

    def test_matches_hand_rolled(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            m = random_mlp(rng, [2, 16, 1])
            x = rng.normal(0, 2, 2)
            ref = mlp_forward(m.weights, m.biases, m.mu_x, m.sigma_x, x)
            assert abs(neuralnet.forward(m, x) - ref) <= 1e-12

    def test_batch_matches_single(self):
        rng = np.random.default_rng(1)
        m = random_mlp(rng, [4, 8, 8, 1])
        xs = rng.normal(size=(10, 4))
        batch = neuralnet.forward_batch(m, xs)
        assert np.allclose(batch, [neuralnet.forward(m, x) for x in xs], atol=1e-14, rtol=0)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="expected 3"):
            neuralnet.forward(neuralnet.init_mlp([3, 1]), [1.0, 2.0])

    def test_non_finite_input(self):
        with pytest.raises(ValueError, match="non-finite"):
            neuralnet.forward(neuralnet.init_mlp([2, 1]), [1.0, np.nan])


class TestGradient:

    def test_linear_gradient_is_weights(self):
        m = linear_mlp([0.5, -2.0, 1.0], 0.25)
        assert np.array_equal(neuralnet.grad_input(m, [3.0, 1.0, 2.0]), [0.5, -2.0, 1.0])

    def test_gradient_through_normalisation(self):
        m = linear_mlp([1.0, 1.0], 0.0)
        m.sigma_x = np.array([2.0, 4.0])
        assert np.array_equal(neuralnet.grad_input(m, [0.0, 0.0]), [0.5, 0.25])

    def test_constant_network(self):
        m = neuralnet.init_mlp([4, 16, 1])
        for w in m.weights:
            w[:] = 0
        assert np.array_equal(neuralnet.grad_input(m, np.ones(4)), np.zeros(4))

    def test_deep_finite_differences(self):
        rng = np.random.default_rng(2)
        m = random_mlp(rng, [4, 16, 16, 1])
        assert np.all(grad_rel_error(m, rng.normal(size=4)) <= 1e-4)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_random_architectures(self, seed):
        rng = np.random.default_rng(seed)
        hidden = [int(h) for h in rng.integers(1, 20, size=rng.integers(0, 3))]
        layers = [int(rng.integers(1, 8)), *hidden, 1]
        m = random_mlp(rng, layers)
        assert np.all(grad_rel_error(m, rng.normal(size=layers[0])) <= 1e-4)


class TestTraining:

    def test_fit_line(self):
        x = np.linspace(-1, 1, 100)[:, None]
        y = 2 * x[:, 0] + 1
        m = neuralnet.init_mlp([1, 1], seed=0)
        res = neuralnet.train(m, x, y, TrainConfig(lr=0.05, epochs=200, batch=10, seed=0))
        assert res.loss_history[-1] <= 1e-4
        assert len(res.loss_history) == 200

    def test_zero_epochs(self):
        with pytest.raises(ValueError, match="epochs"):
            TrainConfig(epochs=0)

    def test_empty_dataset(self):
        with pytest.raises(ValueError, match="empty"):
            neuralnet.train(neuralnet.init_mlp([2, 1]), np.zeros((0, 2)), np.zeros(0), TrainConfig())

    def test_same_seed_same_history(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(300, 3))
        y = np.sin(x).sum(axis=1)
        cfg = TrainConfig(lr=0.01, epochs=5, batch=32, seed=3)
        h1 = neuralnet.train(neuralnet.init_mlp([3, 8, 1], 1), x, y, cfg).loss_history
        h2 = neuralnet.train(neuralnet.init_mlp([3, 8, 1], 1), x, y, cfg).loss_history
        assert h1 == h2

    def test_monotone_on_realizable_data(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(200, 3))
        y = x @ np.array([0.5, -1.0, 2.0]) + 0.3
        cfg = TrainConfig(lr=1e-3, epochs=40, batch=20, seed=0, momentum=0.0)
        hist = neuralnet.train(neuralnet.init_mlp([3, 1], 0), x, y, cfg).loss_history
        tail = hist[len(hist) // 2:]
        assert all(b <= a for a, b in zip(tail, tail[1:]))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_detected(self):
        x = np.linspace(-1, 1, 64)[:, None] * 1e3
        y = x[:, 0] * 1e3
        cfg = TrainConfig(lr=10.0, epochs=5, batch=8, seed=0, momentum=0.0)
        with pytest.raises(FloatingPointError):
            neuralnet.train(neuralnet.init_mlp([1, 1]), x, y, cfg, normalize=False)

    def test_validation_snapshot(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(256, 2))
        y = x[:, 0] - x[:, 1]
        res = neuralnet.train(neuralnet.init_mlp([2, 4, 1]), x, y,
                              TrainConfig(epochs=6, batch=32), validation=(x[:50], y[:50]))
        assert len(res.val_history) == 6
        assert res.val_history[res.best_epoch] == min(res.val_history)
        assert neuralnet.mse(res.model, x[:50], y[:50]) == min(res.val_history)

    def test_normalisation_invariance(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(100, 3))
        m = random_mlp(rng, [3, 10, 1])
        neuralnet.fit_normalization(m, x)
        before = neuralnet.forward_batch(m, x)
        scale, shift = np.array([3.0, 0.2, 10.0]), np.array([-5.0, 1.0, 100.0])
        neuralnet.fit_normalization(m, x * scale + shift)
        after = neuralnet.forward_batch(m, x * scale + shift)
        assert np.max(np.abs(after - before)) <= 1e-9

    def test_zero_variance_feature(self):
        x = np.column_stack([np.ones(10), np.arange(10.0)])
        m = neuralnet.fit_normalization(neuralnet.init_mlp([2, 1]), x)
        assert m.sigma_x[0] == 1.0


class TestSerialisation:

    def test_round_trip_exact(self):
        rng = np.random.default_rng(10)
        m = random_mlp(rng, [5, 7, 3, 1])
        m.meta = {"env": "PointReach"}
        m2 = neuralnet.loads(neuralnet.dumps(m))
        for a, b in zip(m.weights + m.biases + [m.mu_x, m.sigma_x],
                        m2.weights + m2.biases + [m2.mu_x, m2.sigma_x]):
            assert np.array_equal(a, b)
        x = rng.normal(size=5)
        assert neuralnet.forward(m, x) == neuralnet.forward(m2, x)
        assert m2.meta == m.meta

    def test_document_fields(self):
        doc = json.loads(neuralnet.dumps(neuralnet.init_mlp([2, 3, 1])))
        assert set(doc) == {"layers", "activation", "weights", "biases", "mu_x", "sigma_x", "meta"}
        assert doc["layers"] == [2, 3, 1] and len(doc["weights"][0]) == 6

    def test_truncated(self):
        text = neuralnet.dumps(neuralnet.init_mlp([2, 3, 1]))
        with pytest.raises(ModelFormatError):
            neuralnet.loads(text[: len(text) // 2])

    def test_shape_mismatch(self):
        doc = neuralnet.to_document(neuralnet.init_mlp([2, 3, 1]))
        doc["layers"] = [2, 4, 1]
        with pytest.raises(ModelFormatError):
            neuralnet.from_document(doc)
        doc = neuralnet.to_document(neuralnet.init_mlp([2, 3, 1]))
        doc["biases"][0] = [0.0, 0.0]
        with pytest.raises(ModelFormatError):
            neuralnet.from_document(doc)

    def test_missing_field(self):
        doc = neuralnet.to_document(neuralnet.init_mlp([2, 1]))
        del doc["mu_x"]
        with pytest.raises(ModelFormatError):
            neuralnet.from_document(doc)
