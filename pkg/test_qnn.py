# -*- coding: utf-8 -*-
"""
Tests du perceptron qNN : équivalence avec le chemin classique en mode exact,
gradients, entraînement échantillonné et checkpoints.
"""

import numpy as np
import pytest

from core.estimators import EstimatorMode
from core.qnn import (
    ClassicalMlp, Mlp, TrainConfig, backprop_step, classify, forward, gradients, load_checkpoint, loss,
    one_hot, predict_proba, save_checkpoint, train,
)
from utils.error_handler import ValidationError


def _toy_data(n=40, seed=0):
    rng = np.random.default_rng(seed)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
    X = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    return X, (X[:, 0] > 0).astype(int)


def test_zero_network_outputs_half():
    mlp = Mlp.zeros([3, 4, 2])
    output = forward(mlp, np.ones((2, 3)), EstimatorMode.exact())[-1]
    np.testing.assert_array_equal(output, np.full((2, 2), 0.5))


def test_ties_go_to_class_zero():
    np.testing.assert_array_equal(classify(np.array([[0.5, 0.5], [0.2, 0.8]])), [0, 1])


def test_predict_proba_rows_sum_to_one():
    rng = np.random.default_rng(1)
    mlp = Mlp.init([4, 3, 2], rng)
    proba = predict_proba(mlp, rng.normal(size=(6, 4)))
    np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)


def test_exact_forward_matches_classical():
    rng = np.random.default_rng(2)
    mlp = Mlp.init([8, 4, 2], rng)
    X = rng.normal(size=(10, 8))
    quantum = forward(mlp, X, EstimatorMode.exact())
    classical = ClassicalMlp(mlp).forward(X)
    for a, b in zip(quantum, classical):
        np.testing.assert_allclose(a, b, rtol=0.0, atol=1e-12)


def test_exact_training_matches_classical():
    X, labels = _toy_data(30, seed=3)
    mlp = Mlp.init([2, 3, 2], np.random.default_rng(3))
    config = TrainConfig(epochs=3, batch_size=7, learning_rate=0.3, seed=5)
    trained, history = train(mlp, X, labels, config)
    reference = ClassicalMlp(mlp)
    reference_history = reference.train(X, labels, config)
    for W, W_ref in zip(trained.weights, reference.mlp.weights):
        np.testing.assert_allclose(W, W_ref, rtol=0.0, atol=1e-12)
    for b, b_ref in zip(trained.biases, reference.mlp.biases):
        np.testing.assert_allclose(b, b_ref, rtol=0.0, atol=1e-12)
    np.testing.assert_allclose(history["loss"], reference_history["loss"], atol=1e-12)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(4)
    mlp = Mlp.init([3, 4, 2], rng)
    X = rng.normal(size=(5, 3))
    Y = one_hot(rng.integers(0, 2, size=5))
    grads_W, grads_b = gradients(mlp, X, Y, EstimatorMode.exact())
    eps = 1e-6
    for l in range(mlp.n_layers):
        numeric = np.zeros_like(mlp.weights[l])
        for index in np.ndindex(*mlp.weights[l].shape):
            plus, minus = mlp.copy(), mlp.copy()
            plus.weights[l][index] += eps
            minus.weights[l][index] -= eps
            numeric[index] = (loss(plus, X, Y) - loss(minus, X, Y)) / (2 * eps)
        np.testing.assert_allclose(grads_W[l], numeric, rtol=1e-5, atol=1e-8)
        numeric_b = np.zeros_like(mlp.biases[l])
        for i in range(len(numeric_b)):
            plus, minus = mlp.copy(), mlp.copy()
            plus.biases[l][i] += eps
            minus.biases[l][i] -= eps
            numeric_b[i] = (loss(plus, X, Y) - loss(minus, X, Y)) / (2 * eps)
        np.testing.assert_allclose(grads_b[l], numeric_b, rtol=1e-5, atol=1e-8)


def test_zero_learning_rate_leaves_weights_unchanged():
    rng = np.random.default_rng(5)
    mlp = Mlp.init([3, 2], rng)
    X, Y = rng.normal(size=(4, 3)), one_hot(np.array([0, 1, 1, 0]))
    updated = backprop_step(mlp, X, Y, TrainConfig(learning_rate=0.0))
    np.testing.assert_array_equal(updated.weights[0], mlp.weights[0])
    np.testing.assert_array_equal(updated.biases[0], mlp.biases[0])


def test_empty_batch_is_rejected():
    mlp = Mlp.zeros([2, 2])
    with pytest.raises(ValidationError):
        backprop_step(mlp, np.zeros((0, 2)), np.zeros((0, 2)), TrainConfig())


def test_wrong_input_width_is_rejected():
    with pytest.raises(ValidationError):
        forward(Mlp.zeros([3, 2]), np.ones((2, 4)), EstimatorMode.exact())


def test_sampled_training_reduces_loss():
    X, labels = _toy_data(40, seed=6)
    mlp = Mlp.init([2, 4, 2], np.random.default_rng(6))
    config = TrainConfig(epochs=10, batch_size=5, learning_rate=0.5, seed=1,
                         mode=EstimatorMode.sampled(400, seed=2))
    trained, history = train(mlp, X, labels, config)
    Y = one_hot(labels)
    assert history["loss"].iloc[-1] < loss(mlp, X, Y)
    assert loss(trained, X, Y) == pytest.approx(history["loss"].iloc[-1])


def test_sampled_training_is_deterministic():
    X, labels = _toy_data(20, seed=7)
    mlp = Mlp.init([2, 3, 2], np.random.default_rng(7))
    config = TrainConfig(epochs=2, batch_size=4, seed=3, mode=EstimatorMode.sampled(100, seed=4))
    first, history_a = train(mlp, X, labels, config)
    second, history_b = train(mlp, X, labels, config)
    np.testing.assert_array_equal(first.weights[0], second.weights[0])
    assert history_a.equals(history_b)


def test_averaged_sampled_forward_converges():
    rng = np.random.default_rng(8)
    mlp = Mlp.init([5, 2], rng)
    X = rng.normal(size=(3, 5))
    exact = forward(mlp, X, EstimatorMode.exact())[-1]
    mode = EstimatorMode.sampled(400, seed=0)
    single = forward(mlp, X, mode, call_counter=0)[-1]
    many = np.mean([forward(mlp, X, mode, call_counter=c)[-1] for c in range(500)], axis=0)
    assert not np.array_equal(single, exact)
    assert np.abs(many - exact).max() < 0.01


def test_history_columns():
    X, labels = _toy_data(12, seed=9)
    _, history = train(Mlp.init([2, 2], np.random.default_rng(9)), X, labels, TrainConfig(epochs=2),
                       X_test=X, y_test=labels)
    assert list(history.columns) == ["epoch", "loss", "train_acc", "test_acc"]
    assert history["epoch"].tolist() == [1, 2]
    assert history["test_acc"].notna().all()


def test_checkpoint_round_trip(tmp_path):
    mlp = Mlp.init([4, 3, 2], np.random.default_rng(10))
    path = save_checkpoint(mlp, tmp_path / "model.json")
    restored = load_checkpoint(path)
    assert restored.layer_sizes == [4, 3, 2]
    for W, W_ref in zip(restored.weights, mlp.weights):
        np.testing.assert_array_equal(W, W_ref)
