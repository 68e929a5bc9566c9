# -*- coding: utf-8 -*-
"""
Tests des couches pyramidales : plan des portes, bijection angles ↔ matrice,
passe avant et distribution de récupération du signe.
"""

import numpy as np
import pytest

from core.estimators import EstimatorMode
from core.pyramid import (
    PyramidLayer, RotationCounter, angles_to_matrix, estimate_layer_output, forward, gate_plan,
    inference_distribution, matrix_to_angles, param_count, sign_recovery_circuit,
)
from core.unary_core import dense_simulate
from utils.error_handler import NumericalError, ValidationError


def _orthogonal(n, rng):
    q, r = np.linalg.qr(rng.normal(size=(n, n)))
    return q * np.sign(np.diag(r))


@pytest.mark.parametrize("n_in,n_out,expected", [(8, 4, 22), (4, 2, 5), (8, 8, 28), (2, 2, 1), (5, 1, 4)])
def test_param_count(n_in, n_out, expected):
    assert param_count(n_in, n_out) == expected
    assert len(gate_plan(n_in, n_out)) == expected


def test_param_count_rejects_growing_layer():
    with pytest.raises(ValidationError):
        param_count(2, 3)


@pytest.mark.parametrize("n", [3, 4, 6, 9])
def test_square_pyramid_timesteps(n):
    plan = gate_plan(n, n)
    assert max(t for _, _, t in plan) + 1 == 2 * n - 3
    for step in {t for _, _, t in plan}:
        wires = [w for a, b, t in plan if t == step for w in (a, b)]
        assert len(wires) == len(set(wires))


def test_plan_uses_nearest_neighbours():
    for a, b, _ in gate_plan(7, 3):
        assert b == a + 1


def test_zero_angles_give_identity_rows():
    np.testing.assert_array_equal(angles_to_matrix(PyramidLayer.zeros(5, 3)), np.eye(5)[:3])


def test_two_by_two_matrix():
    theta = 0.4
    W = angles_to_matrix(PyramidLayer(2, 2, [theta]))
    c, s = np.cos(theta), np.sin(theta)
    np.testing.assert_allclose(W, [[c, -s], [s, c]], atol=1e-15)


def test_random_angles_give_orthogonal_matrix():
    rng = np.random.default_rng(0)
    layer = PyramidLayer.random(8, 8, rng, scale=np.pi)
    W = angles_to_matrix(layer)
    np.testing.assert_allclose(W @ W.T, np.eye(8), atol=1e-12)


def test_rectangular_matrix_has_orthonormal_rows():
    rng = np.random.default_rng(1)
    W = angles_to_matrix(PyramidLayer.random(8, 3, rng))
    assert W.shape == (3, 8)
    np.testing.assert_allclose(W @ W.T, np.eye(3), atol=1e-12)


def test_identity_decomposes_to_zero_angles():
    layer = matrix_to_angles(np.eye(6))
    np.testing.assert_allclose(layer.theta, 0.0, atol=1e-12)
    np.testing.assert_array_equal(layer.row_signs, np.ones(6))


@pytest.mark.parametrize("n", [2, 3, 5, 8])
def test_haar_matrices_round_trip(n):
    rng = np.random.default_rng(n)
    for _ in range(20):
        W = _orthogonal(n, rng)
        np.testing.assert_allclose(angles_to_matrix(matrix_to_angles(W)), W, atol=1e-10)


def test_negative_determinant_sets_last_sign():
    W = np.diag([1.0, 1.0, -1.0])
    layer = matrix_to_angles(W)
    assert layer.row_signs[-1] == -1.0
    np.testing.assert_allclose(angles_to_matrix(layer), W, atol=1e-12)


@pytest.mark.parametrize("n_in,n_out", [(6, 2), (8, 4), (5, 5)])
def test_angles_round_trip_up_to_canonical_form(n_in, n_out):
    rng = np.random.default_rng(n_in * 10 + n_out)
    W = angles_to_matrix(PyramidLayer.random(n_in, n_out, rng, scale=np.pi))
    recovered = matrix_to_angles(W)
    np.testing.assert_allclose(angles_to_matrix(recovered), W, atol=1e-10)
    assert np.all(recovered.theta > -np.pi) and np.all(recovered.theta <= np.pi)


def test_non_orthogonal_matrix_is_rejected():
    with pytest.raises(NumericalError):
        matrix_to_angles(np.array([[1.0, 0.1], [0.0, 1.0]]))


def test_forward_with_zero_angles_truncates():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    np.testing.assert_array_equal(forward(PyramidLayer.zeros(4, 2), x), [1.0, 2.0])


def test_forward_quarter_turn():
    x = np.array([0.3, -0.7])
    np.testing.assert_allclose(forward(PyramidLayer(2, 2, [np.pi / 2]), x), [0.7, 0.3], atol=1e-15)


def test_forward_matches_matrix_and_counts_rotations():
    rng = np.random.default_rng(3)
    layer = PyramidLayer.random(8, 4, rng)
    x = rng.normal(size=8)
    counter = RotationCounter()
    np.testing.assert_allclose(forward(layer, x, counter), angles_to_matrix(layer) @ x, atol=1e-12)
    assert counter.count == param_count(8, 4)


def test_forward_on_batch():
    rng = np.random.default_rng(4)
    layer = PyramidLayer.random(6, 3, rng)
    X = rng.normal(size=(5, 6))
    counter = RotationCounter()
    np.testing.assert_allclose(forward(layer, X, counter), X @ angles_to_matrix(layer).T, atol=1e-12)
    assert counter.count == 5 * param_count(6, 3)


def test_layer_dict_round_trip():
    rng = np.random.default_rng(5)
    layer = matrix_to_angles(np.diag([1.0, 1.0, 1.0, -1.0]) @ _orthogonal(4, rng))
    restored = PyramidLayer.from_dict(layer.to_dict())
    np.testing.assert_array_equal(angles_to_matrix(restored), angles_to_matrix(layer))


def test_inference_distribution_identity_example():
    probs = inference_distribution(PyramidLayer.zeros(4, 4), np.eye(4)[0])
    assert probs[0, 0] == pytest.approx(0.5625)
    assert probs[1, 0] == pytest.approx(0.0625)
    assert probs.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("n_in,n_out", [(4, 4), (6, 2), (8, 3)])
def test_inference_distribution_is_normalized(n_in, n_out):
    rng = np.random.default_rng(n_in)
    layer = PyramidLayer.random(n_in, n_out, rng)
    x = rng.normal(size=n_in)
    probs = inference_distribution(layer, x / np.linalg.norm(x))
    assert probs.shape == (2, n_in)
    assert probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_sign_is_recovered_from_distribution():
    rng = np.random.default_rng(6)
    layer = PyramidLayer.random(5, 5, rng)
    x_hat = rng.normal(size=5)
    x_hat /= np.linalg.norm(x_hat)
    probs = inference_distribution(layer, x_hat)
    np.testing.assert_allclose(np.sqrt(5) * (probs[0] - probs[1]), angles_to_matrix(layer) @ x_hat, atol=1e-12)


@pytest.mark.parametrize("n_in,n_out", [(4, 4), (5, 2)])
def test_sign_recovery_circuit_matches_distribution(n_in, n_out):
    rng = np.random.default_rng(7)
    layer = PyramidLayer.random(n_in, n_out, rng)
    x_hat = rng.normal(size=n_in)
    x_hat /= np.linalg.norm(x_hat)
    dense = dense_simulate(sign_recovery_circuit(layer, x_hat))
    probs = dense.probabilities()
    expected = inference_distribution(layer, x_hat)
    for b in range(2):
        for j in range(n_in):
            index = (b << n_in) | (1 << (n_in - 1 - j))
            assert probs[index] == pytest.approx(expected[b, j], abs=1e-10)


def test_estimated_output_exact_mode_is_forward():
    rng = np.random.default_rng(8)
    layer = PyramidLayer.random(6, 3, rng)
    x = rng.normal(size=6)
    np.testing.assert_array_equal(estimate_layer_output(layer, x, EstimatorMode.exact()), forward(layer, x))


def test_estimated_output_converges():
    rng = np.random.default_rng(9)
    layer = PyramidLayer.random(8, 8, rng)
    x = rng.normal(size=8)
    x /= np.linalg.norm(x)
    estimate = estimate_layer_output(layer, x, EstimatorMode.sampled(100_000, seed=1))
    assert np.max(np.abs(estimate - forward(layer, x))) < 0.02


def test_estimated_output_with_few_shots_is_finite():
    rng = np.random.default_rng(10)
    layer = PyramidLayer.random(4, 2, rng)
    estimate = estimate_layer_output(layer, rng.normal(size=4), EstimatorMode.sampled(3, seed=2))
    assert estimate.shape == (2,)
    assert np.all(np.isfinite(estimate))
