# -*- coding: utf-8 -*-
"""
Tests des estimateurs de produits scalaires (circuits carré et signé,
échantillonnage, produits matriciels et comptage des pas).
"""

import numpy as np
import pytest

from core.estimators import (
    EstimatorMode, classical_step_count, crossover_point, estimate_ip, estimate_matmul, estimate_matvec,
    estimate_square_ip, quantum_step_count, signed_amplitude, signed_ip_circuit, square_ip_circuit,
)
from core.loaders import LoaderKind, LoaderTopology
from core.unary_core import dense_simulate, project_unary, run_circuit
from utils.error_handler import ValidationError


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def _pair_with_cosine(d, cosine, rng):
    x = _unit(rng.normal(size=d))
    orth = rng.normal(size=d)
    orth = _unit(orth - (orth @ x) * x)
    return x, cosine * x + np.sqrt(1.0 - cosine ** 2) * orth


def test_square_circuit_probability():
    x_hat = np.array([0.6, 0.8, 0.0, 0.0])
    w_hat = np.array([0.8, 0.6, 0.0, 0.0])
    topology = LoaderTopology.build("semi_diagonal", 4)
    state = run_circuit(square_ip_circuit(x_hat, w_hat, topology))
    assert state.amp[topology.root] ** 2 == pytest.approx(0.9216, abs=1e-12)


@pytest.mark.parametrize("cosine,expected", [(1.0, 0.0), (-1.0, 1.0), (0.0, 0.25)])
def test_signed_amplitude_probabilities(cosine, expected):
    assert float(signed_amplitude(cosine)) ** 2 == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("kind", ["parallel", "diagonal", "semi_diagonal"])
def test_signed_circuit_amplitude(kind):
    rng = np.random.default_rng(2)
    for d in range(2, 9):
        topology = LoaderTopology.build(kind, d)
        for _ in range(10):
            x_hat, w_hat = _unit(rng.normal(size=d)), _unit(rng.normal(size=d))
            state = run_circuit(signed_ip_circuit(x_hat, w_hat, topology))
            assert state.amp[0] == pytest.approx((1.0 - w_hat @ x_hat) / 2.0, abs=1e-12)


def test_signed_circuit_matches_dense_oracle():
    rng = np.random.default_rng(4)
    for d in (2, 5, 8, 11):
        x_hat, w_hat = _unit(rng.normal(size=d)), _unit(rng.normal(size=d))
        circuit = signed_ip_circuit(x_hat, w_hat)
        np.testing.assert_allclose(project_unary(dense_simulate(circuit)), run_circuit(circuit).amp, atol=1e-10)


def test_signed_circuit_requires_unit_vectors():
    with pytest.raises(ValidationError):
        signed_ip_circuit(np.array([1.0, 1.0]), np.array([1.0, 0.0]))


def test_exact_estimate_of_self_is_squared_norm():
    x = np.array([1.0, -2.0, 0.5, 3.0])
    assert estimate_ip(x, x, EstimatorMode.exact()).value == pytest.approx(x @ x, rel=1e-12)


def test_exact_estimate_negative_cosine():
    rng = np.random.default_rng(9)
    x_hat, w_hat = _pair_with_cosine(6, -0.5, rng)
    assert estimate_ip(x_hat, w_hat, EstimatorMode.exact()).value == pytest.approx(-0.5, abs=1e-12)


def test_zero_vector_estimates_zero():
    estimate = estimate_ip(np.zeros(3), np.ones(3), EstimatorMode.sampled(seed=1))
    assert estimate.value == 0.0
    assert estimate.shots_used == 0


def test_sampled_estimate_concentrates_near_high_cosine():
    rng = np.random.default_rng(10)
    x_hat, w_hat = _pair_with_cosine(8, 0.96, rng)
    values = np.array([
        estimate_ip(x_hat, w_hat, EstimatorMode.sampled(400, seed=seed)).value for seed in range(200)
    ])
    assert np.mean(np.abs(values - 0.96) <= 0.08) >= 0.95


def test_sampled_estimate_is_deterministic():
    rng = np.random.default_rng(12)
    x, w = rng.normal(size=5), rng.normal(size=5)
    mode = EstimatorMode.sampled(400, seed=3)
    assert estimate_ip(x, w, mode, stream=(1, 2)).value == estimate_ip(x, w, mode, stream=(1, 2)).value


def test_circuit_backend_is_unbiased_enough():
    rng = np.random.default_rng(13)
    x_hat, w_hat = _pair_with_cosine(5, 0.3, rng)
    values = [
        estimate_ip(x_hat, w_hat, EstimatorMode.sampled(400, seed=seed, backend="circuit")).value
        for seed in range(200)
    ]
    # écart type par estimation ~0.05, moyenne sur 200 tirages
    assert np.mean(values) == pytest.approx(0.3, abs=0.03)


def test_square_estimator_returns_magnitude():
    rng = np.random.default_rng(14)
    x_hat, w_hat = _pair_with_cosine(4, -0.6, rng)
    assert estimate_square_ip(x_hat, w_hat, EstimatorMode.exact()).value == pytest.approx(0.6, abs=1e-12)
    sampled = estimate_square_ip(x_hat, w_hat, EstimatorMode.sampled(100_000, seed=2, backend="circuit"))
    assert sampled.value == pytest.approx(0.6, abs=0.01)


def test_exact_matmul_equals_numpy():
    rng = np.random.default_rng(15)
    W, X = rng.normal(size=(3, 6)), rng.normal(size=(4, 6))
    out = estimate_matmul(W, X, EstimatorMode.exact())
    assert out.shape == (4, 3)
    np.testing.assert_array_equal(out, X @ W.T)


def test_exact_matmul_identity():
    X = np.array([[0.3, -1.2, 2.0]])
    np.testing.assert_allclose(estimate_matmul(np.eye(3), X, EstimatorMode.exact()), X, atol=1e-15)


def test_matmul_rejects_shape_mismatch():
    with pytest.raises(ValidationError):
        estimate_matmul(np.ones((2, 3)), np.ones((1, 4)), EstimatorMode.exact())


def test_sampled_matmul_error_bound():
    # l'erreur sur √p̂ est bornée par 3/(2√tirs) dans au moins 99 % des cas
    rng = np.random.default_rng(16)
    W, X = rng.normal(size=(20, 8)), rng.normal(size=(25, 8))
    scale = np.outer(np.linalg.norm(X, axis=1), np.linalg.norm(W, axis=1))
    errors = []
    for counter in range(10):
        out = estimate_matmul(W, X, EstimatorMode.sampled(400, seed=1), call_counter=counter)
        errors.append(np.abs(out - X @ W.T) / (2.0 * scale))
    assert np.mean(np.concatenate(errors).ravel() <= 3.0 / (2.0 * np.sqrt(400))) >= 0.99


def test_sampled_matmul_zero_rows():
    X = np.array([[0.0, 0.0], [1.0, 0.0]])
    out = estimate_matmul(np.eye(2), X, EstimatorMode.sampled(400, seed=0))
    np.testing.assert_array_equal(out[0], [0.0, 0.0])
    assert np.all(np.isfinite(out))


def test_sampled_error_shrinks_as_inverse_square_root():
    x_hat, w_hat = np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
    W = np.tile(w_hat, (4000, 1))
    shots = np.array([10 ** 2, 10 ** 3, 10 ** 4, 10 ** 5, 10 ** 6])
    stds = [estimate_matmul(W, x_hat[None, :], EstimatorMode.sampled(int(s), seed=5)).std() for s in shots]
    slope, _ = np.polyfit(np.log(shots), np.log(stds), 1)
    assert slope == pytest.approx(-0.5, abs=0.05)


@pytest.mark.parametrize("cosine", [-0.9, -0.3, 0.0, 0.5, 0.99])
def test_square_root_estimate_bias_at_high_shot_count(cosine):
    rng = np.random.default_rng(30)
    x_hat, w_hat = _pair_with_cosine(4, cosine, rng)
    values = estimate_matmul(np.tile(w_hat, (200, 1)), x_hat[None, :], EstimatorMode.sampled(10 ** 5, seed=2))
    sqrt_p_hat = (1.0 - values.ravel()) / 2.0
    assert abs(sqrt_p_hat.mean() - (1.0 - cosine) / 2.0) < 0.005


def test_square_root_estimate_bias_on_circuit_backend():
    rng = np.random.default_rng(31)
    x_hat, w_hat = _pair_with_cosine(4, 0.4, rng)
    values = [estimate_ip(x_hat, w_hat, EstimatorMode.sampled(10 ** 5, seed=s, backend="circuit")).value
              for s in range(20)]
    sqrt_p_hat = (1.0 - np.array(values)) / 2.0
    assert abs(sqrt_p_hat.mean() - 0.3) < 0.005


def test_bernoulli_marginal_spread_at_400_shots():
    x_hat, w_hat = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    W = np.tile(w_hat, (4000, 1))
    values = estimate_matmul(W, x_hat[None, :], EstimatorMode.sampled(400, seed=8)).ravel()
    p_hat = ((1.0 - values) / 2.0) ** 2
    assert p_hat.std() <= 0.025


def test_circuit_and_closed_form_agree_in_distribution():
    rng = np.random.default_rng(17)
    x_hat, w_hat = _pair_with_cosine(4, -0.2, rng)
    closed = [estimate_ip(x_hat, w_hat, EstimatorMode.sampled(400, seed=s)).value for s in range(300)]
    circuit = [estimate_ip(x_hat, w_hat, EstimatorMode.sampled(400, seed=s, backend="circuit")).value
               for s in range(300)]
    assert np.mean(closed) == pytest.approx(np.mean(circuit), abs=0.02)
    assert np.std(closed) == pytest.approx(np.std(circuit), rel=0.2)


def test_matvec_exact_and_sampled():
    rng = np.random.default_rng(18)
    W, x = rng.normal(size=(3, 5)), rng.normal(size=5)
    np.testing.assert_array_equal(estimate_matvec(W, x, EstimatorMode.exact()), W @ x)
    sampled = estimate_matvec(W, x, EstimatorMode.sampled(100_000, seed=4))
    np.testing.assert_allclose(sampled, W @ x, atol=0.05 * np.linalg.norm(x) * np.linalg.norm(W, axis=1).max())


def test_mode_labels():
    assert EstimatorMode.exact().label() == "exact"
    assert EstimatorMode.sampled(400).label() == "sampled(400)"
    assert EstimatorMode.sampled(400, seed=1).with_seed(9).seed == 9


def test_mode_defaults_follow_settings(app_settings):
    app_settings(SIM_DEFAULT_SHOTS=123, SIM_ESTIMATOR_BACKEND="circuit", SIM_DEFAULT_TOPOLOGY="parallel")
    mode = EstimatorMode.sampled(seed=1)
    assert (mode.n_shots, mode.backend, mode.topology) == (123, "circuit", LoaderKind.PARALLEL)
    assert EstimatorMode.sampled(400, backend="closed_form").backend == "closed_form"
    rng = np.random.default_rng(20)
    x_hat, w_hat = _unit(rng.normal(size=8)), _unit(rng.normal(size=8))
    assert signed_ip_circuit(x_hat, w_hat) == signed_ip_circuit(x_hat, w_hat, LoaderTopology.build("parallel", 8))
    assert estimate_ip(x_hat, w_hat, mode).shots_used == 123


@pytest.mark.parametrize("backend", ["closed_form", "circuit"])
def test_single_dimension_keeps_sign(backend):
    mode = EstimatorMode.sampled(400, seed=3, backend=backend)
    for x, w in (([1.0], [-1.0]), ([-2.0], [3.0]), ([-2.0], [-0.5])):
        expected = x[0] * w[0]
        assert estimate_ip(np.array(x), np.array(w), EstimatorMode.exact()).value == pytest.approx(expected)
        assert estimate_ip(np.array(x), np.array(w), mode).value == pytest.approx(expected, abs=1e-12)
    out = estimate_matmul(np.array([[-1.0], [2.0]]), np.array([[3.0]]), mode)
    np.testing.assert_allclose(out, [[-3.0, 6.0]], atol=1e-12)


@pytest.mark.parametrize("backend", ["closed_form", "circuit"])
def test_matmul_entries_use_their_own_seed(backend):
    rng = np.random.default_rng(19)
    W, X = rng.normal(size=(3, 4)), rng.normal(size=(2, 4))
    mode = EstimatorMode.sampled(400, seed=6, backend=backend)
    out = estimate_matmul(W, X, mode, call_counter=2)
    for b in range(2):
        for j in range(3):
            single = estimate_ip(X[b], W[j], mode, stream=(2, j, b)).value
            assert out[b, j] == pytest.approx(single, abs=1e-12)
    # modifier un exemple ne change pas les tirs des autres
    changed = X.copy()
    changed[0] *= -3.0
    np.testing.assert_array_equal(estimate_matmul(W, changed, mode, call_counter=2)[1], out[1])


def test_step_counts():
    assert quantum_step_count(1024, 400) == 7600
    assert quantum_step_count(2, 400) == 400
    assert classical_step_count(2) == 2
    with pytest.raises(ValidationError):
        quantum_step_count(1, 400)


def test_crossover_point():
    n = crossover_point(400)
    assert 9000 <= n <= 12000
    assert n == 10801
    assert quantum_step_count(n, 400) < classical_step_count(n)
    assert quantum_step_count(n - 1, 400) >= classical_step_count(n - 1)


def test_crossover_shrinks_with_fewer_shots():
    assert crossover_point(100) == 2301
    assert crossover_point(100) < crossover_point(400)
