#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Réseaux de neurones orthogonaux

Entraînement QPC (descente de gradient directement sur les angles des pyramides,
O(n²) par couche) et algorithme classique SVB (poids explicites maintenus
quasi orthogonaux par écrêtage des valeurs singulières).
"""

import logging
import time
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from tqdm import tqdm

from core.estimators import EstimatorMode
from core.pyramid import (
    PyramidLayer, RotationCounter, angles_to_matrix, estimate_layer_output, forward as pyramid_forward,
)
from core.qnn import classify, one_hot, sigmoid, cross_entropy
from utils.error_handler import ValidationError

# Configuration du logging
logger = logging.getLogger(__name__)


class OrthoTrainConfig(BaseModel):
    """Hyperparamètres communs à QPC et SVB."""
    epochs: int = Field(30, ge=1)
    batch_size: int = Field(10, ge=1)
    learning_rate: float = Field(0.05, ge=0.0)
    seed: int = Field(0, ge=0)
    init_scale: float = Field(np.pi / 4, gt=0.0)
    svb_epsilon: Optional[float] = Field(0.01, gt=0.0)
    svb_clip_every: int = Field(1, ge=1)
    progress: bool = False


@dataclass
class OrthoNet:
    """Pile de couches pyramidales séparées par des sigmoïdes."""
    layers: List[PyramidLayer]

    def __post_init__(self):
        if not self.layers:
            raise ValidationError("Un réseau orthogonal doit avoir au moins une couche", field_name="layers")
        for first, second in zip(self.layers[:-1], self.layers[1:]):
            if first.n_out != second.n_in:
                raise ValidationError(f"Dimensions enchaînées incohérentes: {first.n_out} -> {second.n_in}",
                                      field_name="layers")

    @classmethod
    def random(cls, sizes: Sequence[int], rng: np.random.Generator,
               scale: float = np.pi / 4) -> "OrthoNet":
        """
        Réseau de tailles [n0, n1, ..., nL], angles uniformes dans [−scale, scale].

        Args:
            sizes (Sequence[int]): Tailles des couches, par ex. [8, 2] ou [32, 16, 2]
            rng (np.random.Generator): Générateur
            scale (float): Demi-largeur de l'intervalle d'initialisation

        Returns:
            OrthoNet: Réseau
        """
        if len(sizes) < 2:
            raise ValidationError(f"Architecture invalide: {list(sizes)}", field_name="sizes")
        return cls([PyramidLayer.random(i, o, rng, scale) for i, o in zip(sizes[:-1], sizes[1:])])

    @property
    def sizes(self) -> List[int]:
        return [self.layers[0].n_in] + [layer.n_out for layer in self.layers]

    def copy(self) -> "OrthoNet":
        return OrthoNet([layer.copy() for layer in self.layers])

    def param_count(self) -> int:
        return sum(len(layer.theta) for layer in self.layers)

    def matrices(self) -> List[np.ndarray]:
        return [angles_to_matrix(layer) for layer in self.layers]

    def to_dict(self) -> dict:
        return {"sizes": self.sizes, "layers": [layer.to_dict() for layer in self.layers]}

    @classmethod
    def from_dict(cls, data: dict) -> "OrthoNet":
        return cls([PyramidLayer.from_dict(layer) for layer in data["layers"]])


@dataclass
class ForwardCache:
    """Activations par couche et valeurs de chaque paire avant chaque porte."""
    activations: List[np.ndarray]
    pre_gate: List[np.ndarray]


def _as_batch(X: np.ndarray, n_in: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != n_in:
        raise ValidationError(f"Entrée de forme {X.shape} pour une entrée de dimension {n_in}",
                              field_name="x")
    return X


def _layer_forward_cached(layer: PyramidLayer, A: np.ndarray,
                          counter: Optional[RotationCounter]) -> Tuple[np.ndarray, np.ndarray]:
    work = A.T.copy()
    pre = np.empty((len(layer.gate_plan), 2, work.shape[1]))
    for g, ((a, b, _), theta) in enumerate(zip(layer.gate_plan, layer.theta)):
        c, s = np.cos(theta), np.sin(theta)
        va, vb = work[a].copy(), work[b].copy()
        pre[g, 0], pre[g, 1] = va, vb
        work[a] = c * va - s * vb
        work[b] = s * va + c * vb
    if counter is not None:
        counter.add(len(layer.gate_plan) * work.shape[1])
    z = (work[:layer.n_out] * layer.row_signs[:, None]).T
    return z, pre


def qpc_forward(net: OrthoNet, X: np.ndarray, counter: Optional[RotationCounter] = None) -> ForwardCache:
    """
    Passe avant : pyramide puis sigmoïde à chaque couche, avec mise en cache des
    valeurs de chaque paire de fils avant chaque porte.

    La pyramide étant linéaire, normaliser l'entrée puis réappliquer sa norme donne
    le même résultat qu'appliquer la pyramide directement.

    Args:
        net (OrthoNet): Réseau
        X (np.ndarray): Entrée (n,) ou lot (lot, n)
        counter (Optional[RotationCounter]): Compteur de rotations

    Returns:
        ForwardCache: Cache pour la passe arrière
    """
    activations = [_as_batch(X, net.layers[0].n_in)]
    pre_gate = []
    for layer in net.layers:
        z, pre = _layer_forward_cached(layer, activations[-1], counter)
        activations.append(sigmoid(z))
        pre_gate.append(pre)
    return ForwardCache(activations, pre_gate)


def qpc_gradients(net: OrthoNet, cache: Optional[ForwardCache], Y: np.ndarray,
                  counter: Optional[RotationCounter] = None) -> List[np.ndarray]:
    """
    Gradient de la perte par rapport aux angles, en O(1) par porte.

    Pour une porte sur (a, b) de sorties (y_a, y_b) : dθ = −δ_a·y_b + δ_b·y_a,
    et l'erreur remonte par la rotation transposée.

    Returns:
        List[np.ndarray]: Gradient moyen sur le lot, par couche
    """
    if cache is None or len(cache.pre_gate) != len(net.layers):
        raise ValidationError("Cache de passe avant absent ou incohérent", field_name="cache")
    Y = np.asarray(Y, dtype=float)
    batch = cache.activations[0].shape[0]
    delta = cache.activations[-1] - Y
    grads: List[np.ndarray] = [None] * len(net.layers)

    for l in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[l]
        pre = cache.pre_gate[l]
        g = np.zeros((layer.n_in, batch))
        g[:layer.n_out] = (delta * layer.row_signs).T
        grad = np.zeros(len(layer.theta))
        for k in range(len(layer.gate_plan) - 1, -1, -1):
            a, b, _ = layer.gate_plan[k]
            c, s = np.cos(layer.theta[k]), np.sin(layer.theta[k])
            va, vb = pre[k, 0], pre[k, 1]
            ya, yb = c * va - s * vb, s * va + c * vb
            ga, gb = g[a].copy(), g[b]
            grad[k] = np.sum(-ga * yb + gb * ya)
            g[a] = c * ga + s * gb
            g[b] = -s * ga + c * gb
        if counter is not None:
            counter.add(len(layer.gate_plan) * batch)
        grads[l] = grad / batch
        if l > 0:
            a_prev = cache.activations[l]
            delta = g.T * a_prev * (1.0 - a_prev)
    return grads


def qpc_backward(net: OrthoNet, cache: ForwardCache, Y: np.ndarray, learning_rate: float,
                 counter: Optional[RotationCounter] = None) -> OrthoNet:
    """Pas de SGD sur les angles ; renvoie un nouveau réseau."""
    grads = qpc_gradients(net, cache, Y, counter)
    updated = net.copy()
    for layer, grad in zip(updated.layers, grads):
        layer.theta -= learning_rate * grad
    return updated


def qpc_loss(net: OrthoNet, X: np.ndarray, Y: np.ndarray) -> float:
    return cross_entropy(qpc_forward(net, X).activations[-1], Y)


def _normalized(output: np.ndarray) -> np.ndarray:
    return output / output.sum(axis=1, keepdims=True)


def infer(net: OrthoNet, X: np.ndarray, mode: Optional[EstimatorMode] = None,
          call_counter: int = 0) -> np.ndarray:
    """
    Probabilités de classe, avec sorties de couche exactes ou estimées par tirs.

    Args:
        net (OrthoNet): Réseau
        X (np.ndarray): Lot d'entrées
        mode (Optional[EstimatorMode]): Mode d'estimation (exact par défaut)
        call_counter (int): Compteur d'appel (graine des tirs)

    Returns:
        np.ndarray: Probabilités (lot, 2)
    """
    mode = mode or EstimatorMode.exact()
    A = _as_batch(X, net.layers[0].n_in)
    for l, layer in enumerate(net.layers):
        if mode.is_exact:
            z = pyramid_forward(layer, A)
        else:
            z = np.stack([
                estimate_layer_output(layer, A[b], mode, stream=(call_counter, l, b))
                for b in range(A.shape[0])
            ])
        A = sigmoid(z)
    return _normalized(A)


def _history_row(epoch: int, predict, X, Y, labels, X_test, y_test) -> dict:
    output = predict(X)
    row = {
        "epoch": epoch,
        "loss": cross_entropy(output, Y),
        "train_acc": float(np.mean(classify(_normalized(output)) == labels)),
        "test_acc": np.nan,
    }
    if X_test is not None:
        row["test_acc"] = float(np.mean(classify(_normalized(predict(X_test))) == np.asarray(y_test)))
    return row


def qpc_train(net: OrthoNet, X: np.ndarray, labels: np.ndarray, config: OrthoTrainConfig,
              X_test: Optional[np.ndarray] = None, y_test: Optional[np.ndarray] = None,
              counter: Optional[RotationCounter] = None) -> Tuple[OrthoNet, pd.DataFrame]:
    """
    Entraînement QPC par mini-lots mélangés, déterministe pour une graine donnée.

    Returns:
        Tuple[OrthoNet, pd.DataFrame]: Réseau entraîné et historique par époque
    """
    X = _as_batch(X, net.layers[0].n_in)
    labels = np.asarray(labels, dtype=int)
    Y = one_hot(labels, net.layers[-1].n_out)
    rng = np.random.default_rng(config.seed)
    history = []

    logger.info(f"Entraînement QPC {net.sizes} ({net.param_count()} angles, {config.epochs} époques)")
    for epoch in tqdm(range(1, config.epochs + 1), desc="QPC", disable=not config.progress):
        order = rng.permutation(len(X))
        for start in range(0, len(X), config.batch_size):
            idx = order[start:start + config.batch_size]
            cache = qpc_forward(net, X[idx], counter)
            net = qpc_backward(net, cache, Y[idx], config.learning_rate, counter)
        history.append(_history_row(epoch, lambda A: qpc_forward(net, A).activations[-1],
                                    X, Y, labels, X_test, y_test))
    return net, pd.DataFrame(history, columns=["epoch", "loss", "train_acc", "test_acc"])


# ---------------------------------------------------------------------------
# Algorithme SVB
# ---------------------------------------------------------------------------

@dataclass
class SvbNet:
    """Mêmes formes qu'un OrthoNet, avec des matrices de poids explicites."""
    weights: List[np.ndarray]

    @classmethod
    def from_ortho(cls, net: OrthoNet) -> "SvbNet":
        return cls([W.copy() for W in net.matrices()])

    @property
    def sizes(self) -> List[int]:
        return [self.weights[0].shape[1]] + [W.shape[0] for W in self.weights]

    def copy(self) -> "SvbNet":
        return SvbNet([W.copy() for W in self.weights])

    def forward(self, X: np.ndarray) -> List[np.ndarray]:
        activations = [_as_batch(X, self.weights[0].shape[1])]
        for W in self.weights:
            activations.append(sigmoid(activations[-1] @ W.T))
        return activations

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _normalized(self.forward(X)[-1])

    def to_dict(self) -> dict:
        return {"sizes": self.sizes, "weights": [W.tolist() for W in self.weights]}


def svb_clip(W: np.ndarray, epsilon: float) -> np.ndarray:
    """
    Ramène les valeurs singulières de W dans [1/(1+ε), 1+ε].
    """
    U, S, Vt = np.linalg.svd(W, full_matrices=False)
    S = np.clip(S, 1.0 / (1.0 + epsilon), 1.0 + epsilon)
    return (U * S) @ Vt


def svb_step(net: SvbNet, X: np.ndarray, Y: np.ndarray, learning_rate: float) -> SvbNet:
    """Pas de SGD classique sur les poids explicites."""
    activations = net.forward(X)
    batch = activations[0].shape[0]
    delta = activations[-1] - Y
    updated = net.copy()
    for l in range(len(net.weights) - 1, -1, -1):
        grad = delta.T @ activations[l] / batch
        if l > 0:
            delta = (delta @ net.weights[l]) * activations[l] * (1.0 - activations[l])
        updated.weights[l] -= learning_rate * grad
    return updated


def _clip_all(net: SvbNet, epsilon: float, rng: np.random.Generator, scale: float) -> SvbNet:
    for l, W in enumerate(net.weights):
        try:
            net.weights[l] = svb_clip(W, epsilon)
        except np.linalg.LinAlgError as e:
            logger.warning(f"SVD impossible pour la couche {l} ({e}), réinitialisation aléatoire")
            n_out, n_in = W.shape
            net.weights[l] = angles_to_matrix(PyramidLayer.random(n_in, n_out, rng, scale))
    return net


def svb_train(net: SvbNet, X: np.ndarray, labels: np.ndarray, config: OrthoTrainConfig,
              X_test: Optional[np.ndarray] = None, y_test: Optional[np.ndarray] = None) -> Tuple[SvbNet, pd.DataFrame]:
    """
    Entraînement SVB : SGD sur les poids, écrêtage SVD toutes les svb_clip_every étapes.

    Sans epsilon (None), aucun écrêtage : SGD simple sur un perceptron sans biais.

    Returns:
        Tuple[SvbNet, pd.DataFrame]: Réseau entraîné et historique par époque
    """
    X = _as_batch(X, net.weights[0].shape[1])
    labels = np.asarray(labels, dtype=int)
    Y = one_hot(labels, net.weights[-1].shape[0])
    rng = np.random.default_rng(config.seed)
    history = []
    step = 0

    logger.info(f"Entraînement SVB {net.sizes} (epsilon={config.svb_epsilon}, "
                f"écrêtage toutes les {config.svb_clip_every} étapes)")
    for epoch in tqdm(range(1, config.epochs + 1), desc="SVB", disable=not config.progress):
        order = rng.permutation(len(X))
        for start in range(0, len(X), config.batch_size):
            idx = order[start:start + config.batch_size]
            net = svb_step(net, X[idx], Y[idx], config.learning_rate)
            step += 1
            if config.svb_epsilon is not None and step % config.svb_clip_every == 0:
                net = _clip_all(net, config.svb_epsilon, rng, config.init_scale)
        history.append(_history_row(epoch, lambda A: net.forward(A)[-1], X, Y, labels, X_test, y_test))
    return net, pd.DataFrame(history, columns=["epoch", "loss", "train_acc", "test_acc"])


# ---------------------------------------------------------------------------
# Banc de mesure du passage à l'échelle
# ---------------------------------------------------------------------------

def scaling_benchmark(n_list: Sequence[int], epochs: int = 1, n_samples: int = 20,
                      batch_size: int = 10, seed: int = 0) -> Tuple[pd.DataFrame, float]:
    """
    Entraîne des réseaux [n, n, 2] et mesure temps et nombre de rotations.

    Args:
        n_list (Sequence[int]): Valeurs de n (>= 2)
        epochs (int): Époques par réseau
        n_samples (int): Taille du jeu synthétique
        batch_size (int): Taille de mini-lot
        seed (int): Graine

    Returns:
        Tuple[pd.DataFrame, float]: Tableau (n, params, op_count, ops_per_sample, wall_time)
        et pente log-log du temps en fonction de n
    """
    rows = []
    config = OrthoTrainConfig(epochs=epochs, batch_size=batch_size, seed=seed)
    for n in n_list:
        if n < 2:
            raise ValidationError("n doit être >= 2", field_name="n", field_value=n)
        rng = np.random.default_rng([seed, n])
        X = rng.normal(size=(n_samples, n))
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        labels = rng.integers(0, 2, size=n_samples)
        net = OrthoNet.random([n, n, 2], rng)
        counter = RotationCounter()

        start = time.perf_counter()
        qpc_train(net, X, labels, config, counter=counter)
        wall_time = time.perf_counter() - start

        rows.append({
            "n": int(n),
            "params": net.param_count(),
            "op_count": counter.count,
            "ops_per_sample": counter.count / (epochs * n_samples),
            "wall_time": wall_time,
        })
        logger.info(f"n={n}: {counter.count} rotations en {wall_time:.3f}s")

    table = pd.DataFrame(rows, columns=["n", "params", "op_count", "ops_per_sample", "wall_time"])
    return table, _loglog_slope(table)


def _loglog_slope(table: pd.DataFrame) -> float:
    fit = table[(table["n"] >= 32) & (table["wall_time"] > 0)]
    if len(fit) < 2:
        fit = table[table["wall_time"] > 0]
    if len(fit) < 2:
        return float("nan")
    slope, _ = np.polyfit(np.log(fit["n"].to_numpy(float)), np.log(fit["wall_time"].to_numpy(float)), 1)
    return float(slope)
