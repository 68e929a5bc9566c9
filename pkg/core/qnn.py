#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Réseaux de neurones assistés par circuits quantiques (qNN)

Perceptron multicouche à activations sigmoïdes dont les produits matriciels
avant (W·a) et arrière (Wᵀ·δ) passent par l'estimateur de produits scalaires.
Un chemin classique de référence (ClassicalMlp) sert aux lignes CLA et au
contrôle d'équivalence en mode exact.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import orjson
import pandas as pd
from pydantic import BaseModel, Field
from tqdm import tqdm

from core.estimators import EstimatorMode, estimate_matmul
from utils.error_handler import FileSystemError, ValidationError

# Configuration du logging
logger = logging.getLogger(__name__)

LOSS_EPSILON = 1e-12


class TrainConfig(BaseModel):
    """Hyperparamètres d'entraînement."""
    epochs: int = Field(30, ge=1)
    batch_size: int = Field(10, ge=1)
    learning_rate: float = Field(0.05, ge=0.0)
    mode: EstimatorMode = Field(default_factory=EstimatorMode.exact)
    seed: int = Field(0, ge=0)
    loss: str = Field("cross_entropy", pattern="^cross_entropy$")
    progress: bool = False


def sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def one_hot(labels: np.ndarray, n_classes: int = 2) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


@dataclass
class Mlp:
    """
    Perceptron multicouche : weights[l] de forme (sizes[l+1], sizes[l]), biases[l] de taille sizes[l+1].
    """
    layer_sizes: List[int]
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def __post_init__(self):
        self.layer_sizes = [int(s) for s in self.layer_sizes]
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ValidationError(f"Architecture invalide: {self.layer_sizes}", field_name="layer_sizes")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValidationError("Nombre de couches incohérent", field_name="weights")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_sizes[l + 1], self.layer_sizes[l])
            if W.shape != shape or b.shape != (shape[0],):
                raise ValidationError(f"Couche {l}: W{W.shape}, b{b.shape}, attendu W{shape}",
                                      field_name="weights")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValidationError(f"Paramètres non finis dans la couche {l}", field_name="weights")

    @classmethod
    def init(cls, layer_sizes: Sequence[int], rng: np.random.Generator) -> "Mlp":
        """
        Initialisation uniforme dans ±1/√fan_in, biais nuls.
        """
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(list(layer_sizes), weights, biases)

    @classmethod
    def zeros(cls, layer_sizes: Sequence[int]) -> "Mlp":
        weights = [np.zeros((o, i)) for i, o in zip(layer_sizes[:-1], layer_sizes[1:])]
        return cls(list(layer_sizes), weights, [np.zeros(o) for o in layer_sizes[1:]])

    def copy(self) -> "Mlp":
        return Mlp(list(self.layer_sizes), [W.copy() for W in self.weights], [b.copy() for b in self.biases])

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def to_dict(self) -> dict:
        return {
            "layer_sizes": self.layer_sizes,
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Mlp":
        return cls(
            data["layer_sizes"],
            [np.asarray(W, dtype=float) for W in data["weights"]],
            [np.asarray(b, dtype=float) for b in data["biases"]],
        )


def _as_batch(mlp: Mlp, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != mlp.layer_sizes[0]:
        raise ValidationError(f"Entrée de forme {X.shape} pour une couche d'entrée {mlp.layer_sizes[0]}",
                              field_name="x")
    return X


def _forward_key(step: int, layer: int, n_layers: int) -> int:
    return step * 2 * n_layers + layer


def _backward_key(step: int, layer: int, n_layers: int) -> int:
    return step * 2 * n_layers + n_layers + layer


def forward(mlp: Mlp, X: np.ndarray, mode: EstimatorMode, call_counter: int = 0) -> List[np.ndarray]:
    """
    Passe avant : z = estimate_matmul(W, a) + b puis a = sigmoid(z) à chaque couche.

    Args:
        mlp (Mlp): Réseau
        X (np.ndarray): Entrée (n,) ou lot (lot, n)
        mode (EstimatorMode): Mode d'estimation des produits
        call_counter (int): Compteur d'appel (graine des tirs)

    Returns:
        List[np.ndarray]: Activations [a0 = X, a1, ..., aL]
    """
    activations = [_as_batch(mlp, X)]
    for l, (W, b) in enumerate(zip(mlp.weights, mlp.biases)):
        z = estimate_matmul(W, activations[-1], mode, _forward_key(call_counter, l, mlp.n_layers)) + b
        activations.append(sigmoid(z))
    return activations


def loss(mlp: Mlp, X: np.ndarray, Y: np.ndarray, mode: Optional[EstimatorMode] = None) -> float:
    """Entropie croisée sigmoïde par nœud, moyennée sur le lot."""
    output = forward(mlp, X, mode or EstimatorMode.exact())[-1]
    return cross_entropy(output, Y)


def cross_entropy(output: np.ndarray, Y: np.ndarray) -> float:
    a = np.clip(output, LOSS_EPSILON, 1.0 - LOSS_EPSILON)
    return float(-np.mean(np.sum(Y * np.log(a) + (1.0 - Y) * np.log(1.0 - a), axis=1)))


def gradients(mlp: Mlp, X: np.ndarray, Y: np.ndarray, mode: EstimatorMode,
              call_counter: int = 0) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """
    Gradients moyens sur le lot ; les produits Wᵀ·δ passent par l'estimateur.

    Returns:
        Tuple[List[np.ndarray], List[np.ndarray]]: (dW par couche, db par couche)
    """
    activations = forward(mlp, X, mode, call_counter)
    Y = np.asarray(Y, dtype=float)
    batch = activations[0].shape[0]
    delta = activations[-1] - Y
    grads_W: List[np.ndarray] = [None] * mlp.n_layers
    grads_b: List[np.ndarray] = [None] * mlp.n_layers
    for l in range(mlp.n_layers - 1, -1, -1):
        grads_W[l] = delta.T @ activations[l] / batch
        grads_b[l] = delta.sum(axis=0) / batch
        if l > 0:
            back = estimate_matmul(mlp.weights[l].T, delta, mode,
                                   _backward_key(call_counter, l, mlp.n_layers))
            delta = back * activations[l] * (1.0 - activations[l])
    return grads_W, grads_b


def backprop_step(mlp: Mlp, X: np.ndarray, Y: np.ndarray, config: TrainConfig,
                  call_counter: int = 0) -> Mlp:
    """
    Un pas de descente de gradient sur un mini-lot.

    Args:
        mlp (Mlp): Réseau courant (non modifié)
        X (np.ndarray): Mini-lot d'entrées
        Y (np.ndarray): Cibles one-hot
        config (TrainConfig): Hyperparamètres
        call_counter (int): Indice du pas (graine des tirs)

    Returns:
        Mlp: Réseau mis à jour
    """
    if len(X) == 0:
        raise ValidationError("Mini-lot vide", field_name="batch")
    grads_W, grads_b = gradients(mlp, X, Y, config.mode, call_counter)
    updated = mlp.copy()
    for l in range(mlp.n_layers):
        updated.weights[l] -= config.learning_rate * grads_W[l]
        updated.biases[l] -= config.learning_rate * grads_b[l]
    return updated


def predict_proba(mlp: Mlp, X: np.ndarray, mode: Optional[EstimatorMode] = None,
                  call_counter: int = 0) -> np.ndarray:
    """
    Probabilités des deux classes : sorties sigmoïdes normalisées par leur somme.
    """
    output = forward(mlp, X, mode or EstimatorMode.exact(), call_counter)[-1]
    return output / output.sum(axis=1, keepdims=True)


def classify(proba: np.ndarray) -> np.ndarray:
    """Argmax sur les deux nœuds ; égalité attribuée à la classe 0."""
    return np.argmax(proba, axis=1)


def accuracy(mlp: Mlp, X: np.ndarray, labels: np.ndarray, mode: Optional[EstimatorMode] = None) -> float:
    return float(np.mean(classify(predict_proba(mlp, X, mode)) == np.asarray(labels)))


def _history_row(epoch: int, mlp: Mlp, X, Y, labels, X_test, y_test) -> dict:
    row = {
        "epoch": epoch,
        "loss": loss(mlp, X, Y),
        "train_acc": accuracy(mlp, X, labels),
        "test_acc": np.nan,
    }
    if X_test is not None:
        row["test_acc"] = accuracy(mlp, X_test, y_test)
    return row


def train(mlp: Mlp, X: np.ndarray, labels: np.ndarray, config: TrainConfig,
          X_test: Optional[np.ndarray] = None, y_test: Optional[np.ndarray] = None) -> Tuple[Mlp, pd.DataFrame]:
    """
    Entraînement par mini-lots mélangés, déterministe pour une graine donnée.

    L'historique (perte, précision) est évalué en mode exact.

    Args:
        mlp (Mlp): Réseau initial
        X (np.ndarray): Entrées d'entraînement
        labels (np.ndarray): Étiquettes binaires
        config (TrainConfig): Hyperparamètres
        X_test, y_test: Jeu de test optionnel pour l'historique

    Returns:
        Tuple[Mlp, pd.DataFrame]: Réseau entraîné et historique par époque
    """
    X = _as_batch(mlp, X)
    labels = np.asarray(labels, dtype=int)
    Y = one_hot(labels, mlp.layer_sizes[-1])
    rng = np.random.default_rng(config.seed)
    step = 0
    history = []

    logger.info(f"Entraînement qNN {mlp.layer_sizes} ({config.mode.label()}, {config.epochs} époques, "
                f"{len(X)} exemples)")
    for epoch in tqdm(range(1, config.epochs + 1), desc="qNN", disable=not config.progress):
        order = rng.permutation(len(X))
        for start in range(0, len(X), config.batch_size):
            idx = order[start:start + config.batch_size]
            mlp = backprop_step(mlp, X[idx], Y[idx], config, call_counter=step)
            step += 1
        history.append(_history_row(epoch, mlp, X, Y, labels, X_test, y_test))
        logger.debug(f"Époque {epoch}: perte {history[-1]['loss']:.4f}, "
                     f"précision {history[-1]['train_acc']:.4f}")

    return mlp, pd.DataFrame(history, columns=["epoch", "loss", "train_acc", "test_acc"])


class ClassicalMlp:
    """
    Chemin de référence purement classique : mêmes formules, produits numpy directs.
    """

    def __init__(self, mlp: Mlp):
        self.mlp = mlp.copy()

    def forward(self, X: np.ndarray) -> List[np.ndarray]:
        activations = [_as_batch(self.mlp, X)]
        for W, b in zip(self.mlp.weights, self.mlp.biases):
            activations.append(sigmoid(activations[-1] @ W.T + b))
        return activations

    def backprop_step(self, X: np.ndarray, Y: np.ndarray, learning_rate: float) -> None:
        activations = self.forward(X)
        batch = activations[0].shape[0]
        delta = activations[-1] - Y
        updates = []
        for l in range(self.mlp.n_layers - 1, -1, -1):
            updates.append((l, delta.T @ activations[l] / batch, delta.sum(axis=0) / batch))
            if l > 0:
                delta = (delta @ self.mlp.weights[l]) * activations[l] * (1.0 - activations[l])
        for l, dW, db in updates:
            self.mlp.weights[l] = self.mlp.weights[l] - learning_rate * dW
            self.mlp.biases[l] = self.mlp.biases[l] - learning_rate * db

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        output = self.forward(X)[-1]
        return output / output.sum(axis=1, keepdims=True)

    def train(self, X: np.ndarray, labels: np.ndarray, config: TrainConfig,
              X_test: Optional[np.ndarray] = None, y_test: Optional[np.ndarray] = None) -> pd.DataFrame:
        X = _as_batch(self.mlp, X)
        labels = np.asarray(labels, dtype=int)
        Y = one_hot(labels, self.mlp.layer_sizes[-1])
        rng = np.random.default_rng(config.seed)
        history = []
        for epoch in tqdm(range(1, config.epochs + 1), desc="CLA", disable=not config.progress):
            order = rng.permutation(len(X))
            for start in range(0, len(X), config.batch_size):
                idx = order[start:start + config.batch_size]
                self.backprop_step(X[idx], Y[idx], config.learning_rate)
            history.append(_history_row(epoch, self.mlp, X, Y, labels, X_test, y_test))
        return pd.DataFrame(history, columns=["epoch", "loss", "train_acc", "test_acc"])


def save_checkpoint(mlp: Mlp, path: Union[str, Path]) -> Path:
    """Écrit le réseau au format JSON {layer_sizes, weights, biases}."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(orjson.dumps(mlp.to_dict(), option=orjson.OPT_INDENT_2))
    except OSError as e:
        raise FileSystemError(f"Écriture du checkpoint impossible: {e}", file_path=str(path),
                              operation="write", original_exception=e)
    logger.info(f"Checkpoint qNN écrit: {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Mlp:
    path = Path(path)
    try:
        return Mlp.from_dict(orjson.loads(path.read_bytes()))
    except OSError as e:
        raise FileSystemError(f"Lecture du checkpoint impossible: {e}", file_path=str(path),
                              operation="read", original_exception=e)
