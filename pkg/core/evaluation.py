#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Évaluation des modèles

Métriques de classification (AUC par statistique de rang, précision, matrice de
confusion), comparaison du coût quantique et classique des produits scalaires,
et figures SVG des historiques et des mesures de passage à l'échelle.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from core.estimators import DEFAULT_SHOTS, classical_step_count, crossover_point, quantum_step_count  # noqa: E402
from core.qnn import classify  # noqa: E402
from utils.error_handler import FileSystemError, ValidationError  # noqa: E402

# Configuration du logging
logger = logging.getLogger(__name__)


def _binary_labels(labels: np.ndarray, size: int) -> np.ndarray:
    labels = np.asarray(labels).ravel().astype(int)
    if labels.size != size:
        raise ValidationError(f"{labels.size} étiquettes pour {size} scores", field_name="labels")
    if not np.isin(labels, (0, 1)).all():
        raise ValidationError("Les étiquettes doivent être binaires", field_name="labels")
    return labels


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """
    Aire sous la courbe ROC par la statistique de Mann-Whitney.

    Les rangs sont moyennés sur les ex aequo, ce qui compte chaque paire à égalité pour 1/2.

    Args:
        scores (np.ndarray): Score de la classe 1 par échantillon
        labels (np.ndarray): Étiquettes 0/1

    Returns:
        float: AUC dans [0, 1]
    """
    scores = np.asarray(scores, dtype=float).ravel()
    labels = _binary_labels(labels, scores.size)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("L'AUC exige des échantillons des deux classes", field_name="labels")
    if not np.all(np.isfinite(scores)):
        raise ValidationError("Scores non finis", field_name="scores")

    ranks = pd.Series(scores).rank(method="average").to_numpy()
    u_statistic = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u_statistic / (n_pos * n_neg))


def acc_and_confusion(predictions: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Précision et matrice de confusion (lignes : vraie classe, colonnes : prédite).

    Args:
        predictions (np.ndarray): Classes prédites (N,) ou probabilités (N, 2) décidées par argmax
        labels (np.ndarray): Étiquettes 0/1

    Returns:
        Tuple[float, np.ndarray]: (précision, matrice 2×2)
    """
    predictions = np.asarray(predictions)
    if predictions.ndim == 2:
        predictions = classify(predictions)
    predictions = predictions.ravel().astype(int)
    labels = _binary_labels(labels, predictions.size)
    if predictions.size == 0:
        raise ValidationError("Aucune prédiction à évaluer", field_name="predictions")

    confusion = np.zeros((2, 2), dtype=int)
    np.add.at(confusion, (labels, predictions), 1)
    return float(np.trace(confusion) / predictions.size), confusion


@dataclass
class MetricsReport:
    """Métriques d'un split : AUC, précision et matrice de confusion."""
    auc: float
    acc: float
    confusion: np.ndarray
    split: str
    metadata: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def evaluate(cls, proba: np.ndarray, labels: np.ndarray, split: str,
                 metadata: Optional[Dict[str, Any]] = None) -> "MetricsReport":
        """
        Calcule le rapport à partir des probabilités (N, 2).

        Si un seul label est présent, l'AUC est indéfinie (NaN).
        """
        proba = np.asarray(proba, dtype=float)
        acc, confusion = acc_and_confusion(proba, labels)
        try:
            value = auc(proba[:, 1], labels)
        except ValidationError as e:
            logger.warning(f"AUC indéfinie sur {split}: {e.message}")
            value = float("nan")
        return cls(value, acc, confusion, split, dict(metadata or {}))

    @property
    def n_samples(self) -> int:
        return int(self.confusion.sum())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "split": self.split,
            "auc": None if np.isnan(self.auc) else self.auc,
            "acc": self.acc,
            "confusion": self.confusion.tolist(),
            "n_samples": self.n_samples,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MetricsReport":
        value = data.get("auc")
        return cls(float("nan") if value is None else float(value), float(data["acc"]),
                   np.asarray(data["confusion"], dtype=int), data["split"], data.get("metadata", {}))


def continuous_crossover(n_shots: int = DEFAULT_SHOTS) -> int:
    """Plus petit entier n tel que n_shots·(2·log₂ n − 1) < n."""
    if n_shots < 1:
        raise ValidationError("n_shots doit être >= 1", field_name="n_shots", field_value=n_shots)
    high = 2
    while high <= n_shots * (2 * np.log2(high) - 1):
        high *= 2
    n = np.arange(2, high + 1)
    return int(n[np.argmax(n > n_shots * (2 * np.log2(n) - 1))])


def crossover_report(n_shots: int = DEFAULT_SHOTS,
                     n_values: Optional[Sequence[int]] = None) -> Tuple[pd.DataFrame, Dict[str, int]]:
    """
    Compare les pas classiques (n) et quantiques par produit scalaire de dimension n.

    Args:
        n_shots (int): Tirs par estimation
        n_values (Optional[Sequence[int]]): Dimensions tabulées

    Returns:
        Tuple[pd.DataFrame, Dict[str, int]]: Tableau (n, classical, quantum, quantum_continuous,
        quantum_faster) et points de croisement entier et continu
    """
    crossover = crossover_point(n_shots)
    continuous = continuous_crossover(n_shots)
    if n_values is None:
        n_values = sorted(n for n in {10, 100, 784, 1000, 4096, 9801, 10000, 16384, 100000, 1000000,
                                      crossover - 1, crossover, continuous} if n >= 2)
    rows = []
    for n in n_values:
        quantum = quantum_step_count(int(n), n_shots)
        classical = classical_step_count(int(n))
        rows.append({
            "n": int(n),
            "classical": classical,
            "quantum": quantum,
            "quantum_continuous": float(n_shots * (2 * np.log2(n) - 1)),
            "quantum_faster": bool(quantum < classical),
        })
    logger.info(f"Croisement pour {n_shots} tirs: n={crossover} (formule continue: n={continuous})")
    table = pd.DataFrame(rows, columns=["n", "classical", "quantum", "quantum_continuous", "quantum_faster"])
    return table, {"n_shots": int(n_shots), "crossover": crossover, "crossover_continuous": continuous}


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------

def _save(fig, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", bbox_inches="tight", metadata={"Date": None})
    except OSError as e:
        raise FileSystemError(f"Écriture de la figure impossible: {e}", file_path=str(path),
                              operation="write", original_exception=e)
    finally:
        plt.close(fig)
    logger.debug(f"Figure écrite: {path}")
    return path


def plot_history(history: pd.DataFrame, path: Union[str, Path], title: str = "") -> Path:
    """Perte et précisions par époque."""
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(10, 4))
    ax_loss.plot(history["epoch"], history["loss"], marker="o")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_acc.plot(history["epoch"], history["train_acc"], marker="o", label="train")
    if history["test_acc"].notna().any():
        ax_acc.plot(history["epoch"], history["test_acc"], marker="s", label="test")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("accuracy")
    ax_acc.legend()
    if title:
        fig.suptitle(title)
    return _save(fig, path)


def plot_scaling(table: pd.DataFrame, path: Union[str, Path], slope: Optional[float] = None) -> Path:
    """Temps d'entraînement et nombre de rotations en fonction de n (log-log)."""
    fig, (ax_time, ax_ops) = plt.subplots(1, 2, figsize=(10, 4))
    ax_time.loglog(table["n"], table["wall_time"], marker="o")
    ax_time.set_xlabel("n")
    ax_time.set_ylabel("wall time (s)")
    if slope is not None and np.isfinite(slope):
        ax_time.set_title(f"slope {slope:.2f}")
    ax_ops.loglog(table["n"], table["op_count"], marker="o", label="rotations")
    n = table["n"].to_numpy(float)
    ax_ops.loglog(n, table["op_count"].iloc[0] * (n / n[0]) ** 2, linestyle="--", label="n²")
    ax_ops.set_xlabel("n")
    ax_ops.legend()
    return _save(fig, path)


def plot_crossover(table: pd.DataFrame, path: Union[str, Path], crossover: Optional[int] = None) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(table["n"], table["classical"], label="classical")
    ax.loglog(table["n"], table["quantum"], drawstyle="steps-post", label="quantum")
    if crossover is not None:
        ax.axvline(crossover, color="grey", linestyle=":")
    ax.set_xlabel("n")
    ax.set_ylabel("steps")
    ax.legend()
    return _save(fig, path)
