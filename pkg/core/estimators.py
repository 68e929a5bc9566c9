#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Estimation de produits scalaires par circuits unaires

Circuits de produit scalaire (carré et signé), estimation exacte ou par tirs,
service de produit matrice-vecteur utilisé par les réseaux qNN et comptage des
pas quantiques et classiques.
"""

import logging
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from core.loaders import LoaderKind, LoaderTopology, adjoint_loader, build_loader, compute_angles
from core.unary_core import (
    Circuit, Gate, postselect_unary, run_circuit, sample_outcomes,
)
from utils.config_manager import get_config
from utils.error_handler import ValidationError

# Configuration du logging
logger = logging.getLogger(__name__)

DEFAULT_SHOTS = 400
UNIT_TOLERANCE = 1e-9


def _simulation_settings():
    return get_config().simulation


class EstimatorMode(BaseModel):
    """
    Mode d'estimation : exact (amplitude en forme close) ou échantillonné.

    Le back-end 'circuit' simule le circuit signé porte par porte ; 'closed_form'
    tire directement le compte binomial de l'issue désignée, de même loi.
    Tirs, back-end et topologie non précisés sont pris dans les paramètres SIM_.
    """
    model_config = ConfigDict(frozen=True)

    kind: Literal["exact", "sampled"] = "exact"
    n_shots: int = Field(default_factory=lambda: _simulation_settings().default_shots, ge=1)
    seed: int = Field(0, ge=0)
    backend: Literal["closed_form", "circuit"] = Field(
        default_factory=lambda: _simulation_settings().estimator_backend
    )
    topology: LoaderKind = Field(default_factory=lambda: LoaderKind(_simulation_settings().default_topology))

    @classmethod
    def exact(cls) -> "EstimatorMode":
        return cls(kind="exact")

    @classmethod
    def sampled(cls, n_shots: Optional[int] = None, seed: int = 0,
                backend: Optional[str] = None) -> "EstimatorMode":
        fields = {"n_shots": n_shots, "backend": backend}
        return cls(kind="sampled", seed=seed, **{k: v for k, v in fields.items() if v is not None})

    @property
    def is_exact(self) -> bool:
        return self.kind == "exact"

    def with_seed(self, seed: int) -> "EstimatorMode":
        return self.model_copy(update={"seed": int(seed)})

    def label(self) -> str:
        return "exact" if self.is_exact else f"sampled({self.n_shots})"


@dataclass(frozen=True)
class IpEstimate:
    """Estimation d'un produit scalaire."""
    value: float
    mode: EstimatorMode
    shots_used: int = 0


def _unit(v: np.ndarray, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValidationError(f"{name} doit être un vecteur", field_name=name)
    if abs(np.linalg.norm(v) - 1.0) > UNIT_TOLERANCE:
        raise ValidationError(f"{name} doit être de norme 1", field_name=name,
                              field_value=float(np.linalg.norm(v)))
    return v


def _pair(x_hat: np.ndarray, w_hat: np.ndarray):
    x_hat, w_hat = _unit(x_hat, "x_hat"), _unit(w_hat, "w_hat")
    if x_hat.shape != w_hat.shape:
        raise ValidationError(f"Dimensions incompatibles: {x_hat.shape} et {w_hat.shape}",
                              field_name="w_hat")
    return x_hat, w_hat


def _topology(topology: Optional[LoaderTopology], d: int) -> LoaderTopology:
    if topology is None:
        return LoaderTopology.build(_simulation_settings().default_topology, d)
    if topology.d != d:
        raise ValidationError(f"Topologie de dimension {topology.d} pour des vecteurs de dimension {d}",
                              field_name="topology")
    return topology


def square_ip_circuit(x_hat: np.ndarray, w_hat: np.ndarray,
                      topology: Optional[LoaderTopology] = None) -> Circuit:
    """
    Chargeur de x̂ suivi du chargeur adjoint de ŵ ; amp[racine]² = (ŵ·x̂)².
    """
    x_hat, w_hat = _pair(x_hat, w_hat)
    topology = _topology(topology, len(x_hat))
    loader = build_loader(topology, compute_angles(topology, x_hat))
    return loader.then(adjoint_loader(topology, compute_angles(topology, w_hat)))


def signed_ip_circuit(x_hat: np.ndarray, w_hat: np.ndarray,
                      topology: Optional[LoaderTopology] = None) -> Circuit:
    """
    Circuit signé sur d+1 fils (fil 0 = ancilla).

    X(0), RBS(0, racine, π/4), chargeur de x̂ et adjoint de ŵ sur les fils 1..d,
    puis RBS(0, racine, π/4). L'amplitude de e_0 vaut (1 − ŵ·x̂)/2.
    En dimension 1 le chargeur ne porte aucun signe : l'amplitude vaut alors 0
    et estimate_ip applique le signe de ŵ·x̂ classiquement.

    Args:
        x_hat (np.ndarray): Vecteur unitaire
        w_hat (np.ndarray): Vecteur unitaire
        topology (Optional[LoaderTopology]): Topologie (SIM_DEFAULT_TOPOLOGY par défaut)

    Returns:
        Circuit: Circuit sur d+1 qubits
    """
    x_hat, w_hat = _pair(x_hat, w_hat)
    d = len(x_hat)
    topology = _topology(topology, d)
    root = topology.root + 1
    loader = build_loader(topology, compute_angles(topology, x_hat)).without_init()
    adjoint = adjoint_loader(topology, compute_angles(topology, w_hat))

    split = Circuit(d + 1, (Gate.x(0), Gate.rbs(0, root, np.pi / 4)))
    merge = Circuit(d + 1, (Gate.rbs(0, root, np.pi / 4),))
    return split.then(loader.shifted(1)).then(adjoint.shifted(1)).then(merge)


def signed_amplitude(cosine: np.ndarray) -> np.ndarray:
    """Amplitude désignée (1 − ŵ·x̂)/2, bornée dans [0, 1]."""
    return np.clip((1.0 - np.asarray(cosine)) / 2.0, 0.0, 1.0)


def _invert(norm_product, p_hat):
    return norm_product * (1.0 - 2.0 * np.sqrt(np.clip(p_hat, 0.0, 1.0)))


def _seed_sequence(mode: EstimatorMode, *keys: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([mode.seed, *[int(k) for k in keys]])


def estimate_ip(x: np.ndarray, w: np.ndarray, mode: EstimatorMode,
                stream: Sequence[int] = ()) -> IpEstimate:
    """
    Estime w·x.

    En mode exact la valeur est reconstruite à partir de l'amplitude en forme
    close ; en mode échantillonné, p̂ = N₁/tirs retenus et w·x ≈ ‖x‖‖w‖(1 − 2√p̂).

    Args:
        x (np.ndarray): Vecteur de données
        w (np.ndarray): Vecteur de poids
        mode (EstimatorMode): Mode d'estimation
        stream (Sequence[int]): Clés supplémentaires de la graine (compteur d'appel, ligne)

    Returns:
        IpEstimate: Estimation
    """
    x, w = np.asarray(x, dtype=float), np.asarray(w, dtype=float)
    if x.shape != w.shape or x.ndim != 1:
        raise ValidationError(f"Dimensions incompatibles: {x.shape} et {w.shape}", field_name="w")
    nx, nw = float(np.linalg.norm(x)), float(np.linalg.norm(w))
    if nx == 0.0 or nw == 0.0:
        return IpEstimate(0.0, mode, 0)

    x_hat, w_hat = x / nx, w / nw
    if mode.is_exact:
        amplitude = float(signed_amplitude(np.dot(w_hat, x_hat)))
        return IpEstimate(nx * nw * (1.0 - 2.0 * amplitude), mode, 0)

    seed = _seed_sequence(mode, *stream)
    if mode.backend == "circuit":
        # en dimension 1 le chargeur n'a aucune RBS : le signe reste classique
        sign = 1.0
        if len(x) == 1:
            sign = float(np.sign(x_hat[0] * w_hat[0]))
            x_hat, w_hat = np.abs(x_hat), np.abs(w_hat)
        topology = LoaderTopology.build(mode.topology, len(x))
        state = run_circuit(signed_ip_circuit(x_hat, w_hat, topology))
        counts = postselect_unary(sample_outcomes(state, mode.n_shots, seed))
        shots_used = counts.total_shots
        p_hat = counts.marginal(0) / shots_used
        return IpEstimate(sign * float(_invert(nx * nw, p_hat)), mode, shots_used)

    p = float(signed_amplitude(np.dot(w_hat, x_hat))) ** 2
    shots_used = mode.n_shots
    p_hat = np.random.default_rng(seed).binomial(mode.n_shots, p) / shots_used
    return IpEstimate(float(_invert(nx * nw, p_hat)), mode, shots_used)


def estimate_square_ip(x: np.ndarray, w: np.ndarray, mode: EstimatorMode,
                       stream: Sequence[int] = ()) -> IpEstimate:
    """
    Estime |w·x| avec le circuit carré (signe supposé connu à l'avance).
    """
    x, w = np.asarray(x, dtype=float), np.asarray(w, dtype=float)
    nx, nw = float(np.linalg.norm(x)), float(np.linalg.norm(w))
    if nx == 0.0 or nw == 0.0:
        return IpEstimate(0.0, mode, 0)
    x_hat, w_hat = x / nx, w / nw
    if mode.is_exact:
        return IpEstimate(nx * nw * abs(float(np.dot(w_hat, x_hat))), mode, 0)

    seed = _seed_sequence(mode, *stream)
    topology = LoaderTopology.build(mode.topology, len(x))
    if mode.backend == "circuit":
        state = run_circuit(square_ip_circuit(x_hat, w_hat, topology))
        counts = postselect_unary(sample_outcomes(state, mode.n_shots, seed))
        shots_used = counts.total_shots
        p_hat = counts.marginal(topology.root) / shots_used
    else:
        p = min(float(np.dot(w_hat, x_hat)) ** 2, 1.0)
        shots_used = mode.n_shots
        p_hat = np.random.default_rng(seed).binomial(mode.n_shots, p) / shots_used
    return IpEstimate(nx * nw * float(np.sqrt(p_hat)), mode, shots_used)


def estimate_matmul(W: np.ndarray, X: np.ndarray, mode: EstimatorMode,
                    call_counter: int = 0) -> np.ndarray:
    """
    Produit par lot : renvoie la matrice des w_j·x_b, de forme (lot, lignes de W).

    Args:
        W (np.ndarray): Matrice de poids (m, n)
        X (np.ndarray): Lot de données (b, n)
        mode (EstimatorMode): Mode d'estimation
        call_counter (int): Compteur d'appel, fait partie de la graine

    Returns:
        np.ndarray: Estimations (b, m)
    """
    W, X = np.asarray(W, dtype=float), np.asarray(X, dtype=float)
    if W.ndim != 2 or X.ndim != 2 or W.shape[1] != X.shape[1]:
        raise ValidationError(f"Formes incompatibles: W{W.shape} et X{X.shape}", field_name="X")
    if mode.is_exact:
        return X @ W.T

    if mode.backend == "circuit":
        out = np.zeros((X.shape[0], W.shape[0]))
        for b in range(X.shape[0]):
            for j in range(W.shape[0]):
                out[b, j] = estimate_ip(X[b], W[j], mode, stream=(call_counter, j, b)).value
        return out

    nx = np.linalg.norm(X, axis=1)
    nw = np.linalg.norm(W, axis=1)
    scale = np.outer(nx, nw)
    with np.errstate(divide="ignore", invalid="ignore"):
        cosine = np.where(scale > 0, (X @ W.T) / scale, 1.0)
    p = signed_amplitude(cosine) ** 2
    # mêmes clés (appel, ligne j, exemple b) que le back-end circuit
    p_hat = np.zeros_like(p)
    for b, j in zip(*np.nonzero(scale > 0)):
        rng = np.random.default_rng(_seed_sequence(mode, call_counter, j, b))
        p_hat[b, j] = rng.binomial(mode.n_shots, p[b, j]) / mode.n_shots
    return np.where(scale > 0, _invert(scale, p_hat), 0.0)


def estimate_matvec(W: np.ndarray, x: np.ndarray, mode: EstimatorMode,
                    call_counter: int = 0) -> np.ndarray:
    """
    Vecteur des estimations w_j·x, une graine indépendante par ligne.

    En mode exact le résultat est exactement W @ x.
    """
    W, x = np.asarray(W, dtype=float), np.asarray(x, dtype=float)
    if W.ndim != 2 or x.ndim != 1 or W.shape[1] != x.shape[0]:
        raise ValidationError(f"Formes incompatibles: W{W.shape} et x{x.shape}", field_name="x")
    if mode.is_exact:
        return W @ x
    return np.array([
        estimate_ip(x, W[j], mode, stream=(call_counter, j)).value
        for j in range(W.shape[0])
    ])


def quantum_step_count(n: int, n_shots: int = DEFAULT_SHOTS) -> int:
    """
    Pas quantiques pour un produit scalaire de dimension n : tirs·(2⌈log₂ n⌉ − 1).
    """
    if n < 2:
        raise ValidationError("n doit être >= 2", field_name="n", field_value=n)
    return int(n_shots) * (2 * (int(n) - 1).bit_length() - 1)


def classical_step_count(n: int) -> int:
    if n < 2:
        raise ValidationError("n doit être >= 2", field_name="n", field_value=n)
    return int(n)


def crossover_point(n_shots: int = DEFAULT_SHOTS) -> int:
    """
    Plus petit n tel que quantum_step_count(n) < classical_step_count(n).

    Le compte quantique est constant sur chaque intervalle (2^(k−1), 2^k].
    """
    if n_shots < 1:
        raise ValidationError("n_shots doit être >= 1", field_name="n_shots", field_value=n_shots)
    k = 1
    while True:
        low, high = 2 ** (k - 1) + 1, 2 ** k
        candidate = max(low, n_shots * (2 * k - 1) + 1)
        if candidate <= high:
            return candidate
        k += 1
