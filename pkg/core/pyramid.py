#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Couches orthogonales pyramidales

Circuits pyramidaux (éventuellement tronqués) de RBS entre plus proches voisins,
bijection angles ↔ matrice orthogonale, passe avant exacte et distribution
d'inférence avec récupération du signe.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from core.estimators import EstimatorMode
from core.loaders import LoaderKind, LoaderTopology, build_loader, compute_angles
from core.unary_core import Circuit, Gate, OutcomeCounts, postselect_unary, rotate_pair
from utils.error_handler import NumericalError, ValidationError

# Configuration du logging
logger = logging.getLogger(__name__)

ORTHO_TOLERANCE = 1e-8


class RotationCounter:
    """Compteur d'opérations de rotation 2×2 (comptabilité du travail O(n²))."""

    def __init__(self):
        self.count = 0

    def add(self, k: int = 1) -> None:
        self.count += int(k)

    def reset(self) -> None:
        self.count = 0


def param_count(n_in: int, n_out: int) -> int:
    """
    Nombre d'angles d'une pyramide n_in × n_out : (2·n_in − 1 − n_out)·n_out/2.

    Args:
        n_in (int): Dimension d'entrée
        n_out (int): Dimension de sortie (≤ n_in)

    Returns:
        int: Nombre de paramètres
    """
    if not 1 <= n_out <= n_in:
        raise ValidationError(f"Dimensions invalides ({n_in}, {n_out}): il faut 1 <= n_out <= n_in",
                              field_name="n_out", field_value=n_out)
    return (2 * n_in - 1 - n_out) * n_out // 2


@lru_cache(maxsize=256)
def gate_plan(n_in: int, n_out: int) -> Tuple[Tuple[int, int, int], ...]:
    """
    Plan des portes (fil, fil+1, pas de temps) dans l'ordre d'application.

    La diagonale m (m = 1..min(n_out, n_in−1)) part de la paire du bas
    (n_in−2, n_in−1) et remonte jusqu'à (m−1, m) ; sa porte k est placée au pas
    2(m−1)+k. Les sorties sont les fils 0..n_out−1.
    """
    param_count(n_in, n_out)
    plan = []
    for m in range(1, min(n_out, n_in - 1) + 1):
        for k in range(n_in - m):
            wire = n_in - 2 - k
            plan.append((wire, wire + 1, 2 * (m - 1) + k))
    return tuple(plan)


def _canonical(theta: np.ndarray) -> np.ndarray:
    theta = np.mod(theta + np.pi, 2.0 * np.pi) - np.pi
    return np.where(theta <= -np.pi, theta + 2.0 * np.pi, theta)


@dataclass
class PyramidLayer:
    """
    Couche orthogonale paramétrée par les angles de sa pyramide.
    """
    n_in: int
    n_out: int
    theta: np.ndarray
    row_signs: Optional[np.ndarray] = None
    gate_plan: Tuple[Tuple[int, int, int], ...] = field(init=False, repr=False)

    def __post_init__(self):
        self.gate_plan = gate_plan(self.n_in, self.n_out)
        self.theta = np.asarray(self.theta, dtype=float).copy()
        expected = param_count(self.n_in, self.n_out)
        if self.theta.shape != (expected,):
            raise ValidationError(f"{self.theta.size} angles pour une couche ({self.n_in}, {self.n_out}), "
                                  f"attendu {expected}", field_name="theta")
        if not np.all(np.isfinite(self.theta)):
            raise ValidationError("Angles non finis", field_name="theta")
        if self.row_signs is None:
            self.row_signs = np.ones(self.n_out)
        self.row_signs = np.asarray(self.row_signs, dtype=float).copy()
        if self.row_signs.shape != (self.n_out,) or not np.all(np.abs(self.row_signs) == 1.0):
            raise ValidationError("row_signs doit contenir n_out valeurs ±1", field_name="row_signs")

    @classmethod
    def zeros(cls, n_in: int, n_out: int) -> "PyramidLayer":
        return cls(n_in, n_out, np.zeros(param_count(n_in, n_out)))

    @classmethod
    def random(cls, n_in: int, n_out: int, rng: np.random.Generator,
               scale: float = np.pi / 4) -> "PyramidLayer":
        """Angles uniformes dans [−scale, scale]."""
        return cls(n_in, n_out, rng.uniform(-scale, scale, size=param_count(n_in, n_out)))

    def copy(self) -> "PyramidLayer":
        return PyramidLayer(self.n_in, self.n_out, self.theta.copy(), self.row_signs.copy())

    def to_dict(self) -> Dict:
        return {
            "n_in": self.n_in,
            "n_out": self.n_out,
            "theta": self.theta.tolist(),
            "row_signs": self.row_signs.astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "PyramidLayer":
        try:
            return cls(int(data["n_in"]), int(data["n_out"]), data["theta"], data.get("row_signs"))
        except KeyError as e:
            raise ValidationError(f"Champ manquant dans la couche: {e}", field_name=str(e))


def rotate_all(layer: PyramidLayer, work: np.ndarray,
               counter: Optional[RotationCounter] = None) -> np.ndarray:
    """
    Applique toutes les rotations du plan à work (n_in,) ou (n_in, lot), en place.
    """
    for (a, b, _), theta in zip(layer.gate_plan, layer.theta):
        rotate_pair(work, a, b, theta)
    if counter is not None:
        batch = 1 if work.ndim == 1 else work.shape[1]
        counter.add(len(layer.gate_plan) * batch)
    return work


def full_unitary(layer: PyramidLayer) -> np.ndarray:
    """Matrice n_in × n_in du circuit (sans les signes de ligne)."""
    return rotate_all(layer, np.eye(layer.n_in))


def angles_to_matrix(layer: PyramidLayer) -> np.ndarray:
    """
    Matrice orthogonale W (n_out × n_in) : lignes de sortie du circuit, signes appliqués.
    """
    return full_unitary(layer)[:layer.n_out] * layer.row_signs[:, None]


def matrix_to_angles(W: np.ndarray, tolerance: float = ORTHO_TOLERANCE) -> PyramidLayer:
    """
    Retrouve les angles d'une matrice à lignes orthonormées par élimination de Givens.

    Les portes sont parcourues dans l'ordre du plan ; chacune annule la composante
    de droite de la ligne en cours. Pour une matrice carrée, le signe résiduel de
    la dernière ligne fournit row_signs (cas det = −1).

    Args:
        W (np.ndarray): Matrice n_out × n_in avec W·Wᵀ = I
        tolerance (float): Tolérance d'orthogonalité

    Returns:
        PyramidLayer: Couche équivalente
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] > W.shape[1]:
        raise ValidationError(f"Forme invalide {W.shape}: il faut n_out <= n_in", field_name="W")
    n_out, n_in = W.shape
    residual = float(np.max(np.abs(W @ W.T - np.eye(n_out))))
    if residual > tolerance:
        raise NumericalError(f"Matrice non orthogonale (écart {residual:.2e})",
                             operation="matrix_to_angles", residual=residual)

    plan = gate_plan(n_in, n_out)
    V = W.copy()
    theta = np.zeros(len(plan))
    for index, (a, b, _) in enumerate(plan):
        # la diagonale m traite la ligne m−1, repérée par le fil du haut de sa dernière porte
        row = _row_of_gate(index, n_in)
        t = np.arctan2(-V[row, b], V[row, a])
        theta[index] = t
        c, s = np.cos(t), np.sin(t)
        va = V[:, a].copy()
        V[:, a] = c * va - s * V[:, b]
        V[:, b] = s * va + c * V[:, b]

    signs = np.ones(n_out)
    if n_out == n_in:
        signs[-1] = 1.0 if V[-1, -1] >= 0 else -1.0
    layer = PyramidLayer(n_in, n_out, _canonical(theta), signs)
    logger.debug(f"Angles retrouvés pour une matrice {n_out}x{n_in} (signes {signs.tolist()})")
    return layer


def _row_of_gate(index: int, n_in: int) -> int:
    # la diagonale m compte n_in − m portes
    m = 1
    while index >= n_in - m:
        index -= n_in - m
        m += 1
    return m - 1


def forward(layer: PyramidLayer, x: np.ndarray, counter: Optional[RotationCounter] = None) -> np.ndarray:
    """
    Passe avant : rotations appliquées à une copie de x, sorties désignées signées.

    Args:
        layer (PyramidLayer): Couche
        x (np.ndarray): Entrée (n_in,) ou lot (lot, n_in)
        counter (Optional[RotationCounter]): Compteur de rotations

    Returns:
        np.ndarray: Sortie (n_out,) ou (lot, n_out)
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != layer.n_in or x.ndim not in (1, 2):
        raise ValidationError(f"Entrée de forme {x.shape} pour une couche d'entrée {layer.n_in}",
                              field_name="x")
    if x.ndim == 1:
        work = rotate_all(layer, x.copy(), counter)
        return work[:layer.n_out] * layer.row_signs
    work = rotate_all(layer, x.T.copy(), counter)
    return (work[:layer.n_out] * layer.row_signs[:, None]).T


def reference_vector(layer: PyramidLayer) -> np.ndarray:
    """Vecteur de référence uniforme, signé par row_signs sur les fils de sortie."""
    u = np.full(layer.n_in, 1.0 / np.sqrt(layer.n_in))
    u[:layer.n_out] *= layer.row_signs
    return u


def inference_distribution(layer: PyramidLayer, x_hat: np.ndarray) -> np.ndarray:
    """
    Distribution Pr[b, e_j] = ¼(a_j ± 1/√n)² du circuit de récupération du signe.

    a_j vaut W_j·x̂ sur les fils de sortie et (U x̂)_j sur les autres.

    Args:
        layer (PyramidLayer): Couche
        x_hat (np.ndarray): Entrée unitaire

    Returns:
        np.ndarray: Tableau (2, n_in), ligne 0 pour b=0, ligne 1 pour b=1
    """
    x_hat = np.asarray(x_hat, dtype=float)
    if x_hat.shape != (layer.n_in,):
        raise ValidationError(f"Entrée de forme {x_hat.shape}", field_name="x_hat")
    if abs(np.linalg.norm(x_hat) - 1.0) > 1e-9:
        raise ValidationError("L'entrée doit être de norme 1", field_name="x_hat",
                              field_value=float(np.linalg.norm(x_hat)))
    a = rotate_all(layer, x_hat.copy())
    u = reference_vector(layer)
    return 0.25 * np.stack([(a + u) ** 2, (a - u) ** 2])


def sign_recovery_circuit(layer: PyramidLayer, x_hat: np.ndarray,
                          kind: LoaderKind = LoaderKind.SEMI_DIAGONAL) -> Circuit:
    """
    Construction complète pour l'oracle dense (qubit 0 = ancilla, fil j = qubit j+1).

    H(anc), CNOT(anc → racine), chargeur de v, CNOT contrôlé sur anc=0, chargeur de x̂,
    pyramide, H(anc). v = L_xᵀ Uᵀ u est précompensé classiquement pour que la branche
    anc=1 aboutisse au vecteur de référence u.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    n = layer.n_in
    topology = LoaderTopology.build(kind, n)
    root = topology.root + 1

    x_loader = build_loader(topology, compute_angles(topology, x_hat)).without_init()
    loader_matrix = _unary_matrix(x_loader)
    v = loader_matrix.T @ full_unitary(layer).T @ reference_vector(layer)
    v_loader = build_loader(topology, compute_angles(topology, v)).without_init()

    pyramid = Circuit(n, tuple(Gate.rbs(a, b, t) for (a, b, _), t in zip(layer.gate_plan, layer.theta)))

    head = Circuit(n + 1, (Gate.h(0), Gate.cnot(0, root)))
    flip = Circuit(n + 1, (Gate.x(0), Gate.cnot(0, root), Gate.x(0)))
    tail = Circuit(n + 1, (Gate.h(0),))
    return (head.then(v_loader.shifted(1)).then(flip)
            .then(x_loader.shifted(1)).then(pyramid.shifted(1)).then(tail))


def _unary_matrix(circuit: Circuit) -> np.ndarray:
    work = np.eye(circuit.n_qubits)
    for gate in circuit.gates:
        rotate_pair(work, gate.qubits[0], gate.qubits[1], gate.theta)
    return work


def _outcome_bits(n: int, b: int, j: int) -> str:
    return str(b) + "0" * j + "1" + "0" * (n - j - 1)


def estimate_layer_output(layer: PyramidLayer, x: np.ndarray, mode: EstimatorMode,
                          stream: Sequence[int] = ()) -> np.ndarray:
    """
    Sortie de couche exacte ou estimée par tirs avec récupération du signe.

    En mode échantillonné : tirage de n_shots issues (b, e_j), post-sélection du
    registre unaire, puis √n·(Pr̂[0,e_j] − Pr̂[1,e_j])·‖x‖.

    Args:
        layer (PyramidLayer): Couche
        x (np.ndarray): Entrée (norme suivie classiquement)
        mode (EstimatorMode): Mode d'estimation
        stream (Sequence[int]): Clés supplémentaires de la graine

    Returns:
        np.ndarray: Sortie (n_out,)
    """
    x = np.asarray(x, dtype=float)
    if mode.is_exact:
        return forward(layer, x)
    norm = float(np.linalg.norm(x))
    if norm == 0.0:
        return np.zeros(layer.n_out)

    n = layer.n_in
    probs = inference_distribution(layer, x / norm).reshape(-1)
    rng = np.random.default_rng(np.random.SeedSequence([mode.seed, *[int(k) for k in stream]]))
    draws = rng.multinomial(mode.n_shots, probs / probs.sum()).reshape(2, n)
    counts = OutcomeCounts(
        {_outcome_bits(n, b, j): int(draws[b, j]) for b in range(2) for j in range(n) if draws[b, j]},
        int(mode.n_shots),
        n + 1
    )
    kept = postselect_unary(counts, wires=range(1, n + 1))
    diff = np.array([
        kept.frequency(_outcome_bits(n, 0, j)) - kept.frequency(_outcome_bits(n, 1, j))
        for j in range(layer.n_out)
    ])
    return np.sqrt(n) * diff * norm
