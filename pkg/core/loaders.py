#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Chargeurs de données unaires

Calcul des angles RBS à partir d'un vecteur classique et construction des
chargeurs parallèle, diagonal et semi-diagonal.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Tuple, Union

import numpy as np

from core.unary_core import Circuit, Gate, UnaryState, run_circuit
from utils.error_handler import ValidationError

# Configuration du logging
logger = logging.getLogger(__name__)


class LoaderKind(Enum):
    """Topologies de chargeur disponibles."""
    PARALLEL = "parallel"
    DIAGONAL = "diagonal"
    SEMI_DIAGONAL = "semi_diagonal"


def _parallel_splits(d: int) -> Tuple[Tuple[int, int], ...]:
    size = 1
    while size < d:
        size *= 2
    splits = []
    step = size // 2
    while step >= 1:
        for wire in range(0, size, 2 * step):
            new_wire = wire + step
            # feuilles de remplissage au-delà de d élaguées
            if new_wire < d:
                splits.append((wire, new_wire))
        step //= 2
    return tuple(splits)


def _diagonal_splits(d: int) -> Tuple[Tuple[int, int], ...]:
    return tuple((i, i + 1) for i in range(d - 1))


def _semi_diagonal_root(d: int) -> int:
    return (d + 1) // 2 - 1


def _semi_diagonal_splits(d: int) -> Tuple[Tuple[int, int], ...]:
    if d < 2:
        return ()
    root = _semi_diagonal_root(d)
    splits = [(root, root + 1)]
    step = 2
    while len(splits) < d - 1:
        left, right = root - step + 2, root + step - 1
        if left - 1 >= 0:
            splits.append((left, left - 1))
        if right + 1 <= d - 1:
            splits.append((right, right + 1))
        step += 1
    return tuple(splits)


@dataclass(frozen=True)
class LoaderTopology:
    """
    Arbre de séparation d'un chargeur : chaque couple (source, nouveau) est une RBS
    qui transfère une partie de l'amplitude du fil source vers un fil encore vide.
    """
    kind: LoaderKind
    d: int
    root: int
    splits: Tuple[Tuple[int, int], ...]

    @classmethod
    def build(cls, kind: Union[str, LoaderKind], d: int) -> "LoaderTopology":
        """
        Construit la topologie d'un chargeur.

        Args:
            kind (Union[str, LoaderKind]): 'parallel', 'diagonal' ou 'semi_diagonal'
            d (int): Dimension des données

        Returns:
            LoaderTopology: Topologie
        """
        try:
            kind = LoaderKind(kind) if not isinstance(kind, LoaderKind) else kind
        except ValueError as e:
            raise ValidationError(f"Topologie inconnue: {kind}", field_name="kind",
                                  field_value=kind, original_exception=e)
        if d < 1:
            raise ValidationError("La dimension doit être >= 1", field_name="d", field_value=d)

        if kind == LoaderKind.PARALLEL:
            return cls(kind, d, 0, _parallel_splits(d))
        if kind == LoaderKind.DIAGONAL:
            return cls(kind, d, 0, _diagonal_splits(d))
        return cls(kind, d, _semi_diagonal_root(d), _semi_diagonal_splits(d))

    def skeleton(self) -> Circuit:
        """Circuit du chargeur avec des angles nuls."""
        gates = (Gate.x(self.root),) + tuple(Gate.rbs(s, n, 0.0) for s, n in self.splits)
        return Circuit(self.d, gates)

    def depth(self) -> int:
        return self.skeleton().depth()


@dataclass(frozen=True)
class LoaderAngles:
    """Angles θ (un par séparation) et nombre de nœuds visités lors du calcul."""
    theta: np.ndarray
    visits: int = 0


def _check_vector(x: np.ndarray, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (d,):
        raise ValidationError(f"Vecteur de forme {x.shape}, attendu ({d},)", field_name="x")
    if not np.all(np.isfinite(x)):
        raise ValidationError("Le vecteur contient des valeurs NaN ou infinies", field_name="x")
    if not np.any(x):
        raise ValidationError("Impossible de charger le vecteur nul", field_name="x")
    return x


def compute_angles(topology: LoaderTopology, x: np.ndarray) -> LoaderAngles:
    """
    Calcule les angles du chargeur en une passe arrière sur l'arbre de séparation.

    Chaque séparation (s, n) reçoit θ = atan2(valeur(n), valeur(s)) où la valeur d'un
    sous-arbre réduit à une feuille est la composante signée de x et sinon la norme
    du sous-arbre ; les signes ne sont donc portés que par les séparations terminales.

    Args:
        topology (LoaderTopology): Topologie du chargeur
        x (np.ndarray): Vecteur à charger (non nul)

    Returns:
        LoaderAngles: Angles et compteur de visites
    """
    x = _check_vector(x, topology.d)
    acc = x * x
    size = np.ones(topology.d, dtype=int)
    visits = topology.d
    theta = np.zeros(len(topology.splits))

    for k in range(len(topology.splits) - 1, -1, -1):
        s, n = topology.splits[k]
        value_s = x[s] if size[s] == 1 else np.sqrt(acc[s])
        value_n = x[n] if size[n] == 1 else np.sqrt(acc[n])
        theta[k] = np.arctan2(value_n, value_s)
        acc[s] += acc[n]
        size[s] += size[n]
        visits += 1

    return LoaderAngles(theta, visits)


def _check_angles(topology: LoaderTopology, angles: LoaderAngles) -> None:
    if len(angles.theta) != len(topology.splits):
        raise ValidationError(
            f"{len(angles.theta)} angles pour {len(topology.splits)} séparations",
            field_name="angles"
        )


def build_loader(topology: LoaderTopology, angles: LoaderAngles) -> Circuit:
    """
    Circuit X(racine) suivi des d−1 RBS dans l'ordre de la topologie.
    """
    _check_angles(topology, angles)
    gates = [Gate.x(topology.root)]
    gates.extend(Gate.rbs(s, n, t) for (s, n), t in zip(topology.splits, angles.theta))
    return Circuit(topology.d, tuple(gates))


def adjoint_loader(topology: LoaderTopology, angles: LoaderAngles) -> Circuit:
    """
    Chargeur adjoint : portes en ordre inverse, angles opposés, sans initialisation X.
    """
    _check_angles(topology, angles)
    gates = [
        Gate.rbs(s, n, -t)
        for (s, n), t in zip(reversed(topology.splits), reversed(angles.theta))
    ]
    return Circuit(topology.d, tuple(gates))


def load_with_norm(x: np.ndarray, topology: LoaderTopology) -> Tuple[UnaryState, float]:
    """
    Charge x et renvoie l'état unaire avec la norme classique ‖x‖.
    """
    x = _check_vector(x, topology.d)
    angles = compute_angles(topology, x)
    state = run_circuit(build_loader(topology, angles))
    if topology.d == 1 and x[0] < 0:
        # aucune séparation ne porte le signe d'un vecteur de dimension 1
        state = UnaryState(1, -state.amp)
    return state, float(np.linalg.norm(x))


def load(x: np.ndarray, topology: LoaderTopology) -> UnaryState:
    """État unaire x/‖x‖."""
    state, _ = load_with_norm(x, topology)
    return state
