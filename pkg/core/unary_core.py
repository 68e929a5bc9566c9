#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Simulateur de circuits restreint au sous-espace unaire

Ce module simule des circuits composés d'initialisations X et de portes RBS
sur les états de poids de Hamming 1, échantillonne des mesures, applique la
post-sélection unaire et fournit un simulateur dense (oracle de vérification)
ainsi que la décomposition de la porte RBS en portes natives.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from utils.config_manager import get_config
from utils.error_handler import CircuitError, EmptyPostselectionError, ValidationError

# Configuration du logging
logger = logging.getLogger(__name__)


SeedLike = Union[int, Sequence[int], np.random.SeedSequence, None]


class GateKind(Enum):
    """Types de portes connus du simulateur."""
    X = "x"
    RBS = "rbs"
    H = "h"
    RY = "ry"
    CZ = "cz"
    CNOT = "cnot"


_TWO_QUBIT_KINDS = (GateKind.RBS, GateKind.CZ, GateKind.CNOT)
_PARAMETRIC_KINDS = (GateKind.RBS, GateKind.RY)


@dataclass(frozen=True)
class Gate:
    """
    Porte élémentaire.

    Pour une RBS, le premier qubit joue le rôle |10⟩ et le second le rôle |01⟩.
    Pour une CNOT, le premier qubit est le contrôle.
    """
    kind: GateKind
    qubits: Tuple[int, ...]
    theta: float = 0.0

    def __post_init__(self):
        expected = 2 if self.kind in _TWO_QUBIT_KINDS else 1
        if len(self.qubits) != expected:
            raise CircuitError(f"La porte {self.kind.value} attend {expected} qubit(s), reçu {self.qubits}")
        if expected == 2 and self.qubits[0] == self.qubits[1]:
            raise CircuitError(f"Qubits identiques pour la porte {self.kind.value}: {self.qubits}")
        if any(q < 0 for q in self.qubits):
            raise CircuitError(f"Indice de qubit négatif: {self.qubits}")
        if not np.isfinite(self.theta):
            raise ValidationError("Angle non fini", field_name="theta", field_value=self.theta)

    @classmethod
    def x(cls, qubit: int) -> "Gate":
        return cls(GateKind.X, (int(qubit),))

    @classmethod
    def rbs(cls, a: int, b: int, theta: float) -> "Gate":
        return cls(GateKind.RBS, (int(a), int(b)), float(theta))

    @classmethod
    def h(cls, qubit: int) -> "Gate":
        return cls(GateKind.H, (int(qubit),))

    @classmethod
    def ry(cls, qubit: int, theta: float) -> "Gate":
        return cls(GateKind.RY, (int(qubit),), float(theta))

    @classmethod
    def cz(cls, a: int, b: int) -> "Gate":
        return cls(GateKind.CZ, (int(a), int(b)))

    @classmethod
    def cnot(cls, control: int, target: int) -> "Gate":
        return cls(GateKind.CNOT, (int(control), int(target)))

    def to_dict(self) -> Dict:
        data = {"kind": self.kind.value, "qubits": list(self.qubits)}
        if self.kind in _PARAMETRIC_KINDS:
            data["theta"] = self.theta
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "Gate":
        try:
            kind = GateKind(data["kind"])
            return cls(kind, tuple(int(q) for q in data["qubits"]), float(data.get("theta", 0.0)))
        except (KeyError, ValueError, TypeError) as e:
            raise CircuitError(f"Description de porte invalide: {data}", original_exception=e)


@dataclass(frozen=True)
class Circuit:
    """
    Liste ordonnée de portes sur n_qubits fils.
    """
    n_qubits: int
    gates: Tuple[Gate, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.n_qubits < 1:
            raise CircuitError("Un circuit doit avoir au moins un qubit", n_qubits=self.n_qubits)
        object.__setattr__(self, "gates", tuple(self.gates))
        for index, gate in enumerate(self.gates):
            if max(gate.qubits) >= self.n_qubits:
                raise CircuitError(
                    f"Qubit hors limites dans {gate.kind.value}{gate.qubits}",
                    gate_index=index,
                    n_qubits=self.n_qubits
                )

    def __len__(self) -> int:
        return len(self.gates)

    def depth(self) -> int:
        """
        Profondeur par superposition gloutonne des portes en couches.

        Les initialisations X ne comptent pas.

        Returns:
            int: Nombre de pas de temps parallèles
        """
        level = [0] * self.n_qubits
        for gate in self.gates:
            if gate.kind == GateKind.X:
                continue
            layer = max(level[q] for q in gate.qubits) + 1
            for q in gate.qubits:
                level[q] = layer
        return max(level) if level else 0

    def gate_count(self, kind: Optional[GateKind] = None) -> int:
        if kind is None:
            return len(self.gates)
        return sum(1 for gate in self.gates if gate.kind == kind)

    def then(self, other: "Circuit") -> "Circuit":
        """Concatène deux circuits sur le plus grand des deux registres."""
        return Circuit(max(self.n_qubits, other.n_qubits), self.gates + other.gates)

    def shifted(self, offset: int, n_qubits: Optional[int] = None) -> "Circuit":
        """Décale tous les fils de offset (utile pour insérer un ancilla en tête)."""
        gates = tuple(Gate(g.kind, tuple(q + offset for q in g.qubits), g.theta) for g in self.gates)
        return Circuit(n_qubits or self.n_qubits + offset, gates)

    def without_init(self) -> "Circuit":
        return Circuit(self.n_qubits, tuple(g for g in self.gates if g.kind != GateKind.X))

    def to_dict(self) -> Dict:
        return {"n_qubits": self.n_qubits, "gates": [g.to_dict() for g in self.gates]}

    @classmethod
    def from_dict(cls, data: Dict) -> "Circuit":
        try:
            return cls(int(data["n_qubits"]), tuple(Gate.from_dict(g) for g in data["gates"]))
        except KeyError as e:
            raise CircuitError(f"Champ manquant dans le circuit: {e}", original_exception=e)


@dataclass(frozen=True)
class UnaryState:
    """
    Amplitudes réelles sur la base de poids 1 : amp[i] est l'amplitude de e_{i+1}.
    """
    n: int
    amp: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amp)
        if np.iscomplexobj(amp):
            raise CircuitError("Les amplitudes complexes ne sont pas supportées")
        amp = amp.astype(float)
        if amp.shape != (self.n,):
            raise ValidationError(f"Vecteur d'amplitudes de forme {amp.shape}, attendu ({self.n},)",
                                  field_name="amp")
        amp.setflags(write=False)
        object.__setattr__(self, "amp", amp)

    @classmethod
    def basis(cls, n: int, index: int) -> "UnaryState":
        if not 0 <= index < n:
            raise CircuitError(f"Indice de base {index} hors de [0, {n})", n_qubits=n)
        amp = np.zeros(n)
        amp[index] = 1.0
        return cls(n, amp)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amp))

    def probabilities(self) -> np.ndarray:
        return self.amp ** 2


@dataclass(frozen=True)
class OutcomeCounts:
    """
    Histogramme des chaînes de bits mesurées.
    """
    counts: Dict[str, int]
    total_shots: int
    n_qubits: int

    def __post_init__(self):
        total = sum(self.counts.values())
        if total != self.total_shots:
            raise ValidationError(f"Les comptes totalisent {total} au lieu de {self.total_shots}",
                                  field_name="total_shots")
        for bits in self.counts:
            if len(bits) != self.n_qubits:
                raise ValidationError(f"Chaîne de longueur incorrecte: {bits}", field_name="counts")

    def marginal(self, qubit: int) -> int:
        """
        Nombre de tirs où le qubit désigné vaut 1 (N₁).

        Args:
            qubit (int): Qubit désigné

        Returns:
            int: N₁
        """
        return sum(c for bits, c in self.counts.items() if bits[qubit] == "1")

    def frequency(self, bitstring: str) -> float:
        if self.total_shots == 0:
            return 0.0
        return self.counts.get(bitstring, 0) / self.total_shots


def unary_bitstring(n: int, index: int) -> str:
    """Chaîne de bits de e_{index+1} sur n qubits (qubit 0 à gauche)."""
    return "0" * index + "1" + "0" * (n - index - 1)


def rbs_matrix(theta: float) -> np.ndarray:
    """
    Matrice 4×4 de la porte RBS dans l'ordre |00⟩, |01⟩, |10⟩, |11⟩.

    Args:
        theta (float): Angle en radians

    Returns:
        np.ndarray: Matrice orthogonale de déterminant 1
    """
    c, s = np.cos(theta), np.sin(theta)
    return np.array([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, c, s, 0.0],
        [0.0, -s, c, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])


def rotate_pair(amp: np.ndarray, a: int, b: int, theta: float) -> None:
    """
    Applique en place le bloc 2×2 de la RBS sur les composantes (a, b).

    Fonctionne aussi sur un lot : amp de forme (n, ...) est tourné ligne par ligne.
    """
    c, s = np.cos(theta), np.sin(theta)
    va = amp[a].copy()
    vb = amp[b]
    amp[a] = c * va - s * vb
    amp[b] = s * va + c * vb


def apply_rbs(state: UnaryState, a: int, b: int, theta: float) -> UnaryState:
    """
    Applique RBS(a, b, θ) à un état unaire.

    Args:
        state (UnaryState): État d'entrée
        a (int): Fil jouant le rôle |10⟩
        b (int): Fil jouant le rôle |01⟩
        theta (float): Angle

    Returns:
        UnaryState: Nouvel état
    """
    if a == b:
        raise CircuitError(f"RBS sur deux fois le même fil ({a})", n_qubits=state.n)
    if not (0 <= a < state.n and 0 <= b < state.n):
        raise CircuitError(f"RBS({a}, {b}) hors du registre de {state.n} qubits", n_qubits=state.n)
    amp = np.array(state.amp)
    rotate_pair(amp, a, b, theta)
    return UnaryState(state.n, amp)


def run_circuit(circuit: Circuit, initial: Optional[UnaryState] = None) -> UnaryState:
    """
    Exécute un circuit X/RBS dans le sous-espace de poids 1.

    Sans état initial, le registre part du vide et le circuit doit contenir
    exactement une initialisation X avant toute RBS agissant sur l'excitation.

    Args:
        circuit (Circuit): Circuit à simuler
        initial (Optional[UnaryState]): État initial de poids 1

    Returns:
        UnaryState: État final
    """
    n = circuit.n_qubits
    if initial is not None:
        if initial.n != n:
            raise CircuitError(f"État initial sur {initial.n} qubits pour un circuit de {n}", n_qubits=n)
        amp = np.array(initial.amp)
    else:
        amp = None

    for index, gate in enumerate(circuit.gates):
        if gate.kind == GateKind.X:
            if amp is not None:
                raise CircuitError("Une seconde porte X quitterait le sous-espace de poids 1",
                                   gate_index=index, n_qubits=n)
            amp = np.zeros(n)
            amp[gate.qubits[0]] = 1.0
        elif gate.kind == GateKind.RBS:
            # une RBS sur le vide est l'identité
            if amp is not None:
                rotate_pair(amp, gate.qubits[0], gate.qubits[1], gate.theta)
        else:
            raise CircuitError(f"Porte {gate.kind.value} non supportée par le simulateur unaire",
                               gate_index=index, n_qubits=n)

    if amp is None:
        raise CircuitError("Le circuit ne contient aucune excitation (poids de Hamming 0)", n_qubits=n)
    return UnaryState(n, amp)


def _rng(seed: SeedLike) -> np.random.Generator:
    return np.random.default_rng(seed)


def sample_outcomes(state: UnaryState, n_shots: int, seed: SeedLike = None) -> OutcomeCounts:
    """
    Tire n_shots mesures multinomiales de probabilités amp².

    Args:
        state (UnaryState): État mesuré
        n_shots (int): Nombre de tirs
        seed: Graine (entier, séquence ou SeedSequence)

    Returns:
        OutcomeCounts: Histogramme des mesures
    """
    if n_shots < 1:
        raise ValidationError("n_shots doit être >= 1", field_name="n_shots", field_value=n_shots)
    probs = state.probabilities()
    probs = probs / probs.sum()
    draws = _rng(seed).multinomial(n_shots, probs)
    counts = {unary_bitstring(state.n, i): int(c) for i, c in enumerate(draws) if c > 0}
    return OutcomeCounts(counts, int(n_shots), state.n)


def postselect_unary(counts: OutcomeCounts, wires: Optional[Sequence[int]] = None) -> OutcomeCounts:
    """
    Écarte les chaînes dont le poids de Hamming n'est pas 1.

    Args:
        counts (OutcomeCounts): Mesures brutes
        wires (Optional[Sequence[int]]): Sous-registre sur lequel tester le poids (tous les fils par défaut)

    Returns:
        OutcomeCounts: Mesures retenues
    """
    positions = list(range(counts.n_qubits)) if wires is None else list(wires)
    kept = {
        bits: c for bits, c in counts.counts.items()
        if sum(bits[w] == "1" for w in positions) == 1
    }
    retained = sum(kept.values())
    if retained == 0:
        raise EmptyPostselectionError(
            f"La post-sélection a écarté les {counts.total_shots} tirs",
            total_shots=counts.total_shots
        )
    dropped = counts.total_shots - retained
    if dropped:
        logger.debug(f"Post-sélection: {dropped} tirs écartés sur {counts.total_shots}")
    return OutcomeCounts(kept, retained, counts.n_qubits)


def decompose_rbs(theta: float, a: int = 0, b: int = 1, n_qubits: int = 2) -> Circuit:
    """
    Décompose RBS(θ) sur {H, Ry, CZ} : H⊗H, CZ, Ry(θ)⊗Ry(−θ), CZ, H⊗H.

    Égalité exacte (sans phase globale) avec rbs_matrix(θ).
    """
    gates = (
        Gate.h(a), Gate.h(b),
        Gate.cz(a, b),
        Gate.ry(a, theta), Gate.ry(b, -theta),
        Gate.cz(a, b),
        Gate.h(a), Gate.h(b),
    )
    return Circuit(n_qubits, gates)


# ---------------------------------------------------------------------------
# Oracle dense
# ---------------------------------------------------------------------------

_H = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)
_X = np.array([[0.0, 1.0], [1.0, 0.0]])
_CZ = np.diag([1.0, 1.0, 1.0, -1.0])
_CNOT = np.array([
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
    [0.0, 0.0, 1.0, 0.0],
])


def ry_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
    return np.array([[c, -s], [s, c]])


def gate_matrix(gate: Gate) -> np.ndarray:
    """Matrice réelle de la porte (2×2 ou 4×4, qubit de tête en poids fort)."""
    if gate.kind == GateKind.X:
        return _X
    if gate.kind == GateKind.H:
        return _H
    if gate.kind == GateKind.RY:
        return ry_matrix(gate.theta)
    if gate.kind == GateKind.RBS:
        return rbs_matrix(gate.theta)
    if gate.kind == GateKind.CZ:
        return _CZ
    return _CNOT


@dataclass(frozen=True)
class DenseState:
    """Vecteur d'état complet sur 2ⁿ amplitudes, qubit 0 en poids fort."""
    n: int
    amp: np.ndarray

    def probabilities(self) -> np.ndarray:
        return self.amp ** 2


def _apply_dense(psi: np.ndarray, gate: Gate, n: int) -> np.ndarray:
    matrix = gate_matrix(gate)
    k = len(gate.qubits)
    tensor = psi.reshape([2] * n)
    op = matrix.reshape([2] * (2 * k))
    moved = np.tensordot(op, tensor, axes=(list(range(k, 2 * k)), list(gate.qubits)))
    return np.moveaxis(moved, list(range(k)), list(gate.qubits)).reshape(-1)


def dense_simulate(
    circuit: Circuit,
    initial: Union[int, np.ndarray, None] = None,
    max_qubits: Optional[int] = None
) -> DenseState:
    """
    Évolution du vecteur d'état complet (oracle de vérification).

    Args:
        circuit (Circuit): Circuit à simuler (toutes portes)
        initial: Indice d'état de base ou vecteur initial (|0…0⟩ par défaut)
        max_qubits (Optional[int]): Taille maximale acceptée (SIM_DENSE_MAX_QUBITS par défaut)

    Returns:
        DenseState: État final
    """
    n = circuit.n_qubits
    if max_qubits is None:
        max_qubits = get_config().simulation.dense_max_qubits
    if n > max_qubits:
        raise CircuitError(f"Oracle dense limité à {max_qubits} qubits (reçu {n})", n_qubits=n)
    dim = 2 ** n
    if initial is None:
        psi = np.zeros(dim)
        psi[0] = 1.0
    elif isinstance(initial, (int, np.integer)):
        psi = np.zeros(dim)
        psi[int(initial)] = 1.0
    else:
        psi = np.array(initial, dtype=float)
        if psi.shape != (dim,):
            raise ValidationError(f"Vecteur initial de forme {psi.shape}, attendu ({dim},)",
                                  field_name="initial")
    for gate in circuit.gates:
        psi = _apply_dense(psi, gate, n)
    return DenseState(n, psi)


def dense_unitary(circuit: Circuit, max_qubits: int = 12) -> np.ndarray:
    """Unitaire complet, construit colonne par colonne."""
    n = circuit.n_qubits
    if n > max_qubits:
        raise CircuitError(f"dense_unitary limité à {max_qubits} qubits", n_qubits=n)
    dim = 2 ** n
    columns = [dense_simulate(circuit, initial=k, max_qubits=max_qubits).amp for k in range(dim)]
    return np.stack(columns, axis=1)


def unary_index(n: int, wire: int) -> int:
    """Indice dense de e_{wire+1} (qubit 0 en poids fort)."""
    return 1 << (n - 1 - wire)


def project_unary(dense: DenseState) -> np.ndarray:
    """Amplitudes de poids 1 d'un état dense, dans l'ordre des fils."""
    return np.array([dense.amp[unary_index(dense.n, w)] for w in range(dense.n)])


def sample_dense(dense: DenseState, n_shots: int, seed: SeedLike = None) -> OutcomeCounts:
    """Tire n_shots mesures d'un état dense."""
    if n_shots < 1:
        raise ValidationError("n_shots doit être >= 1", field_name="n_shots", field_value=n_shots)
    probs = dense.probabilities()
    probs = probs / probs.sum()
    draws = _rng(seed).multinomial(n_shots, probs)
    counts = {format(i, f"0{dense.n}b"): int(c) for i, c in enumerate(draws) if c > 0}
    return OutcomeCounts(counts, int(n_shots), dense.n)


def basis_probabilities(dense: DenseState, tol: float = 0.0) -> Dict[str, float]:
    """Probabilités non nulles indexées par chaîne de bits."""
    probs = dense.probabilities()
    return {format(i, f"0{dense.n}b"): float(p) for i, p in enumerate(probs) if p > tol}


def random_unary_circuit(n: int, n_gates: int, rng: np.random.Generator) -> Circuit:
    """Circuit aléatoire X + RBS, utilisé par les tests de propriétés et le selftest."""
    gates: List[Gate] = [Gate.x(int(rng.integers(n)))]
    for _ in range(n_gates):
        a, b = rng.choice(n, size=2, replace=False)
        gates.append(Gate.rbs(int(a), int(b), float(rng.uniform(-np.pi, np.pi))))
    return Circuit(n, tuple(gates))
