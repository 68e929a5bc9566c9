#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Ingestion des jeux de données MedMNIST

Lecture des archives NPZ (en-têtes NPY v1/v2 validés avec diagnostic d'octet),
binarisation des étiquettes, réduction PCA ajustée sur l'entraînement seul,
normalisation par échantillon et sous-échantillonnage équilibré. Un format CSV
de secours (split,label,p0..p783) permet un aller-retour sans perte.
"""

import hashlib
import io
import logging
import zipfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterator, Optional, Tuple, Union

import numpy as np
import numpy.lib.format as npy_format
import pandas as pd

from utils.error_handler import DatasetFormatError, FileSystemError, ValidationError

# Configuration du logging
logger = logging.getLogger(__name__)

SPLITS = ("train", "test", "val")
TASKS = ("pneumonia", "retina_0_vs_rest")
DEFAULT_PIXEL_SCALE = 255.0
NORM_EPSILON = 1e-12

PathLike = Union[str, Path]


@dataclass
class RawDataset:
    """Images (N, H, W) uint8 et étiquettes (N, 1) uint8 d'un split."""
    images: np.ndarray
    labels: np.ndarray
    split: str

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValidationError(f"Split inconnu: {self.split}", field_name="split", field_value=self.split)
        if self.images.dtype != np.uint8 or self.labels.dtype != np.uint8:
            raise DatasetFormatError(
                f"Types attendus uint8, reçus {self.images.dtype}/{self.labels.dtype} ({self.split})"
            )
        if self.images.ndim != 3:
            raise DatasetFormatError(f"Images de forme {self.images.shape}, attendu (N, H, W) ({self.split})")
        if self.labels.ndim == 1:
            self.labels = self.labels.reshape(-1, 1)
        if self.labels.shape != (self.images.shape[0], 1):
            raise DatasetFormatError(
                f"Étiquettes de forme {self.labels.shape} pour {self.images.shape[0]} images ({self.split})"
            )

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def n_pixels(self) -> int:
        return int(self.images.shape[1] * self.images.shape[2])

    def flat(self) -> np.ndarray:
        return self.images.reshape(len(self), -1)


def _read_npy_member(archive: zipfile.ZipFile, member: str, path: Path) -> np.ndarray:
    """
    Décode un membre NPY : chaîne magique, version, longueur d'en-tête puis
    dictionnaire (descr, fortran_order, shape), et enfin les données brutes.
    """
    raw = archive.read(member)
    stream = io.BytesIO(raw)
    try:
        version = npy_format.read_magic(stream)
    except ValueError as e:
        raise DatasetFormatError(f"Chaîne magique NPY invalide dans {member}", file_path=str(path),
                                 member=member, byte_offset=0, original_exception=e)
    try:
        if version == (1, 0):
            shape, fortran_order, dtype = npy_format.read_array_header_1_0(stream)
        elif version == (2, 0):
            shape, fortran_order, dtype = npy_format.read_array_header_2_0(stream)
        else:
            raise ValueError(f"version NPY non supportée {version}")
    except ValueError as e:
        raise DatasetFormatError(f"En-tête NPY invalide dans {member}: {e}", file_path=str(path),
                                 member=member, byte_offset=stream.tell(), original_exception=e)

    offset = stream.tell()
    if dtype != np.dtype("|u1") and dtype != np.dtype("<u1"):
        raise DatasetFormatError(f"Type {dtype.str} dans {member}, attendu uint8 petit-boutiste",
                                 file_path=str(path), member=member, byte_offset=offset)
    if fortran_order:
        raise DatasetFormatError(f"Ordre Fortran non supporté dans {member}", file_path=str(path),
                                 member=member, byte_offset=offset)

    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    available = len(raw) - offset
    if available < expected:
        raise DatasetFormatError(
            f"Données tronquées dans {member}: {available} octets sur {expected}",
            file_path=str(path), member=member, byte_offset=offset + available
        )
    return np.frombuffer(raw, dtype=np.uint8, count=expected, offset=offset).reshape(shape).copy()


def read_medmnist(path: PathLike) -> Dict[str, RawDataset]:
    """
    Lit une archive MedMNIST (.npz) et valide chaque tableau.

    Args:
        path (PathLike): Chemin de l'archive

    Returns:
        Dict[str, RawDataset]: Splits présents ('train', 'test' et éventuellement 'val')
    """
    path = Path(path)
    if not path.exists():
        raise FileSystemError(f"Archive introuvable: {path}", file_path=str(path), operation="read")

    try:
        archive = zipfile.ZipFile(path)
    except (zipfile.BadZipFile, OSError) as e:
        raise DatasetFormatError(f"Archive NPZ illisible ou tronquée: {path}", file_path=str(path),
                                 original_exception=e)

    with archive:
        members = {name[:-4] if name.endswith(".npy") else name: name for name in archive.namelist()}
        splits = {}
        for split in SPLITS:
            keys = (f"{split}_images", f"{split}_labels")
            present = [key in members for key in keys]
            if not any(present):
                if split != "val":
                    raise DatasetFormatError(f"Clés {keys} absentes de {path}", file_path=str(path))
                continue
            if not all(present):
                missing = keys[present.index(False)]
                raise DatasetFormatError(f"Clé {missing} absente de {path}", file_path=str(path), member=missing)
            try:
                images = _read_npy_member(archive, members[keys[0]], path)
                labels = _read_npy_member(archive, members[keys[1]], path)
            except (zipfile.BadZipFile, EOFError) as e:
                raise DatasetFormatError(f"Archive tronquée: {path}", file_path=str(path), original_exception=e)
            splits[split] = RawDataset(images, labels, split)

    logger.info(f"Archive {path.name} lue: " +
                ", ".join(f"{name}={len(raw)}" for name, raw in splits.items()))
    return splits


def binarize(raw: RawDataset, task: str) -> np.ndarray:
    """
    Étiquettes binaires d'un split.

    Args:
        raw (RawDataset): Split brut
        task (str): 'pneumonia' (déjà binaire) ou 'retina_0_vs_rest' (0 contre 1..4)

    Returns:
        np.ndarray: Étiquettes 0/1 (N,)
    """
    labels = raw.labels.ravel().astype(int)
    if task == "pneumonia":
        allowed = (0, 1)
    elif task == "retina_0_vs_rest":
        allowed = (0, 1, 2, 3, 4)
    else:
        raise ValidationError(f"Tâche inconnue: {task}", field_name="task", field_value=task)

    unexpected = np.setdiff1d(np.unique(labels), allowed)
    if unexpected.size:
        raise DatasetFormatError(f"Valeurs d'étiquette inattendues pour {task}: {unexpected.tolist()}")
    return (labels != 0).astype(int)


def class_counts(labels: np.ndarray) -> Tuple[int, int]:
    labels = np.asarray(labels).ravel()
    return int(np.sum(labels == 0)), int(np.sum(labels == 1))


@dataclass(frozen=True)
class PcaModel:
    """Moyenne et composantes (k, P) à lignes orthonormées, ajustées sur l'entraînement."""
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    pixel_scale: float = DEFAULT_PIXEL_SCALE
    train_digest: str = ""

    @property
    def k(self) -> int:
        return int(self.components.shape[0])

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(self.mean).tobytes())
        digest.update(np.ascontiguousarray(self.components).tobytes())
        return digest.hexdigest()


def _as_pixels(images: np.ndarray, pixel_scale: float) -> np.ndarray:
    images = np.asarray(images)
    return images.reshape(images.shape[0], -1).astype(float) / pixel_scale


def fit_pca(train_images: np.ndarray, k: int, pixel_scale: float = DEFAULT_PIXEL_SCALE) -> PcaModel:
    """
    Ajuste une PCA par diagonalisation de la covariance des pixels centrés.

    Les composantes sont triées par variance décroissante ; la composante de plus
    grande magnitude de chaque vecteur propre est rendue positive.

    Args:
        train_images (np.ndarray): Images d'entraînement (N, H, W) ou (N, P)
        k (int): Nombre de composantes
        pixel_scale (float): Diviseur appliqué aux pixels avant la PCA

    Returns:
        PcaModel: Modèle ajusté
    """
    X = _as_pixels(train_images, pixel_scale)
    n_samples, n_features = X.shape
    if k < 1 or k > n_features:
        raise ValidationError(f"k={k} hors de [1, {n_features}]", field_name="k", field_value=k)
    if n_samples < 2:
        raise ValidationError("Au moins deux images sont nécessaires pour la PCA", field_name="train_images")

    mean = X.mean(axis=0)
    centered = X - mean
    covariance = centered.T @ centered / (n_samples - 1)
    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    order = np.argsort(eigenvalues)[::-1][:k]
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    components = eigenvectors[:, order].T

    rank = int(np.sum(eigenvalues > eigenvalues.max(initial=0.0) * 1e-12)) if eigenvalues.size else 0
    if k > rank:
        logger.warning(f"k={k} dépasse le rang numérique des données ({rank}); composantes de variance nulle")

    largest = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(k), largest])
    signs[signs == 0] = 1.0
    components = components * signs[:, None]

    digest = hashlib.sha256(np.ascontiguousarray(train_images).tobytes()).hexdigest()
    logger.debug(f"PCA ajustée: k={k}, variance expliquée={eigenvalues.sum():.4f}")
    return PcaModel(mean, components, eigenvalues, float(pixel_scale), digest)


def transform(model: PcaModel, images: np.ndarray) -> np.ndarray:
    """Projection (N, k) des images centrées sur les composantes."""
    X = _as_pixels(images, model.pixel_scale)
    if X.shape[1] != model.mean.shape[0]:
        raise ValidationError(f"{X.shape[1]} pixels pour un modèle de {model.mean.shape[0]}", field_name="images")
    return (X - model.mean) @ model.components.T


def reconstruct(model: PcaModel, features: np.ndarray) -> np.ndarray:
    """Reconstruction (N, P) dans l'échelle des pixels divisés."""
    return np.asarray(features) @ model.components + model.mean


@dataclass
class PreparedDataset:
    """Caractéristiques normalisées, normes conservées, étiquettes binaires et provenance."""
    features: np.ndarray
    norms: np.ndarray
    labels: np.ndarray
    provenance: str
    split: str = "train"

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def k(self) -> int:
        return int(self.features.shape[1])

    def raw_features(self) -> np.ndarray:
        return self.features * self.norms[:, None]

    def subset(self, index: np.ndarray) -> "PreparedDataset":
        index = np.asarray(index, dtype=int)
        return replace(self, features=self.features[index], norms=self.norms[index], labels=self.labels[index])


@dataclass
class PreparedSplits:
    """Splits préparés partageant un même modèle PCA."""
    pca: PcaModel
    splits: Dict[str, PreparedDataset] = field(default_factory=dict)

    def __getitem__(self, split: str) -> PreparedDataset:
        return self.splits[split]

    def __contains__(self, split: str) -> bool:
        return split in self.splits

    def __iter__(self) -> Iterator[str]:
        return iter(self.splits)

    @property
    def train(self) -> PreparedDataset:
        return self.splits["train"]

    @property
    def test(self) -> PreparedDataset:
        return self.splits["test"]


def provenance_hash(task: str, k: int, pixel_scale: float, normalize: bool, train_digest: str) -> str:
    key = f"{task}|k={k}|scale={pixel_scale!r}|normalize={normalize}|train={train_digest}"
    return hashlib.sha256(key.encode("utf-8")).hexdigest()[:16]


def _normalize_rows(features: np.ndarray, split: str) -> Tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(features, axis=1)
    zero = np.flatnonzero(norms <= NORM_EPSILON)
    if zero.size:
        raise ValidationError(
            f"{zero.size} ligne(s) de caractéristiques nulles dans {split} (première: {zero[0]})",
            field_name="features", field_value=int(zero[0])
        )
    return features / norms[:, None], norms


def prepare(raw: Dict[str, RawDataset], task: str, k: int, normalize: bool = True,
            pixel_scale: float = DEFAULT_PIXEL_SCALE) -> PreparedSplits:
    """
    Binarisation, PCA ajustée sur 'train' puis normalisation par échantillon.

    Args:
        raw (Dict[str, RawDataset]): Splits lus par read_medmnist
        task (str): Tâche de binarisation
        k (int): Dimension après PCA
        normalize (bool): Normaliser chaque ligne (normes conservées)
        pixel_scale (float): Diviseur des pixels

    Returns:
        PreparedSplits: Splits préparés
    """
    if "train" not in raw:
        raise ValidationError("Le split 'train' est requis pour ajuster la PCA", field_name="raw")

    model = fit_pca(raw["train"].images, k, pixel_scale)
    provenance = provenance_hash(task, k, pixel_scale, normalize, model.train_digest)
    prepared = PreparedSplits(model)

    for split, data in raw.items():
        labels = binarize(data, task)
        features = transform(model, data.images)
        if normalize:
            features, norms = _normalize_rows(features, split)
        else:
            norms = np.linalg.norm(features, axis=1)
        prepared.splits[split] = PreparedDataset(features, norms, labels, provenance, split)
        logger.info(f"Split {split} préparé: {len(data)} échantillons, classes {class_counts(labels)}")

    return prepared


def subsample_balanced(dataset: PreparedDataset, per_class: int, seed: int) -> PreparedDataset:
    """
    Tirage sans remise de per_class échantillons de chaque classe.

    Args:
        dataset (PreparedDataset): Jeu de départ
        per_class (int): Nombre d'échantillons par classe
        seed (int): Graine

    Returns:
        PreparedDataset: Sous-ensemble équilibré (classes 0 puis 1, mélangé)
    """
    if per_class < 1:
        raise ValidationError("per_class doit être >= 1 (sous-ensemble vide)", field_name="per_class",
                              field_value=per_class)
    counts = class_counts(dataset.labels)
    if per_class > min(counts):
        raise ValidationError(f"per_class={per_class} dépasse l'effectif minimal par classe {counts}",
                              field_name="per_class", field_value=per_class)

    rng = np.random.default_rng(seed)
    chosen = [
        rng.choice(np.flatnonzero(dataset.labels == label), size=per_class, replace=False)
        for label in (0, 1)
    ]
    index = np.concatenate(chosen)
    rng.shuffle(index)
    return dataset.subset(index)


def subsample_fraction(dataset: PreparedDataset, fraction: float, seed: int) -> PreparedDataset:
    """Tirage sans remise d'une fraction du jeu (variante réduite des grandes simulations)."""
    if not 0.0 < fraction <= 1.0:
        raise ValidationError(f"Fraction {fraction} hors de ]0, 1]", field_name="fraction", field_value=fraction)
    if fraction == 1.0:
        return dataset
    size = max(1, int(round(fraction * len(dataset))))
    index = np.sort(np.random.default_rng(seed).choice(len(dataset), size=size, replace=False))
    return dataset.subset(index)


# --- Format CSV de secours -------------------------------------------------

def write_csv(raw: Dict[str, RawDataset], path: PathLike) -> Path:
    """
    Écrit les splits au format split,label,p0..p{P-1} avec une ligne d'en-tête.
    """
    path = Path(path)
    frames = []
    for split, data in raw.items():
        frame = pd.DataFrame(data.flat(), columns=[f"p{i}" for i in range(data.n_pixels)])
        frame.insert(0, "label", data.labels.ravel())
        frame.insert(0, "split", split)
        frames.append(frame)
    if not frames:
        raise ValidationError("Aucun split à écrire", field_name="raw")
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.concat(frames, ignore_index=True).to_csv(path, index=False)
    logger.info(f"CSV écrit: {path}")
    return path


def _first_field(path: Path) -> str:
    with open(path, "r", encoding="utf-8") as handle:
        line = handle.readline()
    return line.split(",", 1)[0].strip()


def read_csv(path: PathLike, side: Optional[int] = None) -> Dict[str, RawDataset]:
    """
    Lit le format CSV de secours ; la ligne d'en-tête est détectée par le littéral 'split'.

    Args:
        path (PathLike): Fichier CSV
        side (Optional[int]): Côté des images (déduit du nombre de pixels si absent)

    Returns:
        Dict[str, RawDataset]: Splits lus
    """
    path = Path(path)
    if not path.exists():
        raise FileSystemError(f"Fichier introuvable: {path}", file_path=str(path), operation="read")
    if path.stat().st_size == 0:
        raise DatasetFormatError(f"Fichier CSV vide: {path}", file_path=str(path), line_number=1)

    has_header = _first_field(path) == "split"
    try:
        frame = pd.read_csv(path, header=0 if has_header else None, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as e:
        raise DatasetFormatError(f"Fichier CSV vide: {path}", file_path=str(path), line_number=1,
                                 original_exception=e)
    if frame.empty:
        raise DatasetFormatError(f"Aucune ligne de données dans {path}", file_path=str(path),
                                 line_number=2 if has_header else 1)

    n_pixels = frame.shape[1] - 2
    side = side or int(round(np.sqrt(n_pixels)))
    if n_pixels < 1 or side * side != n_pixels:
        raise DatasetFormatError(f"{n_pixels} colonnes de pixels ne forment pas une image carrée",
                                 file_path=str(path), line_number=1)

    first_line = 2 if has_header else 1
    values = frame.iloc[:, 1:].apply(pd.to_numeric, errors="coerce")
    bad = values.isna().any(axis=1) | (values < 0).any(axis=1) | (values > 255).any(axis=1)
    bad |= (values.fillna(0) % 1 != 0).any(axis=1)
    bad |= ~frame.iloc[:, 0].isin(SPLITS)
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise DatasetFormatError(f"Ligne malformée dans {path}", file_path=str(path),
                                 line_number=first_line + row)

    data = values.to_numpy(dtype=np.int64).astype(np.uint8)
    split_column = frame.iloc[:, 0].to_numpy()
    raw = {}
    for split in SPLITS:
        mask = split_column == split
        if mask.any():
            block = data[mask]
            raw[split] = RawDataset(block[:, 1:].reshape(-1, side, side), block[:, :1].copy(), split)
    logger.info(f"CSV lu: {path} ({len(frame)} lignes)")
    return raw


def write_npz(raw: Dict[str, RawDataset], path: PathLike) -> Path:
    """Écrit les splits dans une archive NPZ au schéma MedMNIST."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {}
    for split, data in raw.items():
        arrays[f"{split}_images"] = data.images
        arrays[f"{split}_labels"] = data.labels
    np.savez(path, **arrays)
    logger.info(f"NPZ écrit: {path}")
    return path


def _read_any(path: Path) -> Dict[str, RawDataset]:
    if path.suffix.lower() == ".csv":
        return read_csv(path)
    return read_medmnist(path)


def convert_csv(path_in: PathLike, path_out: PathLike) -> Path:
    """
    Conversion NPZ ↔ CSV ; le sens est déduit de l'extension de sortie.

    Args:
        path_in (PathLike): Fichier source (.npz ou .csv)
        path_out (PathLike): Fichier cible (.csv ou .npz)

    Returns:
        Path: Fichier écrit
    """
    path_in, path_out = Path(path_in), Path(path_out)
    raw = _read_any(path_in)
    if path_out.suffix.lower() == ".csv":
        return write_csv(raw, path_out)
    if path_out.suffix.lower() == ".npz":
        return write_npz(raw, path_out)
    raise ValidationError(f"Extension de sortie non supportée: {path_out.suffix}", field_name="path_out",
                          field_value=str(path_out))


def load_dataset(path: PathLike) -> Dict[str, RawDataset]:
    """Lit une archive NPZ ou un fichier CSV de secours."""
    return _read_any(Path(path))
