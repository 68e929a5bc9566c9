#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Exécution des expériences

Configurations validées (pydantic) d'une expérience et d'une suite de type
tableau de résultats, exécution seedée des répétitions, reprise cellule par
cellule et agrégation moyenne ± écart type.
"""

import logging
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import orjson
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticValidationError, model_validator

from core.dataio import PreparedSplits, load_dataset, prepare, subsample_balanced, subsample_fraction
from core.estimators import EstimatorMode
from core.evaluation import MetricsReport, plot_history
from core.export import ReportWriter
from core.orthonn import OrthoNet, OrthoTrainConfig, SvbNet, infer, qpc_train, svb_train
from core.qnn import ClassicalMlp, Mlp, TrainConfig, predict_proba, train as qnn_train
from utils.config_manager import get_config
from utils.error_handler import ConfigurationError, FileSystemError

# Configuration du logging
logger = logging.getLogger(__name__)

DATASET_TASKS = {"pneumonia": "pneumonia", "retina": "retina_0_vs_rest"}
TRAINING_BY_METHOD = {"qnn": ("cla", "sim"), "orthonn": ("qpc", "svb")}
KNOWN_SPLIT_SIZES = {"pneumonia": (4708, 624), "retina": (1080, 400)}
METRIC_COLUMNS = [f"{split}_{metric}" for split in ("train", "test") for metric in ("auc", "acc")]


class Hyperparameters(BaseModel):
    """Hyperparamètres d'entraînement partagés par les méthodes."""
    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(30, ge=1)
    batch_size: int = Field(10, ge=1)
    learning_rate: float = Field(0.05, ge=0.0)
    init_scale: float = Field(np.pi / 4, gt=0.0)
    svb_epsilon: Optional[float] = Field(0.01, gt=0.0)
    svb_clip_every: int = Field(1, ge=1)


def _check_model(method: str, layers: List[int], training: str, train_mode: EstimatorMode,
                 infer_mode: EstimatorMode) -> None:
    if len(layers) < 2 or min(layers) < 1:
        raise ValueError(f"layers must list at least two positive sizes, got {layers}")
    if layers[-1] != 2:
        raise ValueError("the last layer must have 2 nodes (one per class)")
    if training not in TRAINING_BY_METHOD[method]:
        raise ValueError(f"training '{training}' is not available for method '{method}' "
                         f"(expected one of {TRAINING_BY_METHOD[method]})")
    if training != "sim" and not train_mode.is_exact:
        raise ValueError(f"train_mode must be exact for '{training}' training")
    if training == "svb" and not infer_mode.is_exact:
        raise ValueError("SVB weights are not pyramids and only support exact inference")
    if method == "orthonn" and any(b > a for a, b in zip(layers[:-1], layers[1:])):
        raise ValueError("orthogonal layers cannot grow: each size must be <= the previous one")


class ExperimentConfig(BaseModel):
    """Une expérience : jeu de données, architecture, modes d'entraînement et d'inférence."""
    model_config = ConfigDict(extra="forbid")

    name: str = "experiment"
    dataset: Literal["pneumonia", "retina"]
    task: Optional[str] = None
    pca_k: int = Field(..., ge=1, le=784)
    method: Literal["qnn", "orthonn"]
    layers: List[int]
    training: Literal["cla", "sim", "qpc", "svb"]
    train_mode: EstimatorMode = Field(default_factory=EstimatorMode.exact)
    infer_mode: EstimatorMode = Field(default_factory=EstimatorMode.exact)
    hyperparameters: Hyperparameters = Field(default_factory=Hyperparameters)
    repetitions: int = Field(1, ge=1)
    seed: int = Field(0, ge=0)
    output_dir: str = "results/experiment"
    data_dir: Optional[str] = None
    archive: Optional[str] = None
    normalize: bool = True
    subsample_per_class: Optional[int] = Field(None, ge=1)
    train_fraction: float = Field(1.0, gt=0.0, le=1.0)
    plots: bool = True
    progress: bool = False

    @model_validator(mode="after")
    def _check(self) -> "ExperimentConfig":
        expected_task = DATASET_TASKS[self.dataset]
        if self.task is None:
            self.task = expected_task
        elif self.task != expected_task:
            raise ValueError(f"task '{self.task}' does not match dataset '{self.dataset}' ({expected_task})")
        if self.layers and self.layers[0] != self.pca_k:
            raise ValueError(f"first layer size {self.layers[0]} must equal pca_k {self.pca_k}")
        _check_model(self.method, self.layers, self.training, self.train_mode, self.infer_mode)
        return self

    def archive_path(self) -> Path:
        if self.archive:
            return Path(self.archive)
        data = get_config().data
        path = data.archive_path(self.dataset)
        return Path(self.data_dir) / path.name if self.data_dir else path

    def label(self) -> str:
        return f"{self.method} {self.layers} {self.training}/{self.infer_mode.label()}"


class SuiteRow(BaseModel):
    """Une ligne du tableau : méthode, couches, entraînement, inférence."""
    model_config = ConfigDict(extra="forbid")

    name: Optional[str] = None
    method: Literal["qnn", "orthonn"]
    layers: List[int]
    training: Literal["cla", "sim", "qpc", "svb"]
    train_mode: EstimatorMode = Field(default_factory=EstimatorMode.exact)
    infer_mode: EstimatorMode = Field(default_factory=EstimatorMode.exact)
    hyperparameters: Hyperparameters = Field(default_factory=Hyperparameters)
    subsample_per_class: Dict[str, int] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check(self) -> "SuiteRow":
        _check_model(self.method, self.layers, self.training, self.train_mode, self.infer_mode)
        if self.name is None:
            self.name = _slug(f"{self.method}-{'x'.join(map(str, self.layers))}-{self.training}-"
                              f"{self.infer_mode.label()}")
        return self


class SuiteConfig(BaseModel):
    """Suite de lignes évaluées sur plusieurs jeux de données avec répétitions."""
    model_config = ConfigDict(extra="forbid")

    name: str = "table1"
    datasets: List[Literal["pneumonia", "retina"]] = Field(default_factory=lambda: ["pneumonia", "retina"])
    rows: List[SuiteRow] = Field(..., min_length=1)
    repetitions: int = Field(10, ge=1)
    seed: int = Field(0, ge=0)
    output_dir: str = "results/table1"
    data_dir: Optional[str] = None
    archives: Dict[str, str] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _unique_names(self) -> "SuiteConfig":
        names = [row.name for row in self.rows]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise ValueError(f"duplicate row names: {duplicates}")
        return self

    def cell_config(self, row: SuiteRow, dataset: str) -> ExperimentConfig:
        return ExperimentConfig(
            name=f"{row.name}__{dataset}",
            dataset=dataset,
            pca_k=row.layers[0],
            method=row.method,
            layers=row.layers,
            training=row.training,
            train_mode=row.train_mode,
            infer_mode=row.infer_mode,
            hyperparameters=row.hyperparameters,
            repetitions=self.repetitions,
            seed=self.seed,
            output_dir=self.output_dir,
            data_dir=self.data_dir,
            archive=self.archives.get(dataset),
            subsample_per_class=row.subsample_per_class.get(dataset),
            plots=False,
        )


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "-", text).strip("-")


def _load_model(model_cls, path: Union[str, Path], overrides: Optional[Dict[str, Any]] = None):
    path = Path(path)
    try:
        data = orjson.loads(path.read_bytes())
    except OSError as e:
        raise ConfigurationError(f"Fichier de configuration illisible: {e}", config_file=str(path),
                                 original_exception=e)
    except orjson.JSONDecodeError as e:
        raise ConfigurationError(f"JSON invalide dans {path}: {e}", config_file=str(path), original_exception=e)
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path} doit contenir un objet JSON", config_file=str(path))
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return validate_model(model_cls, data, str(path))


def validate_model(model_cls, data: Dict[str, Any], source: Optional[str] = None):
    """Valide un dictionnaire ; les erreurs pydantic deviennent une ConfigurationError."""
    try:
        return model_cls.model_validate(data)
    except PydanticValidationError as e:
        errors = [
            {"field": ".".join(str(p) for p in err["loc"]), "message": err["msg"]}
            for err in e.errors()
        ]
        first = errors[0] if errors else {"field": None, "message": str(e)}
        error = ConfigurationError(f"Configuration invalide ({first['field']}): {first['message']}",
                                   config_key=first["field"], config_file=source, original_exception=e)
        error.details["errors"] = errors
        raise error


def load_experiment_config(path: Union[str, Path], overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """
    Charge une configuration d'expérience JSON ; les options non nulles remplacent le fichier.

    Args:
        path (Union[str, Path]): Fichier JSON
        overrides (Optional[Dict[str, Any]]): Valeurs prioritaires

    Returns:
        ExperimentConfig: Configuration validée
    """
    return _load_model(ExperimentConfig, path, overrides)


def load_suite_config(path: Union[str, Path], overrides: Optional[Dict[str, Any]] = None) -> SuiteConfig:
    return _load_model(SuiteConfig, path, overrides)


# ---------------------------------------------------------------------------
# Données
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8)
def _prepared(archive: str, task: str, k: int, normalize: bool, pixel_scale: float) -> PreparedSplits:
    return prepare(load_dataset(archive), task, k, normalize=normalize, pixel_scale=pixel_scale)


def load_prepared(config: ExperimentConfig) -> PreparedSplits:
    """Splits préparés pour une configuration (mis en cache par processus)."""
    archive = config.archive_path()
    if not archive.exists():
        raise FileSystemError(f"Archive introuvable: {archive} (définir MEDMNIST_DIR ou data_dir)",
                              file_path=str(archive), operation="read")
    return _prepared(str(archive), config.task, config.pca_k, config.normalize, get_config().data.pixel_scale)


def estimate_circuit_counts(config: ExperimentConfig, n_train: Optional[int] = None,
                            n_test: Optional[int] = None) -> Dict[str, Any]:
    """
    Nombre de circuits (et de tirs) qu'exécuterait l'expérience, sans lire les données.

    Un produit W·a coûte un circuit par sortie ; Wᵀ·δ un circuit par entrée de couche.
    Une couche orthogonale échantillonnée coûte un circuit par couche et par échantillon.
    """
    sizes_train, sizes_test = KNOWN_SPLIT_SIZES[config.dataset]
    n_train = n_train if n_train is not None else sizes_train
    n_test = n_test if n_test is not None else sizes_test
    if config.subsample_per_class:
        n_train = 2 * config.subsample_per_class
    n_train = max(1, int(round(config.train_fraction * n_train)))

    layers = config.layers
    epochs = config.hyperparameters.epochs
    if config.method == "qnn":
        forward = sum(layers[1:])
        backward = sum(layers[1:-1])
        train_circuits = n_train * epochs * (forward + backward) if config.training == "sim" else 0
        infer_per_sample = forward
    else:
        train_circuits = 0
        infer_per_sample = len(layers) - 1
    infer_circuits = 0 if config.infer_mode.is_exact else (n_train + n_test) * infer_per_sample

    train_shots = 0 if config.train_mode.is_exact else config.train_mode.n_shots
    infer_shots = 0 if config.infer_mode.is_exact else config.infer_mode.n_shots
    return {
        "n_train": n_train,
        "n_test": n_test,
        "train_circuits_per_repetition": int(train_circuits),
        "inference_circuits_per_repetition": int(infer_circuits),
        "shots_per_train_circuit": train_shots,
        "shots_per_inference_circuit": infer_shots,
        "total_shots": int(config.repetitions * (train_circuits * train_shots + infer_circuits * infer_shots)),
    }


# ---------------------------------------------------------------------------
# Répétitions
# ---------------------------------------------------------------------------

@dataclass
class RepetitionResult:
    """Résultat d'une répétition : rapports train/test, historique et modèle."""
    repetition: int
    train: MetricsReport
    test: MetricsReport
    history: pd.DataFrame
    model: Dict[str, Any]
    wall_time: float

    def metrics(self) -> Dict[str, Any]:
        return {
            "repetition": self.repetition,
            "train": self.train.to_dict(),
            "test": self.test.to_dict(),
            "final_loss": float(self.history["loss"].iloc[-1]),
        }


def repetition_seeds(seed: int, repetition: int) -> Tuple[int, int, int]:
    """Graines (initialisation, tirs d'entraînement, tirs d'inférence) d'une répétition."""
    state = np.random.SeedSequence([seed, repetition]).generate_state(3)
    return int(state[0]), int(state[1]), int(state[2])


def _training_set(config: ExperimentConfig, data: PreparedSplits, seed: int):
    train = data.train
    if config.subsample_per_class:
        train = subsample_balanced(train, config.subsample_per_class, seed)
    if config.train_fraction < 1.0:
        train = subsample_fraction(train, config.train_fraction, seed)
    return train


def run_repetition(config: ExperimentConfig, repetition: int, data: PreparedSplits) -> RepetitionResult:
    """
    Entraîne et évalue un modèle pour une répétition.

    Args:
        config (ExperimentConfig): Configuration validée
        repetition (int): Indice de répétition (dérive les graines)
        data (PreparedSplits): Splits préparés

    Returns:
        RepetitionResult: Résultat
    """
    init_seed, train_seed, infer_seed = repetition_seeds(config.seed, repetition)
    rng = np.random.default_rng(init_seed)
    train_set = _training_set(config, data, init_seed)
    test_set = data.test
    hp = config.hyperparameters
    X, y = train_set.features, train_set.labels
    X_test, y_test = test_set.features, test_set.labels
    infer_mode = config.infer_mode.with_seed(infer_seed)

    start = time.perf_counter()
    if config.method == "qnn":
        qnn_config = TrainConfig(epochs=hp.epochs, batch_size=hp.batch_size, learning_rate=hp.learning_rate,
                                 mode=config.train_mode.with_seed(train_seed), seed=train_seed,
                                 progress=config.progress)
        mlp = Mlp.init(config.layers, rng)
        if config.training == "cla":
            reference = ClassicalMlp(mlp)
            history = reference.train(X, y, qnn_config, X_test, y_test)
            mlp = reference.mlp
        else:
            mlp, history = qnn_train(mlp, X, y, qnn_config, X_test, y_test)
        proba_train = predict_proba(mlp, X, infer_mode, call_counter=0)
        proba_test = predict_proba(mlp, X_test, infer_mode, call_counter=1)
        model = mlp.to_dict()
    else:
        ortho_config = OrthoTrainConfig(epochs=hp.epochs, batch_size=hp.batch_size, learning_rate=hp.learning_rate,
                                        seed=train_seed, init_scale=hp.init_scale, svb_epsilon=hp.svb_epsilon,
                                        svb_clip_every=hp.svb_clip_every, progress=config.progress)
        net = OrthoNet.random(config.layers, rng, hp.init_scale)
        if config.training == "qpc":
            net, history = qpc_train(net, X, y, ortho_config, X_test, y_test)
            proba_train = infer(net, X, infer_mode, call_counter=0)
            proba_test = infer(net, X_test, infer_mode, call_counter=1)
            model = net.to_dict()
        else:
            svb, history = svb_train(SvbNet.from_ortho(net), X, y, ortho_config, X_test, y_test)
            proba_train = svb.predict_proba(X)
            proba_test = svb.predict_proba(X_test)
            model = svb.to_dict()
    wall_time = time.perf_counter() - start

    metadata = {"experiment": config.name, "repetition": repetition}
    result = RepetitionResult(
        repetition,
        MetricsReport.evaluate(proba_train, y, "train", metadata),
        MetricsReport.evaluate(proba_test, y_test, "test", metadata),
        history,
        model,
        wall_time,
    )
    logger.info(f"{config.label()} rép. {repetition}: test AUC {result.test.auc:.4f}, "
                f"ACC {result.test.acc:.4f} ({wall_time:.1f}s)")
    return result


def summarize(results: List[Dict[str, Any]]) -> Dict[str, Dict[str, float]]:
    """Moyenne et écart type (ddof=1, 0 pour une seule répétition) de chaque métrique."""
    frame = pd.DataFrame([
        {f"{split}_{metric}": r[split][metric] for split in ("train", "test") for metric in ("auc", "acc")}
        for r in results
    ], columns=METRIC_COLUMNS).astype(float)
    std = frame.std(ddof=1) if len(frame) > 1 else frame.std(ddof=0)
    return {column: {"mean": float(frame[column].mean()), "std": float(std[column])} for column in METRIC_COLUMNS}


def run_experiment(config: ExperimentConfig, writer: Optional[ReportWriter] = None) -> Dict[str, Any]:
    """
    Exécute toutes les répétitions d'une expérience et écrit ses artefacts.

    metrics.json ne contient que des valeurs déterministes ; les durées et
    l'horodatage sont dans run_info.json.

    Args:
        config (ExperimentConfig): Configuration validée
        writer (Optional[ReportWriter]): Destination (output_dir par défaut)

    Returns:
        Dict[str, Any]: Contenu de metrics.json
    """
    data = load_prepared(config)
    writer = writer or ReportWriter(config.output_dir)
    logger.info(f"Expérience {config.name}: {config.label()} sur {config.dataset}, "
                f"{config.repetitions} répétition(s)")

    repetitions, wall_times = [], []
    for rep in range(config.repetitions):
        result = run_repetition(config, rep, data)
        repetitions.append(result.metrics())
        wall_times.append(result.wall_time)
        writer.write_csv(f"history_rep{rep}.csv", result.history)
        writer.write_json(f"model_rep{rep}.json", result.model)
        if config.plots:
            plot_history(result.history, writer.path(f"history_rep{rep}.svg"), title=config.label())

    metrics = {
        "config": config.model_dump(mode="json"),
        "provenance": data.train.provenance,
        "pca_fingerprint": data.pca.fingerprint(),
        "repetitions": repetitions,
        "summary": summarize(repetitions),
    }
    writer.write_json("metrics.json", metrics)
    writer.write_run_info({"experiment": config.name, "wall_times": wall_times})
    return metrics


# ---------------------------------------------------------------------------
# Suite de type tableau
# ---------------------------------------------------------------------------

def cell_name(row: SuiteRow, dataset: str, repetition: int) -> str:
    return f"cells/{row.name}__{dataset}__rep{repetition}.json"


def _run_cell(config: ExperimentConfig, row_name: str, repetition: int) -> Dict[str, Any]:
    result = run_repetition(config, repetition, load_prepared(config))
    cell = result.metrics()
    cell.update({"row": row_name, "dataset": config.dataset})
    return cell


def table1_runner(suite: SuiteConfig, jobs: int = 1, writer: Optional[ReportWriter] = None) -> pd.DataFrame:
    """
    Exécute chaque (ligne, jeu de données, répétition) et agrège moyenne ± écart type.

    Les cellules déjà présentes dans cells/ sont relues au lieu d'être recalculées.

    Args:
        suite (SuiteConfig): Suite validée
        jobs (int): Nombre de processus (1 : exécution séquentielle)
        writer (Optional[ReportWriter]): Destination (output_dir par défaut)

    Returns:
        pd.DataFrame: Une ligne par ligne configurée, colonnes <dataset>_<split>_<metric>_{mean,std}
    """
    writer = writer or ReportWriter(suite.output_dir)
    cells: Dict[Tuple[str, str, int], Dict[str, Any]] = {}
    pending = []
    for row in suite.rows:
        for dataset in suite.datasets:
            config = suite.cell_config(row, dataset)
            for rep in range(suite.repetitions):
                name = cell_name(row, dataset, rep)
                if writer.exists(name):
                    cells[(row.name, dataset, rep)] = writer.read_json(name)
                    logger.warning(f"Cellule reprise depuis {name}")
                else:
                    pending.append((config, row.name, rep))

    logger.info(f"Suite {suite.name}: {len(pending)} cellule(s) à calculer, {len(cells)} reprise(s)")
    if jobs > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_cell, *args) for args in pending]
            outcomes = [future.result() for future in futures]
    else:
        outcomes = [_run_cell(*args) for args in pending]

    for (config, row_name, rep), cell in zip(pending, outcomes):
        row = next(r for r in suite.rows if r.name == row_name)
        writer.write_json(cell_name(row, config.dataset, rep), cell)
        cells[(row_name, config.dataset, rep)] = cell

    table = aggregate_cells(suite, cells)
    writer.write_csv("table1.csv", table)
    writer.write_markdown("table1.md", format_table(table, suite.datasets), title=suite.name)
    writer.write_json("metrics.json", {"suite": suite.model_dump(mode="json"), "table": table.to_dict("records")})
    writer.write_run_info({"suite": suite.name, "cells_computed": len(pending)})
    return table


def aggregate_cells(suite: SuiteConfig, cells: Dict[Tuple[str, str, int], Dict[str, Any]]) -> pd.DataFrame:
    rows = []
    for row in suite.rows:
        record = {
            "row": row.name,
            "method": row.method,
            "layers": "[" + ",".join(map(str, row.layers)) + "]",
            "training": row.training,
            "inference": row.infer_mode.label(),
        }
        for dataset in suite.datasets:
            results = [cells[(row.name, dataset, rep)] for rep in range(suite.repetitions)]
            for column, stats in summarize(results).items():
                record[f"{dataset}_{column}_mean"] = stats["mean"]
                record[f"{dataset}_{column}_std"] = stats["std"]
        rows.append(record)
    return pd.DataFrame(rows)


def format_table(table: pd.DataFrame, datasets: List[str]) -> pd.DataFrame:
    """Cellules « moyenne±écart type » à deux décimales."""
    formatted = table[["method", "layers", "training", "inference"]].copy()
    for dataset in datasets:
        for column in METRIC_COLUMNS:
            mean, std = table[f"{dataset}_{column}_mean"], table[f"{dataset}_{column}_std"]
            formatted[f"{dataset} {column.replace('_', ' ')}"] = [
                f"{m:.2f}±{s:.2f}" for m, s in zip(mean, std)
            ]
    return formatted
