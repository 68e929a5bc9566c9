# -*- coding: utf-8 -*-
"""
Fixtures partagées : archives MedMNIST synthétiques au schéma officiel.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Configuration du path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))


def synthetic_images(labels: np.ndarray, rng: np.random.Generator, side: int = 28) -> np.ndarray:
    """Images bruitées dont la luminosité d'un bloc dépend de la classe."""
    images = rng.integers(40, 90, size=(len(labels), side, side))
    block = side // 2
    images[:, :block, :block] += (np.asarray(labels).reshape(-1, 1, 1) > 0) * 110
    images[:, block:, block:] += (np.asarray(labels).reshape(-1, 1, 1) == 0) * 60
    return images.clip(0, 255).astype(np.uint8)


def write_archive(path: Path, task: str = "pneumonia", n_train: int = 60, n_test: int = 24,
                  n_val: int = 0, seed: int = 0, side: int = 28) -> Path:
    rng = np.random.default_rng(seed)
    n_classes = 2 if task == "pneumonia" else 5
    arrays = {}
    for split, size in (("train", n_train), ("test", n_test), ("val", n_val)):
        if size == 0:
            continue
        labels = np.arange(size) % n_classes
        rng.shuffle(labels)
        arrays[f"{split}_images"] = synthetic_images(labels, rng, side)
        arrays[f"{split}_labels"] = labels.astype(np.uint8).reshape(-1, 1)
    np.savez(path, **arrays)
    return path


@pytest.fixture
def archive_factory(tmp_path):
    """Fabrique d'archives .npz synthétiques dans le répertoire temporaire du test."""
    def make(name: str = "pneumoniamnist.npz", **kwargs) -> Path:
        return write_archive(tmp_path / name, **kwargs)
    return make


@pytest.fixture
def pneumonia_archive(archive_factory):
    return archive_factory("pneumoniamnist.npz", task="pneumonia")


@pytest.fixture
def retina_archive(archive_factory):
    return archive_factory("retinamnist.npz", task="retina", n_train=80, n_test=30, seed=1)


@pytest.fixture
def app_settings(monkeypatch, tmp_path):
    """Recharge la configuration globale avec des variables d'environnement données."""
    import utils.config_manager as config_manager

    def _apply(**env):
        for key, value in env.items():
            monkeypatch.setenv(key, str(value))
        manager = config_manager.ConfigManager(env_file=tmp_path / "absent.env")
        monkeypatch.setattr(config_manager, "_config_manager", manager)
        return manager.get_config()
    return _apply
