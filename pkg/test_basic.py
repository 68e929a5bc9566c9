#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Tests de base pour Unary QNN Lab

Script de test simple pour vérifier le bon fonctionnement des modules
principaux, de la configuration et de la gestion d'erreurs, sans données.
"""

import importlib.util
import sys
from pathlib import Path

import numpy as np

# Configuration du path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))


def test_imports():
    """
    Teste l'importation des modules principaux.
    """
    print("Test des imports...")

    from core.unary_core import run_circuit  # noqa: F401
    print("✓ core.unary_core")

    from core.loaders import LoaderTopology  # noqa: F401
    print("✓ core.loaders")

    from core.estimators import estimate_ip  # noqa: F401
    print("✓ core.estimators")

    from core.pyramid import PyramidLayer  # noqa: F401
    print("✓ core.pyramid")

    from core.qnn import Mlp  # noqa: F401
    print("✓ core.qnn")

    from core.orthonn import OrthoNet  # noqa: F401
    print("✓ core.orthonn")

    from core.dataio import read_medmnist  # noqa: F401
    print("✓ core.dataio")

    from core.experiment import run_experiment  # noqa: F401
    print("✓ core.experiment")


def test_package_metadata():
    """
    Teste les métadonnées du package racine et la vérification des dépendances.
    """
    print("\nTest des métadonnées...")

    spec = importlib.util.spec_from_file_location("unary_qnn_lab", project_root / "__init__.py",
                                                  submodule_search_locations=[str(project_root)])
    package = importlib.util.module_from_spec(spec)
    sys.modules[spec.name] = package
    spec.loader.exec_module(package)

    info = package.get_info()
    assert info["version"] == package.get_version() == "1.0.0"
    print(f"✓ {info['name']} v{info['version']}")

    # les valeurs par défaut ne sont définies que dans utils/config_manager.py
    assert not hasattr(package, "DEFAULT_CONFIG")

    status = package.check_dependencies()
    assert status["required"]["numpy"]
    assert set(status["optional"]) == {"logging", "progress", "plots", "dev"}
    print("✓ Dépendances requises présentes")


def test_config_manager():
    """
    Teste le chargement et la validation de la configuration.
    """
    print("\nTest du gestionnaire de configuration...")

    from utils.config_manager import ConfigManager

    manager = ConfigManager(env_file=project_root / "absent.env")
    config = manager.get_config()
    print("✓ Configuration chargée")

    assert config.simulation.default_shots == 400
    assert config.data.archive_path("retina").name == "retinamnist.npz"
    print("✓ Valeurs par défaut")

    validation = manager.validate_config()
    assert validation["valid"]
    assert "CONFIGURATION SUMMARY" in manager.get_config_summary_text()
    print(f"✓ Validation ({len(validation['warnings'])} avertissement(s))")


def test_environment_overrides(monkeypatch):
    """
    Teste la prise en compte des variables d'environnement.
    """
    print("\nTest des variables d'environnement...")

    from utils.config_manager import ConfigManager

    monkeypatch.setenv("MEDMNIST_DIR", "/tmp/medmnist")
    monkeypatch.setenv("SIM_DEFAULT_SHOTS", "100")
    config = ConfigManager(env_file=project_root / "absent.env").get_config()
    assert config.data.archive_path("pneumonia") == Path("/tmp/medmnist/pneumoniamnist.npz")
    assert config.simulation.default_shots == 100
    print("✓ MEDMNIST_DIR et SIM_DEFAULT_SHOTS")


def test_error_handler():
    """
    Teste la hiérarchie d'erreurs et les codes de sortie.
    """
    print("\nTest de la gestion d'erreurs...")

    from utils.error_handler import (
        ConfigurationError, DatasetFormatError, ValidationError, create_user_friendly_message, exit_code_for,
    )

    error = DatasetFormatError("Membre tronqué", file_path="a.npz", member="train_images.npy", byte_offset=128)
    assert error.to_dict()["details"]["byte_offset"] == 128
    print("✓ Détails d'erreur")

    assert exit_code_for(ValidationError("n invalide", field_name="n")) == 2
    assert exit_code_for(ConfigurationError("clé manquante", config_key="layers")) == 2
    assert exit_code_for(error) == 1
    assert exit_code_for(RuntimeError("boom")) == 1
    print("✓ Codes de sortie")

    assert create_user_friendly_message(error)
    print("✓ Message utilisateur")


def test_unary_smoke():
    """
    Teste un circuit minimal de bout en bout.
    """
    print("\nTest d'un circuit unaire...")

    from core.estimators import EstimatorMode, estimate_ip

    x, w = np.array([0.6, 0.8]), np.array([0.8, 0.6])
    value = estimate_ip(x, w, EstimatorMode.exact()).value
    assert abs(value - 0.96) < 1e-12
    print(f"✓ Produit scalaire exact: {value:.4f}")


def run_all_tests():
    """
    Lance tous les tests.
    """
    print("=" * 60)
    print("Unary QNN Lab - Tests de base")
    print("=" * 60)

    tests = [
        ("Imports", test_imports),
        ("Métadonnées", test_package_metadata),
        ("Configuration", test_config_manager),
        ("Gestion d'erreurs", test_error_handler),
        ("Circuit unaire", test_unary_smoke),
    ]

    results = []

    for test_name, test_func in tests:
        print(f"\n{'=' * 20} {test_name} {'=' * 20}")
        try:
            test_func()
            results.append((test_name, True))
        except Exception as e:
            print(f"✗ Erreur critique dans {test_name}: {str(e)}")
            results.append((test_name, False))

    # Résumé
    print("\n" + "=" * 60)
    print("RÉSUMÉ DES TESTS")
    print("=" * 60)

    passed = 0
    for test_name, result in results:
        status = "✓ PASS" if result else "✗ FAIL"
        print(f"{status:<8} {test_name}")
        if result:
            passed += 1

    print(f"\nRésultat: {passed}/{len(results)} tests réussis")
    if passed != len(results):
        print("⚠ Certains tests ont échoué.")
        print("Vérifiez les dépendances et la configuration.")

    return passed == len(results)


if __name__ == "__main__":
    sys.exit(0 if run_all_tests() else 1)
