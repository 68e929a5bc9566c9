#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Unary QNN Lab

Simulateur de circuits restreint au sous-espace unaire (poids de Hamming 1),
réseaux de neurones assistés par estimation quantique de produits scalaires
et réseaux orthogonaux à pyramides de portes RBS, évalués sur MedMNIST.

Version: 1.0.0
Licence: MIT
"""

__version__ = "1.0.0"
__author__ = "Unary QNN Lab Team"
__license__ = "MIT"
__description__ = "Simulation unaire et réseaux de neurones quantiques/orthogonaux sur MedMNIST"

# Imports principaux pour faciliter l'utilisation
try:
    from .core.unary_core import Circuit, Gate, UnaryState, run_circuit
    from .core.loaders import LoaderKind, LoaderTopology, load
    from .core.estimators import EstimatorMode, estimate_ip
    from .core.pyramid import PyramidLayer, matrix_to_angles
    from .core.qnn import Mlp
    from .core.orthonn import OrthoNet
except ImportError:
    # Imports relatifs ne fonctionnent pas en exécution directe
    pass

# Métadonnées du package
__all__ = [
    'Circuit',
    'Gate',
    'UnaryState',
    'run_circuit',
    'LoaderKind',
    'LoaderTopology',
    'load',
    'EstimatorMode',
    'estimate_ip',
    'PyramidLayer',
    'matrix_to_angles',
    'Mlp',
    'OrthoNet',
]

# Informations sur les dépendances
REQUIRED_DEPENDENCIES = [
    'numpy',
    'pandas',
    'pydantic',
    'pydantic_settings',
    'dotenv',
    'orjson',
    'click',
]

OPTIONAL_DEPENDENCIES = {
    'logging': ['coloredlogs'],
    'progress': ['tqdm'],
    'plots': ['matplotlib'],
    'dev': ['pytest', 'pytest_cov'],
}


def get_version():
    """
    Retourne la version de l'application.

    Returns:
        str: Version de l'application
    """
    return __version__


def get_info():
    """
    Retourne les informations sur l'application.

    Returns:
        dict: Informations sur l'application
    """
    return {
        'name': 'Unary QNN Lab',
        'version': __version__,
        'author': __author__,
        'license': __license__,
        'description': __description__
    }


def check_dependencies():
    """
    Vérifie la disponibilité des dépendances.

    Returns:
        dict: Statut des dépendances
    """
    import importlib

    status = {
        'required': {},
        'optional': {}
    }

    for dep in REQUIRED_DEPENDENCIES:
        try:
            importlib.import_module(dep)
            status['required'][dep] = True
        except ImportError:
            status['required'][dep] = False

    for category, deps in OPTIONAL_DEPENDENCIES.items():
        status['optional'][category] = {}
        for dep in deps:
            try:
                importlib.import_module(dep)
                status['optional'][category][dep] = True
            except ImportError:
                status['optional'][category][dep] = False

    return status
