#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Module d'export des résultats

Ce module écrit les artefacts d'une exécution dans son répertoire de sortie :
JSON (orjson, clés triées), CSV (pandas) et tableaux Markdown.
"""

import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import orjson
import pandas as pd

from utils.config_manager import get_config
from utils.error_handler import FileSystemError

# Configuration du logging
logger = logging.getLogger(__name__)

JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY


def dumps(data: Any) -> bytes:
    """Sérialisation JSON déterministe (clés triées, tableaux numpy acceptés)."""
    return orjson.dumps(data, option=JSON_OPTIONS, default=_default)


def _default(value: Any) -> Any:
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "model_dump"):
        return value.model_dump(mode="json")
    if hasattr(value, "to_dict"):
        return value.to_dict()
    raise TypeError(f"Type non sérialisable: {type(value).__name__}")


def read_json(path: Union[str, Path]) -> Any:
    path = Path(path)
    try:
        return orjson.loads(path.read_bytes())
    except OSError as e:
        raise FileSystemError(f"Lecture impossible: {e}", file_path=str(path), operation="read",
                              original_exception=e)


class ReportWriter:
    """
    Gestionnaire d'écriture des artefacts d'une exécution.
    """

    def __init__(self, output_dir: Union[str, Path]):
        """
        Initialise le gestionnaire d'export.

        Args:
            output_dir (Union[str, Path]): Répertoire de sortie des artefacts
        """
        self.output_dir = Path(output_dir)
        self.written: List[Path] = []
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise FileSystemError(f"Création du répertoire impossible: {e}", file_path=str(self.output_dir),
                                  operation="mkdir", original_exception=e)

    def path(self, name: str) -> Path:
        return self.output_dir / name

    def exists(self, name: str) -> bool:
        return self.path(name).exists()

    def _write_bytes(self, name: str, payload: bytes) -> Path:
        file_path = self.path(name)
        tmp_path = file_path.with_name(file_path.name + ".tmp")
        try:
            file_path.parent.mkdir(parents=True, exist_ok=True)
            tmp_path.write_bytes(payload)
            tmp_path.replace(file_path)
        except OSError as e:
            raise FileSystemError(f"Écriture impossible: {e}", file_path=str(file_path), operation="write",
                                  original_exception=e)
        self.written.append(file_path)
        logger.debug(f"Artefact écrit: {file_path}")
        return file_path

    def write_json(self, name: str, data: Any) -> Path:
        """
        Écrit un objet au format JSON.

        Args:
            name (str): Nom relatif du fichier
            data (Any): Données (dict, listes, tableaux numpy, modèles pydantic)

        Returns:
            Path: Chemin du fichier créé
        """
        return self._write_bytes(name, dumps(data) + b"\n")

    def read_json(self, name: str) -> Any:
        return read_json(self.path(name))

    def write_csv(self, name: str, frame: pd.DataFrame, float_format: Optional[str] = None) -> Path:
        """Écrit un DataFrame au format CSV (sans index)."""
        payload = frame.to_csv(index=False, float_format=float_format, lineterminator="\n")
        return self._write_bytes(name, payload.encode("utf-8"))

    def write_markdown(self, name: str, frame: pd.DataFrame, title: Optional[str] = None) -> Path:
        """Écrit un DataFrame sous forme de tableau Markdown."""
        return self._write_bytes(name, to_markdown(frame, title).encode("utf-8"))

    def write_run_info(self, extra: Optional[Dict[str, Any]] = None) -> Path:
        """
        Informations non déterministes (horodatage, versions), séparées des métriques.
        """
        config = get_config()
        info = {
            "timestamp": datetime.now().isoformat(),
            "app_name": config.app_name,
            "version": config.version,
            "numpy": np.__version__,
            "pandas": pd.__version__,
        }
        info.update(extra or {})
        return self.write_json("run_info.json", info)


def to_markdown(frame: pd.DataFrame, title: Optional[str] = None) -> str:
    lines = []
    if title:
        lines.extend([f"# {title}", ""])
    columns = [str(c) for c in frame.columns]
    lines.append("| " + " | ".join(columns) + " |")
    lines.append("|" + "|".join("---" for _ in columns) + "|")
    for row in frame.itertuples(index=False):
        lines.append("| " + " | ".join(_cell(v) for v in row) + " |")
    return "\n".join(lines) + "\n"


def _cell(value: Any) -> str:
    if isinstance(value, float):
        return "" if pd.isna(value) else f"{value:.4f}"
    return str(value)
