#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Unary QNN Lab - Point d'entrée

Conversion des jeux de données, exécution d'expériences depuis des fichiers
JSON, suites de type tableau, mesure du passage à l'échelle et analyse du
croisement quantique/classique.

Version: 1.0.0
"""

import logging
import sys
from functools import wraps
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional

import click
import coloredlogs
import numpy as np

# Configuration du répertoire de travail
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from core.dataio import convert_csv  # noqa: E402
from core.evaluation import crossover_report, plot_crossover, plot_scaling  # noqa: E402
from core.experiment import (  # noqa: E402
    estimate_circuit_counts, load_experiment_config, load_suite_config, run_experiment, table1_runner,
)
from core.export import ReportWriter, dumps  # noqa: E402
from core.orthonn import scaling_benchmark  # noqa: E402
from utils.config_manager import get_config_manager  # noqa: E402
from utils.error_handler import (  # noqa: E402
    BaseAppError, ValidationError, create_user_friendly_message, exit_code_for, get_error_handler,
)

logger = logging.getLogger(__name__)


def setup_logging(log_level: Optional[str] = None, log_file: Optional[str] = None) -> logging.Logger:
    """
    Configure le système de logging : console colorée sur stderr, fichier tournant optionnel.

    Args:
        log_level (Optional[str]): Niveau de logging (celui de la configuration par défaut)
        log_file (Optional[str]): Fichier de log (LOG_FILE_PATH par défaut)

    Returns:
        logging.Logger: Logger du module principal
    """
    settings = get_config_manager().get_config().logging
    level = (log_level or settings.level).upper()
    coloredlogs.install(level=level, fmt=settings.format, stream=sys.stderr)

    log_file = log_file or settings.file_path
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        handler = RotatingFileHandler(log_file, maxBytes=settings.max_file_size,
                                      backupCount=settings.backup_count, encoding="utf-8")
        handler.setFormatter(logging.Formatter(settings.format))
        handler.setLevel(level)
        logging.getLogger().addHandler(handler)

    return logging.getLogger(__name__)


def _emit(data) -> None:
    click.echo(dumps(data).decode("utf-8"))


def _fail(error: Exception) -> None:
    """Erreur lisible par machine sur stdout, message court sur stderr, code de sortie non nul."""
    get_error_handler().handle_error(error)
    if isinstance(error, BaseAppError):
        payload = error.to_dict()
    else:
        payload = {"type": type(error).__name__, "message": str(error), "category": "unknown"}
    payload["hint"] = create_user_friendly_message(error)
    _emit({"error": payload})
    sys.exit(exit_code_for(error))


def command_errors(func):
    """Convertit toute exception d'une commande en objet JSON d'erreur."""
    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (click.exceptions.Exit, click.exceptions.Abort, SystemExit):
            raise
        except Exception as e:
            _fail(e)
    return wrapper


def parse_n_values(text: str) -> list:
    """
    Valeurs de n : liste « 32,64,128 » ou plage « 2..392 » (échelle géométrique, bornes incluses).
    """
    try:
        if ".." in text:
            low, high = (int(v) for v in text.split("..", 1))
            if low < 2 or high < low:
                raise ValueError
            values = np.unique(np.round(np.geomspace(low, high, num=min(16, high - low + 1))).astype(int))
            return [int(v) for v in values]
        values = sorted({int(v) for v in text.split(",") if v.strip()})
        if not values or values[0] < 2:
            raise ValueError
        return values
    except ValueError:
        raise ValidationError(f"Valeurs de n invalides: '{text}' (attendu '32,64' ou '2..392', n >= 2)",
                              field_name="n", field_value=text)


@click.group()
@click.option("--log-level", default=None, help="Niveau de logging (DEBUG, INFO, ...)")
@click.option("--log-file", default=None, type=click.Path(dir_okay=False), help="Fichier de log tournant")
def cli(log_level: Optional[str], log_file: Optional[str]):
    """Simulateur unaire et entraînement de réseaux qNN / orthogonaux sur MedMNIST."""
    setup_logging(log_level, log_file)


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False), help="Configuration JSON")
@click.option("--output-dir", default=None, help="Remplace output_dir")
@click.option("--data-dir", default=None, help="Remplace data_dir")
@click.option("--repetitions", default=None, type=int, help="Remplace repetitions")
@click.option("--seed", default=None, type=int, help="Remplace seed")
@click.option("--dry-run", is_flag=True, help="Affiche la configuration résolue et le nombre de circuits")
@command_errors
def run(config_path, output_dir, data_dir, repetitions, seed, dry_run):
    """Exécute une expérience."""
    overrides = {"output_dir": output_dir, "data_dir": data_dir, "repetitions": repetitions, "seed": seed}
    config = load_experiment_config(config_path, overrides)
    if dry_run:
        _emit({"config": config.model_dump(mode="json"), "estimated": estimate_circuit_counts(config)})
        return
    metrics = run_experiment(config)
    _emit({"output_dir": config.output_dir, "summary": metrics["summary"]})


@cli.command()
@click.option("--suite", "suite_path", required=True, type=click.Path(dir_okay=False), help="Suite JSON")
@click.option("--jobs", default=1, show_default=True, type=click.IntRange(min=1), help="Processus parallèles")
@click.option("--output-dir", default=None, help="Remplace output_dir")
@click.option("--data-dir", default=None, help="Remplace data_dir")
@click.option("--repetitions", default=None, type=int, help="Remplace repetitions")
@command_errors
def table1(suite_path, jobs, output_dir, data_dir, repetitions):
    """Exécute une suite (lignes × jeux de données × répétitions) avec reprise."""
    overrides = {"output_dir": output_dir, "data_dir": data_dir, "repetitions": repetitions}
    suite = load_suite_config(suite_path, overrides)
    table = table1_runner(suite, jobs=jobs)
    _emit({"output_dir": suite.output_dir, "rows": len(table)})


@cli.command("bench-scaling")
@click.option("--n", "n_spec", default="32,64,128,256", show_default=True, help="'32,64' ou '2..392'")
@click.option("--epochs", default=1, show_default=True, type=click.IntRange(min=1))
@click.option("--samples", default=20, show_default=True, type=click.IntRange(min=1))
@click.option("--seed", default=0, show_default=True, type=click.IntRange(min=0))
@click.option("--output-dir", default=None, help="Répertoire des artefacts (RESULTS_DIR/scaling par défaut)")
@command_errors
def bench_scaling(n_spec, epochs, samples, seed, output_dir):
    """Mesure le coût de l'entraînement QPC de réseaux [n, n, 2]."""
    n_values = parse_n_values(n_spec)
    table, slope = scaling_benchmark(n_values, epochs=epochs, n_samples=samples, seed=seed)
    writer = ReportWriter(output_dir or Path(get_config_manager().get_config().results.dir) / "scaling")
    writer.write_csv("scaling.csv", table)
    writer.write_json("scaling.json", {"n": n_values, "slope": slope, "epochs": epochs, "samples": samples})
    plot_scaling(table, writer.path("scaling.svg"), slope)
    _emit({"output_dir": str(writer.output_dir), "slope": slope, "op_count": table["op_count"].tolist()})


@cli.command()
@click.option("--shots", default=None, type=click.IntRange(min=1), help="Tirs par estimation")
@click.option("--output-dir", default=None, help="Écrit crossover.csv et crossover.svg")
@command_errors
def crossover(shots, output_dir):
    """Point de croisement entre pas quantiques et classiques."""
    shots = shots or get_config_manager().get_config().simulation.default_shots
    table, points = crossover_report(shots)
    if output_dir:
        writer = ReportWriter(output_dir)
        writer.write_csv("crossover.csv", table)
        writer.write_json("crossover.json", points)
        plot_crossover(table, writer.path("crossover.svg"), points["crossover"])
    _emit(points)


@cli.command()
@click.option("--in", "path_in", required=True, type=click.Path(dir_okay=False), help="Archive .npz ou .csv")
@click.option("--out", "path_out", required=True, type=click.Path(dir_okay=False), help="Cible .csv ou .npz")
@command_errors
def convert(path_in, path_out):
    """Convertit une archive MedMNIST entre NPZ et CSV."""
    written = convert_csv(path_in, path_out)
    _emit({"written": str(written)})


class _SummaryPlugin:
    def __init__(self):
        self.outcomes = {"passed": 0, "failed": 0, "skipped": 0}

    def pytest_runtest_logreport(self, report):
        if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
            self.outcomes[report.outcome] = self.outcomes.get(report.outcome, 0) + 1


@cli.command()
@click.option("-k", "keyword", default=None, help="Filtre pytest -k")
@command_errors
def selftest(keyword):
    """Exécute les suites de propriétés et affiche le bilan."""
    import pytest

    args = [str(project_root), "-q", "-p", "no:cacheprovider"]
    if keyword:
        args += ["-k", keyword]
    plugin = _SummaryPlugin()
    code = pytest.main(args, plugins=[plugin])
    status = "PASS" if int(code) in (0, 5) else "FAIL"
    click.echo(f"{status}: {plugin.outcomes['passed']} passed, {plugin.outcomes['failed']} failed, "
               f"{plugin.outcomes['skipped']} skipped")
    sys.exit(0 if status == "PASS" else 1)


@cli.command("config")
def show_config():
    """Affiche la configuration et les avertissements de validation."""
    manager = get_config_manager()
    click.echo(manager.get_config_summary_text())
    validation = manager.validate_config()
    if not validation["valid"]:
        sys.exit(2)


if __name__ == "__main__":
    cli()
