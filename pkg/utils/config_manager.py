# -*- coding: utf-8 -*-
"""
Configuration Manager

Application settings (data location, simulation defaults, logging, results)
loaded from the environment and an optional .env file, validated by pydantic.
"""

import logging
from pathlib import Path
from typing import Optional, Dict, Any
from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict
from dotenv import load_dotenv

logger = logging.getLogger(__name__)

class DataConfig(BaseSettings):
    """
    MedMNIST archive location and pixel pre-scaling.
    """
    dir: str = Field("data/medmnist", description="Directory holding the MedMNIST .npz archives")
    pneumonia_file: str = Field("pneumoniamnist.npz", description="PneumoniaMNIST archive name")
    retina_file: str = Field("retinamnist.npz", description="RetinaMNIST archive name")
    pixel_scale: float = Field(255.0, description="Divisor applied to raw pixels before PCA")

    @field_validator('pixel_scale')
    @classmethod
    def validate_scale(cls, v):
        if v <= 0:
            raise ValueError('pixel_scale must be positive')
        return v

    model_config = SettingsConfigDict(
        env_prefix="MEDMNIST_",
        case_sensitive=False
    )

    def archive_path(self, dataset: str) -> Path:
        """
        Resolve the archive path of a dataset.

        Args:
            dataset (str): 'pneumonia' or 'retina'

        Returns:
            Path: Archive path
        """
        names = {"pneumonia": self.pneumonia_file, "retina": self.retina_file}
        if dataset not in names:
            raise ValueError(f"Unknown dataset: {dataset}")
        return Path(self.dir) / names[dataset]

class SimulationConfig(BaseSettings):
    """
    Simulator and estimator defaults.
    """
    default_shots: int = Field(400, description="Shots per inner-product estimate")
    dense_max_qubits: int = Field(14, description="Largest register accepted by the dense oracle")
    default_topology: str = Field("semi_diagonal", description="Loader topology used by estimator circuits")
    estimator_backend: str = Field("closed_form", description="Sampled estimator back end (closed_form/circuit)")

    @field_validator('default_topology')
    @classmethod
    def validate_topology(cls, v):
        valid_topologies = ['parallel', 'diagonal', 'semi_diagonal']
        if v not in valid_topologies:
            raise ValueError(f'Topology must be one of: {valid_topologies}')
        return v

    @field_validator('estimator_backend')
    @classmethod
    def validate_backend(cls, v):
        valid_backends = ['closed_form', 'circuit']
        if v not in valid_backends:
            raise ValueError(f'Backend must be one of: {valid_backends}')
        return v

    @field_validator('default_shots', 'dense_max_qubits')
    @classmethod
    def validate_positive(cls, v):
        if v < 1:
            raise ValueError('must be >= 1')
        return v

    model_config = SettingsConfigDict(
        env_prefix="SIM_",
        case_sensitive=False
    )

class LoggingConfig(BaseSettings):
    """
    Logging configuration settings.
    """
    level: str = Field("INFO", description="Logging level")
    format: str = Field(
        "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        description="Log format string"
    )
    file_path: Optional[str] = Field(None, description="Optional log file path")
    max_file_size: int = Field(10485760, description="Maximum log file size (bytes)")
    backup_count: int = Field(5, description="Number of log file backups")

    @field_validator('level')
    @classmethod
    def validate_level(cls, v):
        valid_levels = ['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL']
        if v.upper() not in valid_levels:
            raise ValueError(f'Level must be one of: {valid_levels}')
        return v.upper()

    model_config = SettingsConfigDict(
        env_prefix="LOG_",
        case_sensitive=False
    )

class ResultsConfig(BaseSettings):
    """
    Output location for run artifacts.
    """
    dir: str = Field("results", description="Root directory of run artifacts")

    model_config = SettingsConfigDict(
        env_prefix="RESULTS_",
        case_sensitive=False
    )

class AppConfig(BaseSettings):
    """
    Main application configuration that combines all sub-configurations.
    """
    app_name: str = Field("Unary QNN Lab", description="Application name")
    version: str = Field("1.0.0", description="Application version")
    debug: bool = Field(False, description="Debug mode")

    data: DataConfig = Field(default_factory=DataConfig)
    simulation: SimulationConfig = Field(default_factory=SimulationConfig)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)
    results: ResultsConfig = Field(default_factory=ResultsConfig)

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore"
    )

class ConfigManager:
    """
    Configuration manager for the Unary QNN Lab.
    """

    def __init__(self, env_file: Optional[Path] = None):
        """
        Initialize the configuration manager.

        Args:
            env_file (Optional[Path]): Path to the .env file
        """
        self.env_file = env_file or Path(".env")
        self.config: Optional[AppConfig] = None
        self._load_config()

    def _load_config(self) -> None:
        """
        Load configuration from environment and .env file.
        """
        try:
            if self.env_file.exists():
                load_dotenv(self.env_file)
                logger.info(f"Loaded configuration from {self.env_file}")
            else:
                logger.debug(f"Configuration file {self.env_file} not found, using environment only")

            self.config = AppConfig()
            logger.debug("Configuration loaded successfully")

        except Exception as e:
            logger.error(f"Failed to load configuration: {str(e)}")
            raise

    def get_config(self) -> AppConfig:
        """
        Get the application configuration.

        Returns:
            AppConfig: The application configuration
        """
        if self.config is None:
            raise RuntimeError("Configuration not loaded")
        return self.config

    def validate_config(self) -> Dict[str, Any]:
        """
        Validate the current configuration and return validation results.

        Returns:
            Dict[str, Any]: Validation results
        """
        if self.config is None:
            return {"valid": False, "errors": ["Configuration not loaded"], "warnings": []}

        errors = []
        warnings = []

        data_dir = Path(self.config.data.dir)
        if not data_dir.exists():
            warnings.append(f"Dataset directory does not exist: {data_dir} (set MEDMNIST_DIR)")
        else:
            for dataset in ("pneumonia", "retina"):
                archive = self.config.data.archive_path(dataset)
                if not archive.exists():
                    warnings.append(f"Archive not found: {archive}")

        if self.config.simulation.dense_max_qubits > 20:
            errors.append("dense_max_qubits above 20 would exhaust memory")

        return {
            "valid": len(errors) == 0,
            "errors": errors,
            "warnings": warnings
        }

    def get_config_summary_text(self) -> str:
        """
        Generate a detailed text summary of the current configuration.

        Returns:
            str: Configuration summary
        """
        if self.config is None:
            return "Configuration not loaded"

        validation = self.validate_config()

        summary = []
        summary.append("=" * 60)
        summary.append(f"CONFIGURATION SUMMARY - {self.config.app_name} v{self.config.version}")
        summary.append("=" * 60)

        if validation["valid"]:
            summary.append("✅ Configuration is valid")
        else:
            summary.append("❌ Configuration has errors")

        summary.append("\nDATA:")
        summary.append("-" * 10)
        summary.append(f"MedMNIST dir: {self.config.data.dir}")
        summary.append(f"Pixel scale: {self.config.data.pixel_scale}")

        summary.append("\nSIMULATION:")
        summary.append("-" * 10)
        summary.append(f"Default shots: {self.config.simulation.default_shots}")
        summary.append(f"Loader topology: {self.config.simulation.default_topology}")
        summary.append(f"Estimator back end: {self.config.simulation.estimator_backend}")
        summary.append(f"Dense oracle limit: {self.config.simulation.dense_max_qubits} qubits")

        summary.append("\nOUTPUT:")
        summary.append("-" * 10)
        summary.append(f"Results: {self.config.results.dir}")
        summary.append(f"Log Level: {self.config.logging.level}")

        if validation["errors"]:
            summary.append("\n❌ ERRORS:")
            for error in validation["errors"]:
                summary.append(f"  • {error}")

        if validation["warnings"]:
            summary.append("\n⚠️  WARNINGS:")
            for warning in validation["warnings"]:
                summary.append(f"  • {warning}")

        summary.append("=" * 60)

        return "\n".join(summary)

    def reload_config(self) -> None:
        """
        Reload the configuration from the .env file.
        """
        logger.info("Reloading configuration...")
        self._load_config()

# Global configuration manager instance
_config_manager: Optional[ConfigManager] = None

def get_config_manager() -> ConfigManager:
    """
    Get the global configuration manager instance.

    Returns:
        ConfigManager: The configuration manager instance
    """
    global _config_manager
    if _config_manager is None:
        _config_manager = ConfigManager()
    return _config_manager

def get_config() -> AppConfig:
    """
    Get the application configuration.

    Returns:
        AppConfig: The application configuration
    """
    return get_config_manager().get_config()
