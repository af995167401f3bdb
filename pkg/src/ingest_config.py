import json
from abc import ABC, abstractmethod
from pathlib import Path

from src.errors import ConfigError


class ConfigIngestor(ABC):
    """Abstract base class for run-config ingestion."""

    @abstractmethod
    def ingest(self, file_path: str) -> dict:
        """Abstract method to read a run config from a given file.

        Args:
            file_path (str): Path to the file to ingest.

        Returns:
            dict: Raw, not yet validated, configuration mapping.
        """
        pass


class JsonConfigIngestor(ConfigIngestor):
    """Config ingestor for .json files."""

    def ingest(self, file_path: str) -> dict:
        """Loads a JSON object from disk.

        Args:
            file_path (str): Path to the .json file.

        Returns:
            dict: The decoded top-level object.

        Raises:
            ConfigError: If the file is missing, not a .json file, not valid
                JSON, or not a JSON object.
        """
        if not file_path.endswith(".json"):
            raise ConfigError("The file is not a .json document.", {"path": file_path})
        path = Path(file_path)
        if not path.is_file():
            raise ConfigError(f"Config file not found: {file_path}", {"path": file_path})
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"Malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}",
                {"path": file_path, "line": exc.lineno, "column": exc.colno},
            ) from exc
        if not isinstance(raw, dict):
            raise ConfigError("The run config must be a JSON object.", {"path": file_path})
        return raw


class ConfigIngestorFactory:
    """Factory class to obtain the appropriate ConfigIngestor implementation."""

    @staticmethod
    def get_config_ingestor(file_extension: str) -> ConfigIngestor:
        """Returns the appropriate ConfigIngestor based on the file extension.

        Currently, only .json is implemented.

        Args:
            file_extension (str): The file extension, including the dot (e.g., ".json").

        Returns:
            ConfigIngestor: The ConfigIngestor implementation for the given extension.

        Raises:
            ConfigError: If there is no ingestor available for the given file extension.
        """
        if file_extension == ".json":
            return JsonConfigIngestor()
        else:
            raise ConfigError(f"No ingestor available for file type: {file_extension}")
