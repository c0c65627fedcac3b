"""
File handling utilities for experiment configs and output directories
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from config import CONFIG_EXTENSIONS, CONFIGS_DIR, OUTPUT_DIR
from src.errors import ConfigError

logger = logging.getLogger(__name__)


class FileHandler:
    """Handle file operations for the command line front end"""

    def __init__(self, output_dir: Optional[Path] = None):
        self.output_dir = Path(output_dir) if output_dir else OUTPUT_DIR
        self.supported_formats = CONFIG_EXTENSIONS

    def resolve_config(self, path: str) -> Path:
        """
        Locate a config file, falling back to the bundled configs directory

        Args:
            path: File path or name of a bundled config (with or without extension)

        Returns:
            Existing path
        """
        candidate = Path(path)
        if candidate.exists():
            return candidate
        for ext in [""] + self.supported_formats:
            bundled = CONFIGS_DIR / f"{path}{ext}"
            if bundled.exists():
                return bundled
        raise ConfigError(f"config file not found: {path}")

    def load_config(self, path: str) -> Dict[str, Any]:
        """
        Read a YAML or JSON experiment config

        Args:
            path: Path to the config file

        Returns:
            Parsed mapping
        """
        file_path = self.resolve_config(path)
        file_ext = file_path.suffix.lower()
        if file_ext not in self.supported_formats:
            raise ConfigError(
                f"Unsupported config format: {file_ext}. "
                f"Supported formats: {', '.join(self.supported_formats)}"
            )

        try:
            text = file_path.read_text(encoding="utf-8")
            data = json.loads(text) if file_ext == ".json" else yaml.safe_load(text)
        except (OSError, yaml.YAMLError, json.JSONDecodeError) as e:
            raise ConfigError(f"Could not read config {file_path}: {e}") from e

        if not isinstance(data, dict):
            raise ConfigError(f"config {file_path} must be a mapping at the top level")
        logger.debug("loaded config %s", file_path)
        return data

    @staticmethod
    def config_hash(data: Dict[str, Any]) -> str:
        """Short SHA-256 of the canonical JSON form of a config"""
        canonical = json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    def prepare_output_dir(self, subdir: Optional[str] = None) -> Path:
        """
        Create (if needed) and return the output directory

        Args:
            subdir: Optional sub-directory name

        Returns:
            Directory path
        """
        directory = self.output_dir / subdir if subdir else self.output_dir
        try:
            directory.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ConfigError(f"Could not create output directory {directory}: {e}") from e
        return directory
