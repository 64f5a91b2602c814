import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Union

import pandas as pd

from utils.errors import ConfigError, DataError

PathLike = Union[str, os.PathLike]


def load_json(file_path: PathLike) -> Dict[str, Any]:
    """
    Loads JSON data from a file.

    :param file_path: Path to the JSON file.
    :return: Parsed JSON data.
    :raises DataError: if the file is missing or is not valid JSON.
    """
    if not os.path.exists(file_path):
        raise DataError(f"File {file_path} does not exist.")

    with open(file_path, 'r') as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise DataError(f"File {file_path} contains invalid JSON: {e}") from e


def save_json(data: Dict[str, Any], file_path: PathLike):
    """
    Saves a dictionary as a JSON file.

    Keys are sorted so that identical data always produces identical bytes.

    Args:
        data (Dict[str, Any]): The data to save.
        file_path (PathLike): The path where the JSON file will be saved.
    """
    try:
        with open(file_path, 'w') as f:
            json.dump(data, f, indent=4, sort_keys=True, default=str)
            f.write("\n")
        logging.info(f"Data successfully saved to {file_path}.")
    except Exception as e:
        logging.error(f"Failed to save JSON to {file_path}: {e}")
        raise e


def write_frame(frame: pd.DataFrame, file_path: PathLike):
    """
    Writes a table as canonical CSV: no index column, ISO dates, shortest
    round-trip float representation.

    Args:
        frame (pd.DataFrame): The table to write.
        file_path (PathLike): Destination path.
    """
    frame.to_csv(file_path, index=False, date_format="%Y-%m-%d", lineterminator="\n")
    logging.info(f"Table with {len(frame)} rows saved to {file_path}.")


def sha256_file(file_path: PathLike) -> str:
    """
    Computes the sha256 checksum of a file.

    Args:
        file_path (PathLike): The file to hash.

    Returns:
        str: Hex digest.
    """
    digest = hashlib.sha256()
    with open(file_path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def canonical_hash(data: Dict[str, Any]) -> str:
    """
    Hashes a JSON-serializable mapping independently of key order.

    Example:
        canonical_hash({"b": 1, "a": 2}) == canonical_hash({"a": 2, "b": 1})
    """
    payload = json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def ensure_dir(path: PathLike) -> Path:
    """Creates the directory (and parents) if needed and returns it as a Path."""
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def parse_date(value: Any, what: str = "date") -> pd.Timestamp:
    """
    Parses a calendar date given on the command line or in a config file.

    Raises:
        ConfigError: if the value is not a date.
    """
    try:
        parsed = pd.Timestamp(value)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"Invalid {what} {value!r}: {e}") from e
    if pd.isna(parsed):
        raise ConfigError(f"Invalid {what} {value!r}")
    return parsed
