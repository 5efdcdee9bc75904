import os
import sys
import csv
import json
import hashlib
import configparser
from pathlib import Path
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar
from logger import logger

T = TypeVar("T")
R = TypeVar("R")

ROOT_DIR = Path(__file__).resolve().parent.parent


def format_float(value: float) -> str:
    """Full double precision, locale independent."""
    return format(float(value), ".17g")


def canonical_json(data: dict) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def config_hash(data: dict, version: str) -> str:
    payload = canonical_json(data) + "|" + version
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def parallel_map(
    fn: Callable[[T], R], items: Iterable[T], threads: int | None = None
) -> list[R]:
    """Order-preserving map over a thread pool. Results come back in input order."""
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]

    with ThreadPoolExecutor(max_workers=threads) as executor:
        futures = [executor.submit(fn, item) for item in items]
        return [future.result() for future in futures]


def write_csv(path: str | Path, header: list[str], rows: Iterable[list]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [format_float(v) if isinstance(v, float) else v for v in row]
            )
    logger.debug(f"Wrote {path}")
    return path


def get_version_from_toml() -> str:
    """
    Extracts the version string from the repository's pyproject.toml.
    Works with Python 3.10+.
    """
    path = ROOT_DIR / "pyproject.toml"
    try:
        if sys.version_info >= (3, 11):
            import tomllib
        else:
            import tomli as tomllib

        if not path.exists():
            raise FileNotFoundError(f"File {path} is missing!")

        with open(path, "rb") as f:
            data = tomllib.load(f)

        return data.get("project", {}).get("version", "0.0.0")
    except Exception as e:
        logger.error(f"Error getting version from {path}: {e}")
    return "0.0.0"


def load_config(config_name: str) -> configparser.ConfigParser | None:
    config = configparser.ConfigParser()
    config_file = ROOT_DIR / f"{config_name}.ini"

    if not os.path.exists(config_file):
        logger.warning(f"The config file {config_file} was not found.")
        return None

    config.read(config_file)
    logger.debug(f"Loaded configuration from {config_file}")
    return config
