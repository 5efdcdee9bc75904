"""
Experiment driver: validated JSON configs, cached runs and CSV artifacts.

Each run writes `results.csv` (rows sorted by size and d, floats in 17
significant digits) and `results.meta.json` with the full config and
provenance into the output directory. Records are cached under CACHE_DIR,
keyed by the SHA-256 of the canonical config plus the artifact version.
"""

import json
import os
import platform
import tempfile
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator

import numpy as np
import scipy
from tqdm import tqdm

import settings
from embezzlement import (
    SearchConfig,
    TargetPair,
    convergence_study,
    monopartite_error,
    type_invariants,
    vdh_bound,
    witness_maximal_error,
)
from errors import ConfigError, NumericQualityError
from logger import logger
from models import FAMILY_KEYS, EmbezzlerFamily
from oracle import certify_implication, certify_trace_distance, certify_vector_error
from utils import config_hash, get_version_from_toml, write_csv

EXPERIMENTS = ("vdh-table", "kappa-convergence", "xx-chain", "oracle-certify", "witness")
OBJECTIVES = ("kappa", "monopartite", "bipartite")
TARGETS = ("uniform", "compatible")

CONFIG_KEYS = frozenset(
    {
        "experiment",
        "d_list",
        "size_list",
        "K_schedule",
        "tail_cap",
        "seed",
        "output_path",
        "objective",
        "target",
        "instances",
    }
)

DEFAULTS: dict[str, dict] = {
    "vdh-table": {
        "family": "vdh",
        "d_list": [2],
        "size_list": [4, 16, 256, 1024],
        "objective": "bipartite",
    },
    "kappa-convergence": {
        "family": "geometric",
        "lambda": 0.25,
        "d_list": [2],
        "size_list": [4, 8, 12, 16],
        "objective": "kappa",
    },
    "xx-chain": {
        "family": "xy",
        "d_list": [2],
        "size_list": [20, 52, 100, 200],
        "objective": "bipartite",
    },
    "oracle-certify": {"d_list": [1], "size_list": [1]},
    "witness": {
        "family": "vdh",
        "d_list": [8, 16],
        "size_list": [2, 4],
        "objective": "monopartite",
    },
}

CSV_HEADER = ["size", "d", "lo", "hi", "argmax_phi", "argmax_psi", "label", "reference", "flagged"]
LOCK_NAME = ".embz.lock"


def _int_list(name: str, values) -> list[int]:
    if not isinstance(values, list) or not values:
        raise ConfigError(f"{name} must be a nonempty list of integers")
    if any(isinstance(v, bool) or not isinstance(v, int) for v in values):
        raise ConfigError(f"{name} must contain integers only, got {values}")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError(f"{name} must be strictly increasing, got {values}")
    if values[0] < 1:
        raise ConfigError(f"{name} entries must be positive, got {values}")
    return list(values)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    family: dict = field(default_factory=dict)
    d_list: list[int] = field(default_factory=lambda: [2])
    size_list: list[int] = field(default_factory=lambda: [1])
    K_schedule: list[int] = field(default_factory=lambda: [settings.TRUNCATION_K])
    tail_cap: float = settings.TAIL_CAP
    seed: int = settings.SEED
    output_path: str | None = None
    objective: str = "kappa"
    target: str = "uniform"
    instances: int | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}, expected one of {EXPERIMENTS}")
        _int_list("d_list", self.d_list)
        _int_list("size_list", self.size_list)
        _int_list("K_schedule", self.K_schedule)
        if len(self.K_schedule) not in (1, len(self.size_list)):
            raise ConfigError("K_schedule needs one entry or one per size")
        if not 0 < self.tail_cap <= 0.1:
            raise ConfigError(f"tail_cap must lie in (0, 0.1], got {self.tail_cap}")
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"unknown objective {self.objective!r}")
        if self.target not in TARGETS:
            raise ConfigError(f"unknown target {self.target!r}")
        if self.instances is not None and self.instances < 1:
            raise ConfigError(f"instances must be positive, got {self.instances}")
        if self.experiment != "oracle-certify":
            self.build_family()

    @classmethod
    def from_json(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("experiment config must be a JSON object")
        unknown = set(data) - CONFIG_KEYS - FAMILY_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "experiment" not in data:
            raise ConfigError("config is missing 'experiment'")

        defaults = dict(DEFAULTS.get(data["experiment"], {}))
        if "family" in data:
            defaults = {k: v for k, v in defaults.items() if k not in FAMILY_KEYS}
        merged = {**defaults, **data}
        family = {key: merged.pop(key) for key in list(merged) if key in FAMILY_KEYS}
        try:
            return cls(family=family, **merged)
        except TypeError as e:
            raise ConfigError(f"invalid config: {e}") from e

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path} is not valid JSON: {e}") from e
        return cls.from_json(data)

    def build_family(self) -> EmbezzlerFamily:
        family = EmbezzlerFamily.from_config(self.family)
        return family.with_size(self.size_list[0])

    def to_json(self) -> dict:
        data = asdict(self)
        data.update(data.pop("family"))
        return data

    def digest(self, version: str) -> str:
        """Stable under key reordering. The output location is not part of the identity."""
        data = self.to_json()
        data.pop("output_path")
        return config_hash(data, version)

    def k_for(self, index: int) -> int:
        return self.K_schedule[index] if len(self.K_schedule) > 1 else self.K_schedule[0]


@dataclass(frozen=True)
class ResultRow:
    size: int
    d: int
    lo: float
    hi: float
    runtime_ms: float = 0.0
    label: str = ""
    reference: float | None = None
    flagged: bool = False
    extra: dict = field(default_factory=dict)
    argmax_phi: str = ""
    argmax_psi: str = ""

    def csv_row(self) -> list:
        reference = "" if self.reference is None else float(self.reference)
        return [
            self.size,
            self.d,
            float(self.lo),
            float(self.hi),
            self.argmax_phi,
            self.argmax_psi,
            self.label,
            reference,
            int(self.flagged),
        ]


@dataclass(frozen=True)
class ResultRecord:
    experiment: str
    config_hash: str
    version: str
    config: dict
    rows: tuple[ResultRow, ...]
    created: str = ""

    def __post_init__(self):
        ordered = tuple(sorted(self.rows, key=lambda r: (r.size, r.d, r.label)))
        object.__setattr__(self, "rows", ordered)

    def to_json(self) -> dict:
        return {
            "experiment": self.experiment,
            "config_hash": self.config_hash,
            "version": self.version,
            "config": self.config,
            "rows": [asdict(row) for row in self.rows],
            "created": self.created,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ResultRecord":
        return cls(
            data["experiment"],
            data["config_hash"],
            data["version"],
            data["config"],
            tuple(ResultRow(**row) for row in data["rows"]),
            data.get("created", ""),
        )


def _search(config: ExperimentConfig, threads: int) -> SearchConfig:
    return SearchConfig(seed=config.seed, threads=threads, k=config.K_schedule[-1], tail_cap=config.tail_cap)


def _run_sweep(config: ExperimentConfig, threads: int) -> list[ResultRow]:
    family = config.build_family()
    rows = convergence_study(
        family,
        config.d_list,
        config.size_list,
        config.K_schedule,
        objective=config.objective,
        target=config.target,
        search=_search(config, threads),
    )

    lam = family.constant_lambda()
    result = []
    for row in rows:
        reference = None
        if config.experiment == "vdh-table" and row.d >= 2:
            reference = vdh_bound(row.size, row.d)
        elif config.experiment == "kappa-convergence" and lam is not None:
            reference = type_invariants(lam)[1]
        extra = row.argmax_pair.to_json() if row.argmax_pair is not None else {}
        argmax = ("", "")
        if config.objective == "kappa" and row.argmax_pair is not None:
            argmax = (TargetPair.label(row.argmax_pair.phi), TargetPair.label(row.argmax_pair.psi))
        result.append(
            ResultRow(
                row.size,
                row.d,
                row.value.lo,
                row.value.hi,
                row.runtime_ms,
                config.objective,
                reference,
                row.flagged,
                extra,
                argmax_phi=argmax[0],
                argmax_psi=argmax[1],
            )
        )
    return result


def _run_witness(config: ExperimentConfig, threads: int) -> list[ResultRow]:
    family = config.build_family()
    rows = []
    for index, size in enumerate(tqdm(config.size_list, desc="witness sizes", leave=False)):
        k = config.k_for(index)
        omega = family.with_size(size).spectrum(k)
        for d in config.d_list:
            started = time.perf_counter()
            pair = witness_maximal_error(omega, d)
            value = monopartite_error(omega, pair, k, config.tail_cap)
            lower = 2 * (1 - omega.atom_count / d)
            elapsed = 1000 * (time.perf_counter() - started)
            rows.append(
                ResultRow(size, d, value.lo, value.hi, elapsed, "witness", lower, value.hi < lower)
            )
    return rows


def _run_oracle(config: ExperimentConfig, threads: int) -> list[ResultRow]:
    suites = [
        ("vector_error", 4, lambda n: certify_vector_error(config.seed, n or 200, 4, threads)),
        ("trace_distance", 6, lambda n: certify_trace_distance(config.seed, n or 200, 6, threads)),
        ("implication", 12, lambda n: certify_implication(config.seed, n or 100, threads)),
    ]
    rows = []
    for label, max_dim, suite in tqdm(suites, desc="oracle suites", leave=False):
        started = time.perf_counter()
        report = suite(config.instances)
        elapsed = 1000 * (time.perf_counter() - started)
        rows.append(
            ResultRow(
                report.instances,
                max_dim,
                report.max_abs_deviation,
                report.max_abs_deviation,
                elapsed,
                label,
                1e-6,
                not report.passed,
                report.to_json(),
            )
        )
    return rows


def _dispatch(config: ExperimentConfig, threads: int) -> list[ResultRow]:
    match config.experiment:
        case "vdh-table" | "kappa-convergence" | "xx-chain":
            return _run_sweep(config, threads)
        case "witness":
            return _run_witness(config, threads)
        case "oracle-certify":
            return _run_oracle(config, threads)
    raise ConfigError(f"unknown experiment {config.experiment!r}")


@contextmanager
def _locked(out_dir: Path) -> Iterator[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError as e:
        raise FileExistsError(f"{lock} exists: another run is active or a stale lock was left behind") from e
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield lock
    finally:
        lock.unlink(missing_ok=True)


def _cache_path(digest: str) -> Path:
    cache_dir = os.getenv("EMBZ_CACHE_DIR") or settings.CACHE_DIR
    return Path(cache_dir) / f"{digest}.json"


def _write_json(path: Path, data: dict) -> Path:
    """Write through a temporary file in the same directory and rename into place."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile(
        "w", encoding="utf-8", dir=path.parent, prefix=f".{path.name}.", suffix=".tmp", delete=False
    ) as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
    try:
        os.replace(f.name, path)
    except OSError:
        Path(f.name).unlink(missing_ok=True)
        raise
    return path


def _read_cache(cache_file: Path) -> ResultRecord | None:
    """Cached record, or None when the entry is missing or unreadable."""
    if not cache_file.exists():
        return None
    try:
        with open(cache_file, encoding="utf-8") as f:
            return ResultRecord.from_json(json.load(f))
    except (ValueError, KeyError, TypeError) as e:
        logger.warning(f"Ignoring corrupt cache entry {cache_file.name}: {e}")
        return None


def resolve_out_dir(config: ExperimentConfig, out_dir: str | Path | None = None) -> Path:
    return Path(out_dir or config.output_path or Path(settings.OUTPUT_DIR) / config.experiment)


def write_record(record: ResultRecord, out_dir: str | Path, cache_hit: bool = False) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    csv_path = write_csv(out_dir / "results.csv", CSV_HEADER, (row.csv_row() for row in record.rows))
    meta = record.to_json()
    meta["provenance"] = {
        "cache_hit": cache_hit,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }
    meta_path = _write_json(out_dir / "results.meta.json", meta)
    return csv_path, meta_path


def run(
    config: ExperimentConfig,
    out_dir: str | Path | None = None,
    force: bool = False,
    threads: int | None = None,
) -> ResultRecord:
    """Run one experiment, or return the cached record for the same config."""
    version = get_version_from_toml()
    digest = config.digest(version)
    out_dir = resolve_out_dir(config, out_dir)
    threads = settings.THREADS if threads is None else threads
    cache_file = _cache_path(digest)

    with _locked(out_dir):
        record = None if force else _read_cache(cache_file)
        if record is not None:
            logger.info(f"Cache hit for {config.experiment} ({digest[:12]})")
            write_record(record, out_dir, cache_hit=True)
            return record

        logger.info(f"Running {config.experiment} ({digest[:12]}) with {threads} threads")
        started = time.perf_counter()
        rows = _dispatch(config, threads)
        record = ResultRecord(
            config.experiment,
            digest,
            version,
            config.to_json(),
            tuple(rows),
            datetime.now(timezone.utc).isoformat(timespec="seconds"),
        )
        write_record(record, out_dir)
        _write_json(cache_file, record.to_json())
        logger.success(
            f"{config.experiment}: {len(rows)} rows in {time.perf_counter() - started:.1f}s -> {out_dir}"
        )

    failed = [row.label for row in record.rows if row.flagged]
    if config.experiment == "oracle-certify" and failed:
        raise NumericQualityError(f"oracle certification failed for {failed}")
    return record


def emit_plotdata(record: ResultRecord, out_dir: str | Path) -> list[Path]:
    """Per-curve CSVs (x, y, ylo, yhi) plus reference and bound lines under out_dir/plot."""
    if not record.rows:
        raise ConfigError(f"record {record.config_hash[:12]} has no rows to plot")
    plot_dir = Path(out_dir) / "plot"
    header = ["x", "y", "ylo", "yhi"]
    written = []

    if record.experiment == "witness":
        groups = {f"size{size}": [r for r in record.rows if r.size == size] for size in sorted({r.size for r in record.rows})}
        for name, rows in groups.items():
            points = [[r.d, float(r.lo), float(r.lo), float(r.hi)] for r in rows]
            written.append(write_csv(plot_dir / f"{name}.csv", header, points))
            bound = [[r.d, float(r.reference), float(r.reference), float(r.reference)] for r in rows]
            written.append(write_csv(plot_dir / f"{name}_lower_bound.csv", header, bound))
        return written

    keys = sorted({(r.label, r.d) for r in record.rows})
    for label, d in keys:
        rows = [r for r in record.rows if (r.label, r.d) == (label, d)]
        points = [[r.size, float(r.lo), float(r.lo), float(r.hi)] for r in rows]
        name = f"{label}_d{d}" if label else f"d{d}"
        written.append(write_csv(plot_dir / f"{name}.csv", header, points))

    sizes = sorted({r.size for r in record.rows})
    if record.experiment == "kappa-convergence":
        lam = EmbezzlerFamily.from_config(record.config).constant_lambda()
        if lam is not None:
            ref = type_invariants(lam)[1]
            points = [[size, ref, ref, ref] for size in sizes]
            written.append(write_csv(plot_dir / "reference.csv", header, points))
    elif record.experiment == "vdh-table":
        for d in sorted({r.d for r in record.rows if r.d >= 2}):
            points = []
            for n in sizes:
                bound = vdh_bound(n, d)
                points.append([n, bound, bound, bound])
            written.append(write_csv(plot_dir / f"bound_d{d}.csv", header, points))

    logger.info(f"Wrote {len(written)} plot files to {plot_dir}")
    return written
