"""
Sweep Service

Orchestrates kernel-parameter sweeps: builds (or loads) the datasets, runs
one attack sweep per (theta1, theta2) condition and replicate, aggregates
the per-condition statistics and writes every result file. Returns plain
dataclasses, no CLI coupling, so both main.py and the tests drive it.
"""

import itertools
import json
import logging
import math
import numbers
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Callable, Optional, Union

import numpy as np
from tqdm import tqdm

from attack_harness import parse_origin_class, run_attack_sweep
from bounds import dataset_certificate
from dataset_io import emit_plot_data, load_dataset, write_histogram, write_json, write_records_csv, write_rows
from errors import ConfigError, NumericError
from gp_core import LabeledDataset
from kernel import KernelSpec, kernel_at_distance, pairwise_squared_distances
from settings import get_settings

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = [
    "theta1",
    "theta2",
    "status",
    "replicates",
    "n_records",
    "n_valid",
    "proportion_following_theorem",
    "mean_theoretical",
    "mean_max_theoretical",
    "std_max_theoretical",
    "mean_empirical",
    "max_empirical",
    "mean_distance_violators",
    "std_distance_violators",
    "mean_distance_all",
    "error",
]

Seed = Union[int, np.random.SeedSequence]


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

def _is_count(value) -> bool:
    return isinstance(value, (int, np.integer)) and not isinstance(value, bool) and value >= 1


def _is_number(value) -> bool:
    return isinstance(value, numbers.Real) and not isinstance(value, bool) and math.isfinite(value)


def check_blob_params(n_per_class, dim, separation, spread):
    """Raise ConfigError unless the blob parameters are usable as given."""
    if not _is_count(n_per_class):
        raise ConfigError(f"n_per_class must be an integer >= 1, got {n_per_class!r}")
    if not _is_count(dim):
        raise ConfigError(f"dim must be an integer >= 1, got {dim!r}")
    if not (_is_number(separation) and separation >= 0):
        raise ConfigError(f"separation must be a nonnegative number, got {separation!r}")
    if not (_is_number(spread) and spread > 0):
        raise ConfigError(f"spread must be a positive number, got {spread!r}")


def generate_blobs(n_per_class: int, dim: int, separation: float, spread: float, seed: Seed) -> LabeledDataset:
    """
    Two isotropic Gaussian clouds whose centres sit `separation` apart on
    the first axis. The +1 points come first.

    Raises:
        ConfigError: on invalid parameters
    """
    check_blob_params(n_per_class, dim, separation, spread)

    rng = np.random.default_rng(seed)
    centre = np.zeros(dim)
    centre[0] = separation / 2.0
    positives = centre + spread * rng.standard_normal((n_per_class, dim))
    negatives = -centre + spread * rng.standard_normal((n_per_class, dim))
    labels = np.concatenate([np.ones(n_per_class, dtype=np.int64), -np.ones(n_per_class, dtype=np.int64)])
    return LabeledDataset(points=np.vstack([positives, negatives]), labels=labels)


def nearest_enemy_distances(dataset: LabeledDataset, origin_labels: tuple[int, ...] = (1,)) -> np.ndarray:
    """Distance from every origin-class point to its closest opposite-label point."""
    out = []
    for label in origin_labels:
        own = dataset.points[dataset.labels == label]
        other = dataset.points[dataset.labels == -label]
        out.append(np.sqrt(pairwise_squared_distances(own, other).min(axis=1)))
    # back to dataset order
    order = np.concatenate([np.flatnonzero(dataset.labels == label) for label in origin_labels])
    return np.concatenate(out)[np.argsort(order, kind="stable")]


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class SweepConfig:
    """
    Sweep definition; JSON config files use these field names.

    `dataset_source` is either a generator spec
    {"generator": "blobs", "n_per_class", "dim", "separation", "spread"}
    or {"path": ...} / {"paths": [...]} for files (one replicate per path).
    """

    theta1_values: list
    theta2_values: list
    dataset_source: dict
    norm: Optional[float] = None
    norm_fraction: Optional[float] = None
    epsilon: float = 0.0
    jitter: Optional[float] = None
    seed: int = 0
    replicates: int = 1
    origin_class: str = "+1"
    max_workers: Optional[int] = None

    def __post_init__(self):
        for name in ("theta1_values", "theta2_values"):
            values = getattr(self, name)
            if not isinstance(values, (list, tuple)) or not values:
                raise ConfigError(f"{name} must be a nonempty list")
            if not all(isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) and v > 0
                       for v in values):
                raise ConfigError(f"{name} must hold positive numbers, got {values!r}")
            setattr(self, name, [float(v) for v in values])

        if (self.norm is None) == (self.norm_fraction is None):
            raise ConfigError("give exactly one of norm / norm_fraction")
        for name in ("norm", "norm_fraction"):
            value = getattr(self, name)
            if value is not None and not (math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be a positive number, got {value!r}")
        if not (math.isfinite(self.epsilon) and self.epsilon >= 0):
            raise ConfigError(f"epsilon must be nonnegative, got {self.epsilon!r}")
        if self.jitter is not None and not (math.isfinite(self.jitter) and self.jitter >= 0):
            raise ConfigError(f"jitter must be nonnegative, got {self.jitter!r}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError(f"seed must be a nonnegative integer, got {self.seed!r}")
        if not isinstance(self.replicates, int) or self.replicates < 1:
            raise ConfigError(f"replicates must be an integer >= 1, got {self.replicates!r}")
        parse_origin_class(self.origin_class)
        self._check_dataset()

    def _check_dataset(self):
        source = self.dataset_source
        if not isinstance(source, dict):
            raise ConfigError("dataset_source must be an object")
        if "generator" in source:
            if source["generator"] != "blobs":
                raise ConfigError(f"unknown generator {source['generator']!r}")
            missing = [k for k in ("n_per_class", "dim", "separation", "spread") if k not in source]
            if missing:
                raise ConfigError(f"blobs generator lacks {', '.join(missing)}")
            extra = sorted(set(source) - {"generator", "n_per_class", "dim", "separation", "spread"})
            if extra:
                raise ConfigError(f"blobs generator does not take {', '.join(extra)}")
            check_blob_params(source["n_per_class"], source["dim"], source["separation"], source["spread"])
        elif "path" in source or "paths" in source:
            paths = self.dataset_paths
            if not paths or not all(isinstance(p, str) for p in paths):
                raise ConfigError("dataset paths must be a nonempty list of strings")
            if self.replicates not in (1, len(paths)):
                raise ConfigError(f"replicates={self.replicates} does not match {len(paths)} dataset paths")
        else:
            raise ConfigError("dataset_source needs 'generator', 'path' or 'paths'")

    @property
    def dataset_paths(self) -> list:
        if "paths" in self.dataset_source:
            return list(self.dataset_source["paths"])
        if "path" in self.dataset_source:
            return [self.dataset_source["path"]]
        return []

    @property
    def replicate_count(self) -> int:
        return len(self.dataset_paths) or self.replicates

    @classmethod
    def from_dict(cls, data: dict) -> "SweepConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(str(e))

    @classmethod
    def from_json(cls, path: str) -> "SweepConfig":
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}")
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        config = cls.from_dict(data)
        # relative dataset paths are relative to the config file
        base = os.path.dirname(os.path.abspath(path))
        if "paths" in config.dataset_source:
            config.dataset_source["paths"] = [os.path.join(base, p) for p in config.dataset_source["paths"]]
        elif "path" in config.dataset_source:
            config.dataset_source["path"] = os.path.join(base, config.dataset_source["path"])
        return config


def build_datasets(config: SweepConfig) -> list[LabeledDataset]:
    """One dataset per replicate, fully determined by the config."""
    if config.dataset_paths:
        return [load_dataset(path) for path in config.dataset_paths]
    spec = config.dataset_source
    children = np.random.SeedSequence(config.seed).spawn(config.replicates)
    return [
        generate_blobs(spec["n_per_class"], spec["dim"], spec["separation"], spec["spread"], seed=child)
        for child in children
    ]


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

@dataclass
class SweepSummary:
    rows: list = field(default_factory=list)   # dicts keyed by SUMMARY_COLUMNS

    def row(self, theta1: float, theta2: float) -> dict:
        for row in self.rows:
            if row["theta1"] == theta1 and row["theta2"] == theta2:
                return row
        raise KeyError((theta1, theta2))


def _mean_or_nan(values) -> float:
    values = [v for v in values if not math.isnan(v)]
    return float(np.mean(values)) if values else math.nan


def aggregate_condition(replicate_rows: list[list[dict]]) -> dict:
    """
    Condition statistics from record rows (AttackRecord.to_row() or the
    records CSV read back), one list per replicate.

    The maximum theoretical value of a replicate is the largest
    theoretical_exact among its valid records; its mean and standard
    deviation are taken across replicates. max_empirical is the mean of
    the per-replicate largest empirical_prob. The other means pool every
    replicate; mean_theoretical only counts valid records.
    """
    pooled = [row for rows in replicate_rows for row in rows]
    maxima = []
    for rows in replicate_rows:
        bounded = [row["theoretical_exact"] for row in rows if row["valid"]]
        maxima.append(max(bounded) if bounded else math.nan)
    finite = [m for m in maxima if not math.isnan(m)]
    empirical_maxima = [max(row["empirical_prob"] for row in rows) for rows in replicate_rows if rows]
    violators = [row["distance_to_enemy"] for row in pooled if not row["follows_theorem"]]
    return {
        "replicates": len(replicate_rows),
        "n_records": len(pooled),
        "n_valid": sum(1 for row in pooled if row["valid"]),
        "proportion_following_theorem": (
            sum(1 for row in pooled if row["follows_theorem"]) / len(pooled) if pooled else math.nan
        ),
        "mean_theoretical": _mean_or_nan([row["theoretical_exact"] for row in pooled if row["valid"]]),
        "mean_max_theoretical": _mean_or_nan(finite),
        "std_max_theoretical": float(np.std(finite)) if finite else math.nan,
        "mean_empirical": _mean_or_nan([row["empirical_prob"] for row in pooled]),
        "max_empirical": _mean_or_nan(empirical_maxima),
        "mean_distance_violators": _mean_or_nan(violators),
        "std_distance_violators": float(np.std(violators)) if violators else math.nan,
        "mean_distance_all": _mean_or_nan([row["distance_to_enemy"] for row in pooled]),
    }


# ---------------------------------------------------------------------------
# Sweep
# ---------------------------------------------------------------------------

def condition_tag(theta1: float, theta2: float) -> str:
    return f"t1={theta1:g}_t2={theta2:g}"


def _resolve_norm(config: SweepConfig, dataset: LabeledDataset, origin_labels) -> float:
    if config.norm is not None:
        return config.norm
    return config.norm_fraction * float(np.mean(nearest_enemy_distances(dataset, origin_labels)))


def _run_condition(config: SweepConfig, datasets: list[LabeledDataset], norms: list[float],
                   theta1: float, theta2: float, output_dir: str) -> dict:
    tag = condition_tag(theta1, theta2)
    row = {"theta1": theta1, "theta2": theta2, "status": "ok", "error": None}
    try:
        kernel = KernelSpec(theta1, theta2)
        replicate_rows = []
        for k, (dataset, norm) in enumerate(zip(datasets, norms)):
            records = run_attack_sweep(dataset, kernel, norm, epsilon=config.epsilon, jitter=config.jitter,
                                       origin_class=config.origin_class, max_workers=1)
            write_records_csv(records, os.path.join(output_dir, f"records_{tag}_rep{k}.csv"))
            emit_plot_data(records, os.path.join(output_dir, f"plot_{tag}_rep{k}.csv"))
            replicate_rows.append([record.to_row() for record in records])

        r = kernel_at_distance(kernel, norms[0])
        certificate = dataset_certificate(datasets[0], r, config.epsilon, kernel, jitter=config.jitter)
        write_json(certificate.to_dict(), os.path.join(output_dir, f"certificate_{tag}.json"))
        row.update(aggregate_condition(replicate_rows))
    except NumericError as e:
        logger.warning(f"⚠️  Condition {tag} failed: {e}")
        row.update(aggregate_condition([]))
        row.update({"status": "failed", "error": str(e), "replicates": len(datasets)})
    return row


def run_sweep(
    config: SweepConfig,
    output_dir: str,
    progress_callback: Optional[Callable] = None,
    show_progress: bool = False,
) -> SweepSummary:
    """
    Run every (theta1, theta2) condition and write the result files.

    Args:
        config: Sweep definition
        output_dir: Created if missing; receives summary.csv,
            histogram.csv, and per-condition records / plot / certificate
            files
        progress_callback: Optional fn(message, pct)
        show_progress: Draw a tqdm bar over conditions

    Returns:
        SweepSummary with one row per condition, in grid order. A condition
        that hits a numeric failure is marked failed; the others proceed.
    """
    def emit(msg: str, pct: float):
        if progress_callback:
            progress_callback(msg, pct)

    try:
        os.makedirs(output_dir, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"cannot create output directory {output_dir}: {e}") from e
    origin_labels = parse_origin_class(config.origin_class)

    logger.info(f"🔄 Preparing {config.replicate_count} dataset(s)...")
    datasets = build_datasets(config)
    norms = [_resolve_norm(config, dataset, origin_labels) for dataset in datasets]
    edges, _ = write_histogram(nearest_enemy_distances(datasets[0], origin_labels),
                               os.path.join(output_dir, "histogram.csv"))
    logger.info(f"📊 Nearest-enemy histogram: {len(edges) - 1} bins, norm={norms[0]:.4g}")
    emit("✓ Datasets ready", 10)

    grid = list(itertools.product(config.theta1_values, config.theta2_values))
    workers = config.max_workers or get_settings().max_workers
    rows = [None] * len(grid)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [
            executor.submit(_run_condition, config, datasets, norms, t1, t2, output_dir)
            for t1, t2 in grid
        ]
        done = enumerate(futures)
        if show_progress:
            done = tqdm(done, total=len(futures), desc="Conditions")
        for i, future in done:
            rows[i] = future.result()
            emit(f"✓ Condition {condition_tag(*grid[i])} {rows[i]['status']}", 10 + 90 * (i + 1) / len(grid))

    summary = SweepSummary(rows=rows)
    write_rows(
        os.path.join(output_dir, "summary.csv"),
        SUMMARY_COLUMNS,
        ([row[col] for col in SUMMARY_COLUMNS] for row in rows),
    )
    failed = sum(1 for row in rows if row["status"] != "ok")
    logger.info(f"💾 Sweep complete: {len(rows) - failed}/{len(rows)} conditions ok, results in {output_dir}")
    return summary
