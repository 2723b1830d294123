"""
Dataset I/O

Reading and writing labelled datasets (CSV and a raw little-endian binary
format with a JSON manifest) and the result files produced by attacks and
sweeps: record CSVs, plot-ready scatter triples, distance histograms and
certificate JSON.

Every float is written with 17 significant digits so 64-bit values survive
a round trip.
"""

import csv
import json
import logging
import math
import os
from typing import Iterable, Optional

import numpy as np

from attack_harness import RECORD_COLUMNS, AttackRecord
from errors import ConfigError, ParseError
from gp_core import LabeledDataset

logger = logging.getLogger(__name__)

BINARY_DTYPE = "f64"
BINARY_ORDER = "row-major"
PLOT_COLUMNS = ["distance_to_enemy", "empirical_prob", "theoretical_exact"]


def fmt(value) -> str:
    """Lossless text form of a CSV cell."""
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def check_writable(path: str) -> str:
    """
    Fail early, before any work is done, if `path` cannot be written.

    Raises:
        ConfigError: missing or read-only parent directory, or a directory
            in place of the file
    """
    folder = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(folder):
        raise ConfigError(f"output directory does not exist: {folder}")
    if os.path.isdir(path):
        raise ConfigError(f"output path is a directory: {path}")
    if not os.access(folder, os.W_OK):
        raise ConfigError(f"output directory is not writable: {folder}")
    return path


def write_rows(path: str, header: list[str], rows: Iterable[Iterable], comments: Optional[dict] = None):
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            for key, value in (comments or {}).items():
                f.write(f"# {key}={value}\n")
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([fmt(v) for v in row])
    except OSError as e:
        raise ConfigError(f"cannot write {path}: {e}")


# ---------------------------------------------------------------------------
# CSV datasets
# ---------------------------------------------------------------------------

def save_csv(dataset: LabeledDataset, path: str) -> str:
    header = [f"f{i}" for i in range(dataset.dim)] + ["label"]
    rows = (list(point) + [int(label)] for point, label in zip(dataset.points, dataset.labels))
    write_rows(path, header, rows)
    return path


def _parse_label(raw: str, line: int, path: str) -> int:
    try:
        value = float(raw)
    except ValueError:
        raise ParseError(f"label is not a number: {raw!r}", line=line, path=path)
    if value not in (1.0, -1.0):
        raise ParseError(f"label must be +1 or -1, got {raw!r}", line=line, path=path)
    return int(value)


def ingest_csv(path: str) -> LabeledDataset:
    """
    Read a dataset CSV: header row of feature names ending in `label`,
    then one row per point.

    Raises:
        ParseError: malformed header or row (1-based line numbers, header
            is line 1)
        DatasetError: the parsed data violates dataset invariants
    """
    points, labels = [], []
    try:
        f = open(path, newline="", encoding="utf-8")
    except OSError as e:
        raise ParseError(f"cannot open dataset: {e}", path=path)
    with f:
        reader = csv.reader(f)
        header = next(reader, None)
        if not header or header[-1].strip() != "label" or len(header) < 2:
            raise ParseError("header must list feature columns followed by 'label'", line=1, path=path)
        width = len(header)
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != width:
                raise ParseError(f"expected {width} fields, got {len(row)}", line=line, path=path)
            try:
                features = [float(cell) for cell in row[:-1]]
            except ValueError as e:
                raise ParseError(f"bad feature value ({e})", line=line, path=path)
            if not all(math.isfinite(v) for v in features):
                raise ParseError("non-finite feature value", line=line, path=path)
            points.append(features)
            labels.append(_parse_label(row[-1].strip(), line, path))

    if not points:
        raise ParseError("no data rows", path=path)
    dataset = LabeledDataset(points=np.array(points, dtype=np.float64), labels=np.array(labels))
    logger.info(f"✓ Loaded {dataset.n} points (D={dataset.dim}) from {path}")
    return dataset


# ---------------------------------------------------------------------------
# Binary datasets
# ---------------------------------------------------------------------------

def _sidecar_paths(manifest_path: str) -> tuple[str, str]:
    stem = os.path.splitext(os.path.basename(manifest_path))[0]
    return f"{stem}.points.f64", f"{stem}.labels.i8"


def save_binary(dataset: LabeledDataset, path: str) -> str:
    """
    Write a JSON manifest at `path` plus two little-endian sidecar files
    (row-major float64 points, int8 labels) next to it.
    """
    folder = os.path.dirname(os.path.abspath(path))
    data_name, labels_name = _sidecar_paths(path)
    check_writable(path)
    dataset.points.astype("<f8").tofile(os.path.join(folder, data_name))
    dataset.labels.astype("<i1").tofile(os.path.join(folder, labels_name))
    manifest = {
        "n": dataset.n,
        "d": dataset.dim,
        "dtype": BINARY_DTYPE,
        "order": BINARY_ORDER,
        "data_path": data_name,
        "labels_path": labels_name,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
    return path


def load_binary(path: str) -> LabeledDataset:
    try:
        with open(path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ParseError(f"cannot read manifest: {e}", path=path)

    missing = [k for k in ("n", "d", "dtype", "order", "data_path", "labels_path") if k not in manifest]
    if missing:
        raise ParseError(f"manifest lacks {', '.join(missing)}", path=path)
    if manifest["dtype"] != BINARY_DTYPE or manifest["order"] != BINARY_ORDER:
        raise ParseError(f"unsupported layout {manifest['dtype']}/{manifest['order']}", path=path)
    n, d = int(manifest["n"]), int(manifest["d"])

    folder = os.path.dirname(os.path.abspath(path))
    try:
        data = np.fromfile(os.path.join(folder, manifest["data_path"]), dtype="<f8")
        labels = np.fromfile(os.path.join(folder, manifest["labels_path"]), dtype="<i1")
    except OSError as e:
        raise ParseError(f"cannot read sidecar file: {e}", path=path)
    if data.size != n * d or labels.size != n:
        raise ParseError(f"sidecar sizes do not match n={n}, d={d}", path=path)
    return LabeledDataset(points=data.reshape(n, d), labels=labels)


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

def load_dataset(path: str) -> LabeledDataset:
    """Load by suffix: .csv for CSV, .json for a binary manifest."""
    suffix = os.path.splitext(path)[1].lower()
    if suffix == ".csv":
        return ingest_csv(path)
    if suffix == ".json":
        return load_binary(path)
    raise ConfigError(f"unknown dataset format {suffix!r} (expected .csv or .json)")


def save_dataset(dataset: LabeledDataset, path: str) -> str:
    suffix = os.path.splitext(path)[1].lower()
    if suffix == ".csv":
        return save_csv(dataset, path)
    if suffix == ".json":
        return save_binary(dataset, path)
    raise ConfigError(f"unknown dataset format {suffix!r} (expected .csv or .json)")


# ---------------------------------------------------------------------------
# Result files
# ---------------------------------------------------------------------------

def write_records_csv(records: list[AttackRecord], path: str) -> str:
    rows = ([record.to_row()[col] for col in RECORD_COLUMNS] for record in records)
    write_rows(path, RECORD_COLUMNS, rows)
    return path


def read_records_csv(path: str) -> list[dict]:
    """Records CSV back as typed dicts (used to recompute aggregates)."""
    out = []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            out.append({
                "origin_index": int(row["origin_index"]),
                "origin_label": int(row["origin_label"]),
                "nearest_enemy_index": int(row["nearest_enemy_index"]),
                "distance_to_enemy": float(row["distance_to_enemy"]),
                "norm": float(row["norm"]),
                "empirical_prob": float(row["empirical_prob"]),
                "theoretical_exact": float(row["theoretical_exact"]),
                "theoretical_phi": float(row["theoretical_phi"]),
                "valid": row["valid"] == "true",
                "follows_theorem": row["follows_theorem"] == "true",
            })
    return out


def emit_plot_data(records: list[AttackRecord], path: str) -> str:
    """Scatter triples (distance_to_enemy, empirical_prob, theoretical_exact)."""
    rows = ((r.distance_to_enemy, r.empirical_prob, r.theoretical_exact) for r in records)
    write_rows(path, PLOT_COLUMNS, rows)
    return path


def write_histogram(distances, path: str) -> tuple[np.ndarray, np.ndarray]:
    """
    Histogram of nearest-enemy distances with Freedman-Diaconis bins.
    The bin width goes into a `# bin_width=` header line.
    """
    values = np.asarray(distances, dtype=np.float64)
    if values.size == 0:
        raise ConfigError("cannot build a histogram of zero distances")
    edges = np.histogram_bin_edges(values, bins="fd")
    counts, _ = np.histogram(values, bins=edges)
    comments = {"binning": "freedman-diaconis", "bin_width": fmt(edges[1] - edges[0]), "n": values.size}
    rows = ((lo, hi, int(c)) for lo, hi, c in zip(edges[:-1], edges[1:], counts))
    write_rows(path, ["bin_left", "bin_right", "count"], rows, comments=comments)
    return edges, counts


def write_json(payload: dict, path: str) -> str:
    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2)
    except OSError as e:
        raise ConfigError(f"cannot write {path}: {e}")
    logger.debug(f"💾 Wrote {path}")
    return path
