"""
Tests for synthetic data, sweep configuration and sweep aggregation.
Run with: pytest test_sweep_service.py
"""

import json
import math
import os

import numpy as np
import pytest

from dataset_io import read_records_csv, save_csv
from errors import ConfigError
from sweep_service import (
    SweepConfig,
    aggregate_condition,
    build_datasets,
    condition_tag,
    generate_blobs,
    nearest_enemy_distances,
    run_sweep,
)

BLOBS = {"generator": "blobs", "n_per_class": 200, "dim": 2, "separation": 10.0, "spread": 1.0}


# ---------------------------------------------------------------------------
# generate_blobs
# ---------------------------------------------------------------------------

def test_generate_blobs_minimal():
    dataset = generate_blobs(1, 1, 2.0, 0.1, seed=0)
    assert dataset.n == 2
    assert sorted(dataset.labels.tolist()) == [-1, 1]


def test_generate_blobs_is_deterministic():
    a = generate_blobs(200, 2, 10.0, 1.0, seed=7)
    b = generate_blobs(200, 2, 10.0, 1.0, seed=7)
    assert a.points.tobytes() == b.points.tobytes()
    assert a == b
    assert generate_blobs(200, 2, 10.0, 1.0, seed=8) != a


def test_generate_blobs_centres():
    dataset = generate_blobs(2000, 3, 10.0, 1.0, seed=1)
    plus = dataset.points[dataset.labels == 1].mean(axis=0)
    minus = dataset.points[dataset.labels == -1].mean(axis=0)
    assert plus[0] == pytest.approx(5.0, abs=0.1)
    assert minus[0] == pytest.approx(-5.0, abs=0.1)


@pytest.mark.parametrize("args", [(0, 2, 1.0, 1.0), (5, 0, 1.0, 1.0), (5, 2, -1.0, 1.0), (5, 2, 1.0, 0.0),
                                  ("5", 2, 1.0, 1.0), (5, 2.7, 1.0, 1.0), (True, 2, 1.0, 1.0), (5, 2, "far", 1.0)])
def test_generate_blobs_rejects_bad_parameters(args):
    with pytest.raises(ConfigError):
        generate_blobs(*args, seed=0)


def test_overlapping_blobs_mostly_invalid():
    from attack_harness import run_attack_sweep
    from kernel import KernelSpec

    dataset = generate_blobs(50, 2, 0.0, 1.0, seed=2)
    records = run_attack_sweep(dataset, KernelSpec(1.0, 1.0), 1.0, jitter=1e-8)
    assert sum(1 for r in records if r.valid) < len(records) / 2


def test_nearest_enemy_distances_order():
    from gp_core import LabeledDataset

    dataset = LabeledDataset(points=np.array([[0.0], [3.0], [10.0], [4.0]]), labels=np.array([1, -1, 1, -1]))
    assert nearest_enemy_distances(dataset).tolist() == [3.0, 6.0]
    assert nearest_enemy_distances(dataset, (1, -1)).tolist() == [3.0, 3.0, 6.0, 4.0]


# ---------------------------------------------------------------------------
# SweepConfig
# ---------------------------------------------------------------------------

def _config(**overrides) -> dict:
    data = {"theta1_values": [0.1, 0.5, 1.0], "theta2_values": [10.0], "norm": 0.5, "dataset_source": dict(BLOBS)}
    data.update(overrides)
    return data


@pytest.mark.parametrize("overrides", [
    {"theta1_values": []},
    {"theta2_values": [10.0, -1.0]},
    {"norm": None},
    {"norm_fraction": 0.1},
    {"epsilon": -0.5},
    {"replicates": 0},
    {"origin_class": "up"},
    {"dataset_source": {"generator": "moons"}},
    {"dataset_source": {"generator": "blobs", "dim": 2}},
    {"dataset_source": {}},
    {"colour": "blue"},
    {"theta1_values": ["a"]},
    {"dataset_source": {**BLOBS, "n_per_class": "abc"}},
    {"dataset_source": {**BLOBS, "dim": 2.7}},
    {"dataset_source": {**BLOBS, "n_per_class": True}},
    {"dataset_source": {**BLOBS, "spread": "wide"}},
    {"dataset_source": {**BLOBS, "separation": float("nan")}},
    {"dataset_source": {**BLOBS, "radius": 3.0}},
    {"seed": True},
])
def test_config_rejects_invalid(overrides):
    with pytest.raises(ConfigError):
        SweepConfig.from_dict(_config(**overrides))


def test_config_from_json_resolves_paths(tmp_path, small_blobs):
    save_csv(small_blobs, str(tmp_path / "data.csv"))
    config_path = tmp_path / "sweep.json"
    config_path.write_text(json.dumps(_config(dataset_source={"path": "data.csv"})))
    config = SweepConfig.from_json(str(config_path))
    assert config.dataset_paths == [str(tmp_path / "data.csv")]
    assert build_datasets(config) == [small_blobs]


def test_config_from_json_rejects_garbage(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        SweepConfig.from_json(str(path))


def test_replicates_are_distinct_and_reproducible():
    config = SweepConfig.from_dict(_config(replicates=3, seed=5))
    first, second = build_datasets(config), build_datasets(config)
    assert first == second
    assert first[0] != first[1]


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

def _row(distance, empirical, exact, valid=True):
    return {"distance_to_enemy": distance, "empirical_prob": empirical, "theoretical_exact": exact,
            "valid": valid, "follows_theorem": empirical <= exact}


def test_aggregate_condition():
    replicate_a = [_row(1.0, 0.1, 0.2), _row(3.0, 0.3, 0.2), _row(5.0, 0.0, 0.4, valid=False)]
    replicate_b = [_row(2.0, 0.0, 0.5), _row(4.0, 0.0, 0.1)]
    stats = aggregate_condition([replicate_a, replicate_b])
    assert stats["n_records"] == 5
    assert stats["n_valid"] == 4
    assert stats["proportion_following_theorem"] == pytest.approx(0.8)
    # per-replicate maxima over valid records: 0.2 and 0.5
    assert stats["mean_max_theoretical"] == pytest.approx(0.35)
    assert stats["std_max_theoretical"] == pytest.approx(0.15)
    assert stats["mean_distance_violators"] == pytest.approx(3.0)
    assert stats["mean_distance_all"] == pytest.approx(3.0)
    assert stats["mean_theoretical"] == pytest.approx(0.25)
    assert stats["mean_empirical"] == pytest.approx(0.08)
    # per-replicate empirical maxima: 0.3 and 0.0
    assert stats["max_empirical"] == pytest.approx(0.15)
    assert stats["std_distance_violators"] == 0.0


def test_aggregate_condition_without_valid_records():
    stats = aggregate_condition([[_row(1.0, 0.1, 0.2, valid=False)]])
    assert math.isnan(stats["mean_max_theoretical"])
    assert math.isnan(stats["mean_distance_violators"])
    assert math.isnan(stats["mean_theoretical"])
    assert math.isnan(stats["std_distance_violators"])
    assert stats["max_empirical"] == pytest.approx(0.1)


# ---------------------------------------------------------------------------
# run_sweep
# ---------------------------------------------------------------------------

def test_sweep_writes_every_file(tmp_path):
    config = SweepConfig.from_dict(_config(
        theta1_values=[0.5, 1.0], theta2_values=[10.0],
        dataset_source={**BLOBS, "n_per_class": 30}, replicates=2, jitter=1e-9,
    ))
    summary = run_sweep(config, str(tmp_path))
    assert [(row["theta1"], row["theta2"]) for row in summary.rows] == [(0.5, 10.0), (1.0, 10.0)]
    for name in ("summary.csv", "histogram.csv"):
        assert (tmp_path / name).exists()
    for t1 in (0.5, 1.0):
        tag = condition_tag(t1, 10.0)
        assert (tmp_path / f"certificate_{tag}.json").exists()
        for k in (0, 1):
            assert (tmp_path / f"records_{tag}_rep{k}.csv").exists()
            assert (tmp_path / f"plot_{tag}_rep{k}.csv").exists()


def test_sweep_aggregates_are_recomputable(tmp_path):
    config = SweepConfig.from_dict(_config(
        theta1_values=[1.0], theta2_values=[10.0, 50.0],
        dataset_source={**BLOBS, "n_per_class": 40}, replicates=2, jitter=1e-9,
    ))
    summary = run_sweep(config, str(tmp_path))
    for row in summary.rows:
        tag = condition_tag(row["theta1"], row["theta2"])
        rows = [read_records_csv(os.path.join(tmp_path, f"records_{tag}_rep{k}.csv")) for k in (0, 1)]
        recomputed = aggregate_condition(rows)
        for key, value in recomputed.items():
            if isinstance(value, float) and math.isnan(value):
                assert math.isnan(row[key])
            else:
                assert row[key] == value


def test_sweep_is_byte_identical(tmp_path):
    config = SweepConfig.from_dict(_config(
        theta1_values=[0.5, 1.0], theta2_values=[10.0],
        dataset_source={**BLOBS, "n_per_class": 30}, seed=3, jitter=1e-9,
    ))
    run_sweep(config, str(tmp_path / "a"))
    run_sweep(config, str(tmp_path / "b"))
    names = sorted(os.listdir(tmp_path / "a"))
    assert names == sorted(os.listdir(tmp_path / "b"))
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sweep_marks_failed_conditions(tmp_path):
    # theta2 so small that the kernel value at the norm underflows
    config = SweepConfig.from_dict(_config(
        theta1_values=[1.0], theta2_values=[1e-4, 10.0],
        dataset_source={**BLOBS, "n_per_class": 20}, norm=1.0, jitter=1e-9,
    ))
    summary = run_sweep(config, str(tmp_path))
    failed, ok = summary.rows
    assert failed["status"] == "failed"
    assert failed["error"]
    assert ok["status"] == "ok"
    assert ok["n_records"] == 20


def test_progress_callback_reaches_100(tmp_path):
    seen = []
    config = SweepConfig.from_dict(_config(
        theta1_values=[1.0], theta2_values=[10.0], dataset_source={**BLOBS, "n_per_class": 10},
    ))
    run_sweep(config, str(tmp_path), progress_callback=lambda msg, pct: seen.append(pct))
    assert seen[-1] == pytest.approx(100.0)


def test_show_progress_draws_condition_bar(tmp_path, capsys):
    config = SweepConfig.from_dict(_config(
        theta1_values=[0.5, 1.0], theta2_values=[10.0], dataset_source={**BLOBS, "n_per_class": 10},
    ))
    run_sweep(config, str(tmp_path), show_progress=True)
    assert "Conditions" in capsys.readouterr().err


def test_sweep_output_dir_under_a_file_is_config_error(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    config = SweepConfig.from_dict(_config(theta1_values=[1.0], dataset_source={**BLOBS, "n_per_class": 10}))
    with pytest.raises(ConfigError):
        run_sweep(config, str(blocker / "results"))


@pytest.mark.slow
@pytest.mark.parametrize("dim", [2, 20])
def test_acceptance_sweep(tmp_path, dim):
    config = SweepConfig.from_dict({
        "theta1_values": [0.1, 0.5, 1.0],
        "theta2_values": [10.0, 50.0],
        "norm_fraction": 0.1,
        "jitter": 1e-10,
        "seed": 7,
        "dataset_source": {**BLOBS, "dim": dim},
    })
    summary = run_sweep(config, str(tmp_path))
    for row in summary.rows:
        assert row["status"] == "ok"
        assert row["proportion_following_theorem"] >= 0.95
        if not math.isnan(row["mean_distance_violators"]):
            assert row["mean_distance_violators"] < row["mean_distance_all"]
    for theta2 in (10.0, 50.0):
        trend = [summary.row(t1, theta2)["mean_max_theoretical"] for t1 in (0.1, 0.5, 1.0)]
        assert trend[0] < trend[1] < trend[2]
