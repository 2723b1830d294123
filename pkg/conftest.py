"""
Shared pytest fixtures.
"""

import math

import numpy as np
import pytest

from gp_core import LabeledDataset
from kernel import KernelSpec
from settings import get_settings


@pytest.fixture(autouse=True)
def fresh_settings():
    """Settings are cached per process; tests that touch env vars need a clean slate."""
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def unit_kernel() -> KernelSpec:
    return KernelSpec(theta1=1.0, theta2=1.0)


@pytest.fixture
def two_point_dataset() -> LabeledDataset:
    """x+ = (0) labelled +1, x- = (2) labelled -1."""
    return LabeledDataset(points=np.array([[0.0], [2.0]]), labels=np.array([1, -1]))


@pytest.fixture
def oracle_moments() -> tuple[float, float]:
    """Two-point mean and variance at query 0.5 for the dataset above, theta1 = theta2 = 1."""
    theta_s, theta_r1, theta_r2 = math.exp(-4.0), math.exp(-0.25), math.exp(-2.25)
    mean = (theta_r1 - theta_r2) / (1.0 - theta_s)
    variance = 1.0 - ((theta_r1 ** 2 + theta_r2 ** 2) - 2.0 * theta_s * theta_r1 * theta_r2) / (1.0 - theta_s ** 2)
    return mean, variance


@pytest.fixture
def small_blobs() -> LabeledDataset:
    from sweep_service import generate_blobs
    return generate_blobs(20, 2, 10.0, 1.0, seed=3)


@pytest.fixture
def lattice_dataset() -> LabeledDataset:
    """18 points on a 3x3x2 lattice with spacing 1.5; well conditioned for theta2 <= 1."""
    axes = np.meshgrid(np.arange(3), np.arange(3), np.arange(2), indexing="ij")
    points = 1.5 * np.stack([a.reshape(-1) for a in axes], axis=1).astype(np.float64)
    labels = np.where(points.sum(axis=1) / 1.5 % 2 == 0, 1, -1)
    return LabeledDataset(points=points, labels=labels)
