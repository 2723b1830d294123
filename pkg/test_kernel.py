"""
Tests for the kernel module.
Run with: pytest test_kernel.py
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from errors import DimensionError, DomainError
from kernel import (
    KernelFamily,
    KernelSpec,
    distance,
    gram_matrix,
    kernel_at_distance,
    kernel_eval,
    kernel_inverse_distance,
    pairwise_squared_distances,
    squared_distance,
)

coords = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False, allow_infinity=False)
points_3d = arrays(np.float64, (3,), elements=coords)
thetas = st.floats(min_value=0.05, max_value=50.0)


def test_kernel_eval_examples():
    unit = KernelSpec(1.0, 1.0)
    assert kernel_eval(unit, [0.0, 0.0], [0.0, 0.0]) == 1.0
    assert kernel_eval(unit, [0.0, 0.0], [1.0, 0.0]) == pytest.approx(0.367879, abs=1e-6)
    assert kernel_eval(KernelSpec(0.5, 10.0), [0.0, 0.0], [1.0, 0.0]) == pytest.approx(0.452419, abs=1e-6)


def test_kernel_inverse_distance_examples():
    assert kernel_inverse_distance(KernelSpec(1.0, 1.0), 1.0) == 0.0
    assert kernel_inverse_distance(KernelSpec(1.0, 1.0), math.exp(-1.0)) == pytest.approx(1.0, rel=1e-12)
    assert kernel_inverse_distance(KernelSpec(1.0, 4.0), math.exp(-1.0)) == pytest.approx(2.0, rel=1e-12)


@pytest.mark.parametrize("value", [0.0, -0.1, 1.5, float("nan")])
def test_kernel_inverse_distance_rejects_out_of_range(value):
    with pytest.raises(DomainError):
        kernel_inverse_distance(KernelSpec(1.0, 1.0), value)


@pytest.mark.parametrize("theta1, theta2", [(0.0, 1.0), (1.0, -2.0), (float("inf"), 1.0), ("1", 1.0)])
def test_kernel_spec_rejects_bad_parameters(theta1, theta2):
    with pytest.raises(DomainError):
        KernelSpec(theta1, theta2)


def test_kernel_spec_is_frozen_and_serialisable():
    spec = KernelSpec(1, 2)
    assert spec.family is KernelFamily.GAUSSIAN
    assert spec.to_dict() == {"family": "gaussian", "theta1": 1.0, "theta2": 2.0}
    with pytest.raises(Exception):
        spec.theta1 = 3.0


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        kernel_eval(KernelSpec(1.0, 1.0), [0.0, 0.0], [0.0])
    with pytest.raises(DimensionError):
        pairwise_squared_distances(np.zeros((2, 3)), np.zeros((2, 2)))


@given(x=points_3d, y=points_3d, theta1=thetas, theta2=thetas)
def test_symmetry(x, y, theta1, theta2):
    spec = KernelSpec(theta1, theta2)
    assert kernel_eval(spec, x, y) == kernel_eval(spec, y, x)


@given(x=points_3d, y=points_3d, t=points_3d, theta2=thetas)
def test_translation_invariance(x, y, t, theta2):
    spec = KernelSpec(1.0, theta2)
    base = kernel_eval(spec, x, y)
    shifted = kernel_eval(spec, x + t, y + t)
    # shifting perturbs each coordinate difference by a few roundings
    d = distance(x, y)
    scale = max(np.abs(x).max(), np.abs(y).max(), np.abs(t).max()) + 1
    slack = 64 * np.finfo(float).eps * scale * (d + 1) / theta2
    assert shifted == pytest.approx(base, rel=1e-12 + slack, abs=1e-300)


@given(x=points_3d, y=points_3d, theta1=thetas, theta2=thetas)
def test_self_similarity_and_bounds(x, y, theta1, theta2):
    spec = KernelSpec(theta1, theta2)
    assert kernel_eval(spec, x, x) == spec.theta1
    value = kernel_eval(spec, x, y)
    assert 0.0 <= value <= spec.theta1


@settings(max_examples=200)
@given(x=points_3d, y=points_3d, theta2=thetas)
def test_inverse_round_trip(x, y, theta2):
    spec = KernelSpec(1.0, theta2)
    sq = squared_distance(x, y)
    ratio = sq / spec.theta2
    if not (1e-4 <= ratio <= 700):
        return
    recovered = kernel_inverse_distance(spec, kernel_eval(spec, x, y))
    assert recovered == pytest.approx(math.sqrt(sq), rel=1e-9)


@given(d1=st.floats(min_value=0.0, max_value=5.0), gap=st.floats(min_value=1e-3, max_value=5.0))
def test_monotone_decay(d1, gap):
    spec = KernelSpec(1.0, 10.0)
    assert kernel_at_distance(spec, d1) > kernel_at_distance(spec, d1 + gap)


def test_high_dimensional_distance_is_accurate():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(150_528)
    y = x + 1e-3
    assert squared_distance(x, y) == pytest.approx(150_528 * 1e-6, rel=1e-9)
    row = pairwise_squared_distances(x.reshape(1, -1), y.reshape(1, -1))[0, 0]
    assert row == pytest.approx(150_528 * 1e-6, rel=1e-9)


def test_pairwise_matches_squared_distance_exactly():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((4, 1000)) * 10.0 ** rng.integers(-8, 8, size=1000)
    b = rng.standard_normal((5, 1000)) * 10.0 ** rng.integers(-8, 8, size=1000)
    sq = pairwise_squared_distances(a, b)
    for i in range(4):
        for j in range(5):
            assert sq[i, j] == squared_distance(a[i], b[j])


def test_pairwise_keeps_small_terms_next_to_a_large_one():
    x = np.zeros(1001)
    y = np.ones(1001)
    y[0] = 1e8
    assert pairwise_squared_distances(x.reshape(1, -1), y.reshape(1, -1))[0, 0] == 1e16 + 1000.0


def test_gram_matrix_structure():
    rng = np.random.default_rng(1)
    points = rng.uniform(-3, 3, size=(12, 4))
    spec = KernelSpec(0.5, 2.0)
    gram = gram_matrix(spec, points)
    assert np.array_equal(gram, gram.T)
    assert np.all(np.diag(gram) == 0.5)
    assert gram[2, 7] == pytest.approx(kernel_eval(spec, points[2], points[7]), rel=1e-14)
