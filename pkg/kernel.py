"""
Kernel Module

Radial, translation-invariant kernels and the Euclidean geometry they rest
on. Only the Gaussian family is implemented:

    k(x, x') = theta1 * exp(-||x - x'||^2 / theta2)

Every family must come with a radial inverse (kernel value -> distance),
because the worst-case perturbation used by the certificates is built
from distances, not kernel values.
"""

import math
import numbers
from dataclasses import dataclass
from enum import Enum

import numpy as np

from errors import DimensionError, DomainError


class KernelFamily(str, Enum):
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus its two positive parameters."""

    theta1: float
    theta2: float
    family: KernelFamily = KernelFamily.GAUSSIAN

    def __post_init__(self):
        for name in ("theta1", "theta2"):
            value = getattr(self, name)
            if not (isinstance(value, numbers.Real) and math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be a positive finite number, got {value!r}")
        object.__setattr__(self, "theta1", float(self.theta1))
        object.__setattr__(self, "theta2", float(self.theta2))
        object.__setattr__(self, "family", KernelFamily(self.family))

    def to_dict(self) -> dict:
        return {"family": self.family.value, "theta1": self.theta1, "theta2": self.theta2}


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

def as_point(x) -> np.ndarray:
    """Coerce a point to a 1-D float64 array."""
    point = np.asarray(x, dtype=np.float64)
    if point.ndim == 0:
        point = point.reshape(1)
    if point.ndim != 1 or point.size == 0:
        raise DimensionError(f"a point must be a non-empty vector, got shape {point.shape}")
    return point


def squared_distance(x, y) -> float:
    """||x - y||^2 with exactly rounded summation over coordinates."""
    x, y = as_point(x), as_point(y)
    if x.shape != y.shape:
        raise DimensionError(f"dimension mismatch: {x.size} vs {y.size}")
    return math.fsum(np.square(x - y))


def distance(x, y) -> float:
    return math.sqrt(squared_distance(x, y))


def pairwise_squared_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    Squared distances between the rows of `a` and the rows of `b`.

    Differences are formed explicitly (no ||a||^2 + ||b||^2 - 2ab expansion)
    and each entry is summed with math.fsum, so it matches
    squared_distance bit for bit. One row of `a` is handled at a time so
    high-dimensional inputs never materialise an (Na, Nb, D) block.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    out = np.empty((a.shape[0], b.shape[0]), dtype=np.float64)
    for i, row in enumerate(a):
        out[i] = [math.fsum(terms) for terms in np.square(b - row)]
    return out


# ---------------------------------------------------------------------------
# Kernel evaluation
# ---------------------------------------------------------------------------

def kernel_from_squared_distance(spec: KernelSpec, sq_dist):
    """Kernel value(s) at the given squared distance(s)."""
    return spec.theta1 * np.exp(-np.asarray(sq_dist, dtype=np.float64) / spec.theta2)


def kernel_at_distance(spec: KernelSpec, d: float) -> float:
    if d < 0:
        raise DomainError(f"distance must be nonnegative, got {d!r}")
    return float(kernel_from_squared_distance(spec, d * d))


def kernel_eval(spec: KernelSpec, x, y) -> float:
    """k(x, y) for two points of equal dimension."""
    return float(kernel_from_squared_distance(spec, squared_distance(x, y)))


def kernel_inverse_distance(spec: KernelSpec, value: float) -> float:
    """
    Distance d at which the kernel equals `value`.

    For the Gaussian family d = sqrt(theta2 * ln(theta1 / value)).

    Raises:
        DomainError: if value is not in (0, theta1]
    """
    if not (math.isfinite(value) and 0 < value <= spec.theta1):
        raise DomainError(f"kernel value must lie in (0, {spec.theta1}], got {value!r}")
    if value == spec.theta1:
        return 0.0
    return math.sqrt(spec.theta2 * math.log(spec.theta1 / value))


def gram_matrix(spec: KernelSpec, points: np.ndarray) -> np.ndarray:
    """Symmetric gram matrix with the diagonal pinned to theta1."""
    sq = pairwise_squared_distances(points, points)
    sq = 0.5 * (sq + sq.T)
    gram = kernel_from_squared_distance(spec, sq)
    np.fill_diagonal(gram, spec.theta1)
    return gram


def cross_kernel(spec: KernelSpec, points: np.ndarray, query) -> np.ndarray:
    """Vector of k(x_i, query) over the rows of `points`."""
    query = as_point(query)
    sq = pairwise_squared_distances(query.reshape(1, -1), points)[0]
    return kernel_from_squared_distance(spec, sq)
