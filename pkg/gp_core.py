"""
GP Core Module

Noise-free Gaussian-process regression used as a binary classifier:
datasets, fitting (gram matrix + Cholesky factor), predictive mean and
variance, and the closed forms for a model trained on just two points.
"""

import logging
import threading
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import cho_solve, lapack, solve_triangular

from errors import DatasetError, DegeneratePairError, DimensionError, DomainError, NumericError, SingularGramError
from kernel import KernelSpec, as_point, cross_kernel, gram_matrix, kernel_eval, squared_distance
from settings import default_jitter

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Data types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """
    N points in R^D with labels in {+1, -1}.

    Arrays are copied on construction and made read-only. Equality is
    bit-exact on both arrays.
    """

    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        points = np.array(self.points, dtype=np.float64)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        if points.ndim != 2 or points.shape[1] == 0:
            raise DatasetError(f"points must be an N x D matrix, got shape {points.shape}")
        if not np.all(np.isfinite(points)):
            raise DatasetError("points contain non-finite values")

        labels = np.array(self.labels).reshape(-1)
        if labels.shape[0] != points.shape[0]:
            raise DatasetError(f"{points.shape[0]} points but {labels.shape[0]} labels")
        if not np.all((labels == 1) | (labels == -1)):
            bad = labels[(labels != 1) & (labels != -1)][0]
            raise DatasetError(f"labels must be +1 or -1, got {bad!r}")
        labels = labels.astype(np.int64)

        if points.shape[0] < 2:
            raise DatasetError("a dataset needs at least 2 points")
        if not (np.any(labels == 1) and np.any(labels == -1)):
            raise DatasetError("a dataset needs at least one +1 and one -1 point")

        points.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", labels)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return (
            self.points.shape == other.points.shape
            and self.points.tobytes() == other.points.tobytes()
            and np.array_equal(self.labels, other.labels)
        )

    __hash__ = None

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def positive_indices(self) -> np.ndarray:
        return np.flatnonzero(self.labels == 1)

    @property
    def negative_indices(self) -> np.ndarray:
        return np.flatnonzero(self.labels == -1)

    @property
    def targets(self) -> np.ndarray:
        return self.labels.astype(np.float64)


@dataclass(frozen=True)
class PredictiveDistribution:
    mean: float
    variance: float
    clamped: bool = False

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))


class ClampCounter:
    """Thread-safe count of predictions whose variance had to be clamped."""

    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0

    def increment(self):
        with self._lock:
            self._count += 1

    @property
    def count(self) -> int:
        return self._count


@dataclass(frozen=True, eq=False)
class GpModel:
    """Fitted noise-free GP regressor. Read-only after `fit`."""

    dataset: LabeledDataset
    kernel: KernelSpec
    factor: np.ndarray   # lower L with L @ L.T == K + jitter * I
    alpha: np.ndarray    # (K + jitter * I)^-1 y
    jitter: float
    clamp_counter: ClampCounter = field(default_factory=ClampCounter)

    @property
    def clamp_count(self) -> int:
        return self.clamp_counter.count


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

def _duplicate_pivot(dataset: LabeledDataset, jitter: float) -> Optional[int]:
    """
    Row index of the first duplicate that makes the model ill-defined.

    Duplicates with conflicting labels are never allowed; duplicates with
    equal labels are allowed only when jitter > 0.
    """
    points, labels = dataset.points, dataset.labels
    _, first, inverse = np.unique(points, axis=0, return_index=True, return_inverse=True)
    first_of_row = first[np.asarray(inverse).reshape(-1)]
    later = np.flatnonzero(first_of_row != np.arange(len(points)))
    for row in later:
        if labels[row] != labels[first_of_row[row]] or jitter == 0:
            return int(row)
    return None


def _factorize(gram: np.ndarray, jitter: float, theta1: float) -> np.ndarray:
    """Lower Cholesky factor of gram + jitter * I, or SingularGramError."""
    n = gram.shape[0]
    shifted = gram + jitter * np.eye(n) if jitter > 0 else gram
    factor, info = lapack.dpotrf(shifted, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise SingularGramError(pivot=info - 1)
    if info < 0:
        raise NumericError(f"dpotrf rejected argument {-info}")
    # a pivot at round-off level means the matrix is singular in exact arithmetic
    pivots = np.diag(factor) ** 2
    tiny = np.flatnonzero(pivots <= n * np.finfo(np.float64).eps * theta1)
    if tiny.size:
        raise SingularGramError(pivot=int(tiny[0]))
    return factor


def fit(dataset: LabeledDataset, kernel: KernelSpec, jitter: Optional[float] = None) -> GpModel:
    """
    Fit a noise-free GP regressor on ±1 targets.

    Args:
        dataset: Training points and labels
        kernel: Kernel specification
        jitter: Diagonal shift; None means the configured default
            (GPCERT_JITTER_SCALE * theta1). 0 is honoured exactly.

    Returns:
        GpModel holding the Cholesky factor and the solved weights

    Raises:
        SingularGramError: if K + jitter * I is not positive definite
    """
    if jitter is None:
        jitter = default_jitter(kernel.theta1)
    if not (np.isfinite(jitter) and jitter >= 0):
        raise DomainError(f"jitter must be a nonnegative number, got {jitter!r}")

    pivot = _duplicate_pivot(dataset, jitter)
    if pivot is not None:
        raise SingularGramError(pivot=pivot, message=f"duplicate training point at row {pivot}")

    gram = gram_matrix(kernel, dataset.points)
    factor = _factorize(gram, jitter, kernel.theta1)
    alpha = cho_solve((factor, True), dataset.targets)

    logger.debug(f"✓ Fitted GP on {dataset.n} points (D={dataset.dim}, jitter={jitter:g})")
    factor.setflags(write=False)
    alpha.setflags(write=False)
    return GpModel(dataset=dataset, kernel=kernel, factor=factor, alpha=alpha, jitter=float(jitter))


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------

def _clamped(variance: float, theta1: float) -> tuple[float, bool]:
    if variance < 0.0:
        return 0.0, True
    if variance > theta1:
        return theta1, True
    return float(variance), False


def predict(model: GpModel, query) -> PredictiveDistribution:
    """Predictive mean k*ᵀ(K+jI)⁻¹y and variance k** - k*ᵀ(K+jI)⁻¹k*."""
    query = as_point(query)
    if query.size != model.dataset.dim:
        raise DimensionError(f"query has dimension {query.size}, model expects {model.dataset.dim}")

    k_star = cross_kernel(model.kernel, model.dataset.points, query)
    mean = float(k_star @ model.alpha)
    v = solve_triangular(model.factor, k_star, lower=True)
    variance, clamped = _clamped(model.kernel.theta1 - float(v @ v), model.kernel.theta1)
    if clamped:
        model.clamp_counter.increment()
        logger.debug(f"Variance clamped to {variance:g} at query (mean={mean:g})")
    return PredictiveDistribution(mean=mean, variance=variance, clamped=clamped)


def two_point_moments(theta1: float, theta_s: float, theta_r1: float, theta_r2: float) -> tuple[float, float]:
    """
    Mean and (unclamped) variance of a GP trained on {(x+, +1), (x-, -1)}.

    theta1 = k(x, x), theta_s = k(x+, x-), theta_r1 = k(x+, x*),
    theta_r2 = k(x-, x*).
    """
    denom = theta1 - theta_s
    if denom <= 0:
        raise DegeneratePairError(f"k(x+, x+) - k(x+, x-) must be positive, got {denom!r}")
    mean = (theta_r1 - theta_r2) / denom
    quad = theta1 * (theta_r1 ** 2 + theta_r2 ** 2) - 2.0 * theta_s * theta_r1 * theta_r2
    variance = theta1 - quad / (theta1 ** 2 - theta_s ** 2)
    return mean, variance


def two_point_predict(x_plus, x_minus, query, kernel: KernelSpec) -> PredictiveDistribution:
    """Closed-form prediction of the two-point model (no matrix solve)."""
    if squared_distance(x_plus, x_minus) == 0.0:
        raise DegeneratePairError("x_plus and x_minus coincide")
    theta_s = kernel_eval(kernel, x_plus, x_minus)
    theta_r1 = kernel_eval(kernel, x_plus, query)
    theta_r2 = kernel_eval(kernel, x_minus, query)
    mean, variance = two_point_moments(kernel.theta1, theta_s, theta_r1, theta_r2)
    variance, clamped = _clamped(variance, kernel.theta1)
    return PredictiveDistribution(mean=mean, variance=variance, clamped=clamped)


def incremental_variances(dataset: LabeledDataset, kernel: KernelSpec, query) -> list[float]:
    """
    Predictive variance at `query` using the first n points, n = 1..N.

    The leading n x n block of the Cholesky factor of K is the factor of
    the first n points, so one factorization serves every prefix:
    Var_n = k(q, q) - sum_{i<=n} v_i^2 with v = L^-1 k(q).

    Raises:
        SingularGramError: if the noise-free gram matrix is singular
    """
    query = as_point(query)
    if query.size != dataset.dim:
        raise DimensionError(f"query has dimension {query.size}, dataset has {dataset.dim}")
    pivot = _duplicate_pivot(dataset, 0.0)
    if pivot is not None:
        raise SingularGramError(pivot=pivot, message=f"duplicate training point at row {pivot}")

    factor = _factorize(gram_matrix(kernel, dataset.points), 0.0, kernel.theta1)
    v = solve_triangular(factor, cross_kernel(kernel, dataset.points, query), lower=True)
    raw = kernel.theta1 - np.cumsum(v * v)
    return [_clamped(float(value), kernel.theta1)[0] for value in raw]
