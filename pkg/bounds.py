"""
Bounds Module

Maximum-success-probability certificates for adversarial examples against
a GP classifier.

For an origin x+ with nearest opposite-label point x-, and a perturbation
whose kernel value from x+ is r, the worst-case perturbed point x*max is the
point on the sphere k(x+, .) = r closest to x-. Its two-point predictive
moments give

    mu      = (theta_r1 - theta_r2) / (theta1 - theta_s) - epsilon
    sigma^2 = theta1 - (theta1 (theta_r1^2 + theta_r2^2)
                        - 2 theta_s theta_r1 theta_r2) / (theta1^2 - theta_s^2)

and the success probability is bounded by

    Phi(-mu / sigma) < 1/2 exp(-mu^2 / (2 sigma^2)) = phi(r | D).

A certificate is valid when the perturbation sphere does not reach x-
(theta_s < r) and mu > 0.

The tail at x*max is the largest over the sphere only while it still rises
with theta_r2 there, i.e. while
theta1 (theta1 + theta_s) - epsilon theta_s r >= r (r + theta_r2) - epsilon theta1 theta_r2.
Otherwise the sphere maximum sits between the collinear points; the
certificate reports it alongside as sphere_max_tail.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import erfc

from errors import DegeneratePairError, DomainError, NonPositiveSigmaError
from gp_core import LabeledDataset, two_point_moments
from kernel import (
    KernelSpec,
    as_point,
    kernel_at_distance,
    kernel_from_squared_distance,
    kernel_inverse_distance,
    pairwise_squared_distances,
    squared_distance,
)
from settings import get_settings

logger = logging.getLogger(__name__)

SIGMA2_TOLERANCE = 1e-12   # variances in (-tol, floor) are round-off
SIGMA2_FLOOR = 1e-300
MONOTONE_TOLERANCE = 1e-12
BOUND_CHAIN_MARGIN = 1e-15


# ---------------------------------------------------------------------------
# Normal tail
# ---------------------------------------------------------------------------

def std_normal_cdf(z: float) -> float:
    """Phi(z) through the complementary error function."""
    if math.isnan(z):
        raise DomainError("std_normal_cdf is undefined for NaN")
    return float(0.5 * erfc(-z / math.sqrt(2.0)))


def tail_probability(mean: float, variance: float) -> float:
    """Mass of N(mean, variance) below 0; a point mass when variance is 0."""
    if variance <= 0.0:
        if mean > 0:
            return 0.0
        return 1.0 if mean < 0 else 0.5
    return std_normal_cdf(-mean / math.sqrt(variance))


# ---------------------------------------------------------------------------
# Data types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CrossPair:
    x_plus: np.ndarray
    x_minus: np.ndarray
    s: float
    distance: float
    plus_index: Optional[int] = None
    minus_index: Optional[int] = None


def make_cross_pair(x_plus, x_minus, kernel: KernelSpec,
                    plus_index: Optional[int] = None,
                    minus_index: Optional[int] = None) -> CrossPair:
    """
    Build a CrossPair, checking k(x+, x+) > k(x+, x-) (positive 2x2 gram
    determinant for a translation-invariant kernel).
    """
    x_plus, x_minus = as_point(x_plus), as_point(x_minus)
    sq = squared_distance(x_plus, x_minus)
    if sq == 0.0:
        raise DegeneratePairError("x_plus and x_minus coincide")
    s = float(kernel_from_squared_distance(kernel, sq))
    if not kernel.theta1 > s:
        raise DegeneratePairError(
            f"k(x+, x-) = {s!r} is not below theta1 = {kernel.theta1!r}; points are indistinguishable"
        )
    return CrossPair(x_plus=x_plus, x_minus=x_minus, s=s, distance=math.sqrt(sq),
                     plus_index=plus_index, minus_index=minus_index)


@dataclass(frozen=True, eq=False)
class MspCertificate:
    pair: CrossPair
    kernel: KernelSpec
    r: float
    epsilon: float
    theta1: float
    theta_s: float
    theta_r1: float
    theta_r2: float
    mu: float
    sigma2: float
    exact_tail: float
    phi_bound: float
    valid: bool
    sigma_clamped: bool = False
    jitter: Optional[float] = None
    monotone_in_theta_r2: bool = True
    sphere_max_theta_r2: Optional[float] = None
    sphere_max_tail: Optional[float] = None

    @property
    def perturbation_distance(self) -> float:
        return kernel_inverse_distance(self.kernel, self.r)

    @property
    def bound_chain_holds(self) -> bool:
        """exact_tail < phi_bound, ties accepted only at float resolution."""
        return self.exact_tail < self.phi_bound or abs(self.phi_bound - self.exact_tail) <= BOUND_CHAIN_MARGIN

    def to_dict(self) -> dict:
        return {
            "plus_index": self.pair.plus_index,
            "minus_index": self.pair.minus_index,
            "pair_distance": self.pair.distance,
            "kernel": self.kernel.to_dict(),
            "r": self.r,
            "perturbation_distance": self.perturbation_distance,
            "epsilon": self.epsilon,
            "jitter": self.jitter,
            "theta1": self.theta1,
            "theta_s": self.theta_s,
            "theta_r1": self.theta_r1,
            "theta_r2": self.theta_r2,
            "mu": self.mu,
            "sigma2": self.sigma2,
            "sigma_clamped": self.sigma_clamped,
            "exact_tail": self.exact_tail,
            "phi_bound": self.phi_bound,
            "valid": self.valid,
            "monotone_in_theta_r2": self.monotone_in_theta_r2,
            "sphere_max_theta_r2": self.sphere_max_theta_r2,
            "sphere_max_tail": self.sphere_max_tail,
        }


@dataclass(frozen=True)
class MonotonicityScan:
    monotone: bool
    table: list = field(default_factory=list)   # rows: {s, phi_bound, exact_tail, mu, sigma2}
    reason: Optional[str] = None

    def to_dict(self) -> dict:
        return {"monotone": self.monotone, "reason": self.reason, "table": self.table}


@dataclass(frozen=True)
class DatasetCertificate:
    certificate: MspCertificate
    scan: MonotonicityScan

    @property
    def certifying(self) -> bool:
        return self.certificate.valid and self.scan.monotone

    def to_dict(self) -> dict:
        return {
            "certificate": self.certificate.to_dict(),
            "monotonicity_scan": self.scan.to_dict(),
            "certifying": self.certifying,
        }


# ---------------------------------------------------------------------------
# Pairwise certificate
# ---------------------------------------------------------------------------

def _check_r(r: float, kernel: KernelSpec):
    if not (math.isfinite(r) and 0 < r < kernel.theta1):
        raise DomainError(f"r must lie in (0, {kernel.theta1}), got {r!r}")


def _theta_r2_from_distances(kernel: KernelSpec, d_s: float, d_r: float) -> float:
    # closest point to x- on the sphere of radius d_r around x+ is collinear
    return kernel_at_distance(kernel, abs(d_s - d_r))


def x_star_max_theta_r2(pair: CrossPair, r: float, kernel: KernelSpec) -> float:
    """
    k(x-, x*max) where x*max maximises k(x-, .) over the sphere k(x+, .) = r.

    For a radial, strictly decreasing kernel the maximiser lies on the line
    through x+ and x-, at distance |d_s - d_r| from x-.

    Raises:
        DomainError: if r is not in (0, theta1)
    """
    _check_r(r, kernel)
    return _theta_r2_from_distances(kernel, pair.distance, kernel_inverse_distance(kernel, r))


def _msp_scalars(theta1: float, theta_s: float, theta_r1: float, theta_r2: float,
                 epsilon: float) -> dict:
    mean, sigma2 = two_point_moments(theta1, theta_s, theta_r1, theta_r2)
    mu = mean - epsilon
    if sigma2 <= -SIGMA2_TOLERANCE:
        raise NonPositiveSigmaError(sigma2)
    sigma_clamped = sigma2 < SIGMA2_FLOOR
    if sigma_clamped:
        sigma2 = SIGMA2_FLOOR
    sigma = math.sqrt(sigma2)
    return {
        "mu": mu,
        "sigma2": sigma2,
        "sigma_clamped": sigma_clamped,
        "exact_tail": std_normal_cdf(-mu / sigma),
        "phi_bound": 0.5 * math.exp(-(mu * mu) / (2.0 * sigma2)),
    }


def sphere_max_theta_r2(theta1: float, theta_s: float, r: float, q_min: float, q_max: float,
                        epsilon: float = 0.0) -> float:
    """
    theta_r2 in [q_min, q_max] at which the exact tail peaks.

    The sign of d(tail)/d(theta_r2) is that of
    theta1 (theta1 + theta_s) - epsilon theta_s r - theta_r2 (r - epsilon theta1) - r^2,
    linear in theta_r2, so the peak is the clamped root when the slope is
    negative and an endpoint otherwise.
    """
    slope = r - epsilon * theta1
    if slope > 0:
        root = (theta1 * (theta1 + theta_s) - epsilon * theta_s * r - r * r) / slope
        return min(max(root, q_min), q_max)
    low = _msp_scalars(theta1, theta_s, r, q_min, epsilon)["exact_tail"]
    high = _msp_scalars(theta1, theta_s, r, q_max, epsilon)["exact_tail"]
    return q_min if low > high else q_max


def _check_epsilon(epsilon: float):
    if not (math.isfinite(epsilon) and epsilon >= 0):
        raise DomainError(f"epsilon must be a nonnegative number, got {epsilon!r}")


def msp_certificate(pair: CrossPair, r: float, epsilon: float, kernel: KernelSpec,
                    jitter: Optional[float] = None) -> MspCertificate:
    """
    Maximum-success-probability certificate for one cross pair.

    Args:
        pair: Origin x+ and its nearest opposite-label point x-
        r: Kernel value k(x+, x*) of the perturbation, in (0, theta1)
        epsilon: Allowed gap between the full-data and two-point means
        kernel: Kernel specification
        jitter: Jitter of the model being certified, recorded only

    Returns:
        MspCertificate; probabilities are filled in even when invalid

    Raises:
        DomainError: r or epsilon out of range
        NonPositiveSigmaError: two-point variance clearly negative
    """
    _check_r(r, kernel)
    _check_epsilon(epsilon)
    theta_r2 = x_star_max_theta_r2(pair, r, kernel)
    scalars = _msp_scalars(kernel.theta1, pair.s, r, theta_r2, epsilon)
    valid = pair.s < r and scalars["mu"] > 0
    # farthest sphere point from x-
    q_min = kernel_at_distance(kernel, pair.distance + kernel_inverse_distance(kernel, r))
    peak = sphere_max_theta_r2(kernel.theta1, pair.s, r, q_min, theta_r2, epsilon)
    peak_tail = scalars["exact_tail"] if peak == theta_r2 else \
        _msp_scalars(kernel.theta1, pair.s, r, peak, epsilon)["exact_tail"]
    cert = MspCertificate(
        pair=pair,
        kernel=kernel,
        r=float(r),
        epsilon=float(epsilon),
        theta1=kernel.theta1,
        theta_s=pair.s,
        theta_r1=float(r),
        theta_r2=theta_r2,
        valid=valid,
        jitter=jitter,
        monotone_in_theta_r2=peak == theta_r2,
        sphere_max_theta_r2=peak,
        sphere_max_tail=peak_tail,
        **scalars,
    )
    if valid and not cert.bound_chain_holds:
        logger.warning(f"⚠️  Bound chain violated: exact={cert.exact_tail!r} phi={cert.phi_bound!r}")
    if valid and peak != theta_r2:
        logger.debug(f"Sphere tail peaks off x*max: {peak_tail!r} > {cert.exact_tail!r}")
    return cert


# ---------------------------------------------------------------------------
# Monotonicity in s and the dataset certificate
# ---------------------------------------------------------------------------

def monotonicity_scan(kernel: KernelSpec, r: float, s_grid, epsilon: float = 0.0) -> MonotonicityScan:
    """
    Evaluate phi(r | D) as a function of s = k(x+, x-) at fixed r.

    Args:
        kernel: Kernel specification
        r: Perturbation kernel value
        s_grid: Ascending s values, each in (0, r) (pairs farther apart
            than the perturbation radius)
        epsilon: Mean gap, as in msp_certificate

    Returns:
        MonotonicityScan; monotone is True iff phi never drops by more
        than 1e-12 along the grid

    Raises:
        DomainError: empty or unsorted grid, or a grid point outside (0, r)
    """
    _check_r(r, kernel)
    _check_epsilon(epsilon)
    grid = np.asarray(s_grid, dtype=np.float64).reshape(-1)
    if grid.size == 0:
        raise DomainError("s_grid is empty")
    if np.any(np.diff(grid) < 0):
        raise DomainError("s_grid must be ascending")
    outside = grid[(grid <= 0) | (grid >= r) | ~np.isfinite(grid)]
    if outside.size:
        raise DomainError(f"s_grid values must lie in (0, r={r!r}); got {outside[0]!r}")

    d_r = kernel_inverse_distance(kernel, r)
    table = []
    for s in grid:
        d_s = kernel_inverse_distance(kernel, float(s))
        theta_r2 = _theta_r2_from_distances(kernel, d_s, d_r)
        scalars = _msp_scalars(kernel.theta1, float(s), r, theta_r2, epsilon)
        table.append({
            "s": float(s),
            "phi_bound": scalars["phi_bound"],
            "exact_tail": scalars["exact_tail"],
            "mu": scalars["mu"],
            "sigma2": scalars["sigma2"],
        })

    phis = np.array([row["phi_bound"] for row in table])
    monotone = bool(np.all(np.diff(phis) >= -MONOTONE_TOLERANCE))
    return MonotonicityScan(monotone=monotone, table=table,
                            reason=None if monotone else "phi(r|D) decreases somewhere along the grid")


def closest_cross_pair(dataset: LabeledDataset, kernel: KernelSpec) -> tuple[CrossPair, np.ndarray]:
    """
    Globally closest (+1, -1) pair by exhaustive scan, lowest-index tie-break.

    Returns:
        (pair, nearest_sq) where nearest_sq[i] is the squared distance from
        the i-th positive point to its nearest negative point
    """
    pos, neg = dataset.positive_indices, dataset.negative_indices
    sq = pairwise_squared_distances(dataset.points[pos], dataset.points[neg])
    i, j = divmod(int(np.argmin(sq)), len(neg))   # row-major first minimum
    pair = make_cross_pair(dataset.points[pos[i]], dataset.points[neg[j]], kernel,
                           plus_index=int(pos[i]), minus_index=int(neg[j]))
    return pair, sq.min(axis=1)


def dataset_certificate(dataset: LabeledDataset, r: float, epsilon: float, kernel: KernelSpec,
                        scan_points: Optional[int] = None,
                        jitter: Optional[float] = None) -> DatasetCertificate:
    """
    Dataset-level bound: certificate of the closest cross pair, plus the
    monotonicity scan over the observed nearest-enemy s range.

    The bound certifies every positive point only when the scan passes.
    """
    pair, nearest_sq = closest_cross_pair(dataset, kernel)
    cert = msp_certificate(pair, r, epsilon, kernel, jitter=jitter)

    n_grid = scan_points or get_settings().scan_points
    s_values = kernel_from_squared_distance(kernel, nearest_sq)
    s_values = s_values[s_values > 0]
    if s_values.size == 0:
        scan = MonotonicityScan(monotone=False, reason="every nearest-enemy kernel value underflows to 0")
    elif s_values.max() >= r:
        scan = MonotonicityScan(monotone=False, reason="the closest pair lies within the perturbation radius")
    else:
        lo, hi = float(s_values.min()), float(s_values.max())
        grid = np.linspace(lo, hi, n_grid) if hi > lo else np.array([hi])
        scan = monotonicity_scan(kernel, r, grid, epsilon)

    logger.info(
        f"📊 Dataset certificate: pair=({pair.plus_index}, {pair.minus_index}) "
        f"d={pair.distance:.4g} phi={cert.phi_bound:.4g} valid={cert.valid} scan={scan.monotone}"
    )
    return DatasetCertificate(certificate=cert, scan=scan)
