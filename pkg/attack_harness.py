"""
Attack Harness

Crafts nearest-enemy-directed adversarial examples, measures the fitted
GP's misclassification probability at each one, and sets it beside the
theoretical certificate for the same origin point.

Sign convention: whichever class an origin point belongs to, it plays the
role of x+ in its certificate and its nearest enemy plays x-. Attack
success means the classifier's predictive mass lands on the enemy's side
of 0.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from tqdm import tqdm

from bounds import make_cross_pair, msp_certificate, std_normal_cdf, tail_probability
from errors import ConfigError, DegeneratePairError, DomainError
from gp_core import GpModel, LabeledDataset, fit, predict
from kernel import KernelSpec, as_point, kernel_at_distance, kernel_from_squared_distance, pairwise_squared_distances, squared_distance
from settings import get_settings

logger = logging.getLogger(__name__)

RECORD_COLUMNS = [
    "origin_index",
    "origin_label",
    "nearest_enemy_index",
    "distance_to_enemy",
    "norm",
    "empirical_prob",
    "theoretical_exact",
    "theoretical_phi",
    "valid",
    "follows_theorem",
]

OriginClass = Union[int, str]


@dataclass(frozen=True, eq=False)
class AttackRecord:
    origin_index: int
    origin_label: int
    nearest_enemy_index: int
    distance_to_enemy: float
    perturbation_norm: float
    adversarial_point: np.ndarray
    empirical_prob: float
    theoretical_exact: float
    theoretical_phi: float
    valid: bool
    enemy_is_kernel_argmax: bool = True

    @property
    def follows_theorem(self) -> bool:
        return self.empirical_prob <= self.theoretical_exact

    def to_row(self) -> dict:
        """Row for the records CSV, keyed by RECORD_COLUMNS."""
        return {
            "origin_index": self.origin_index,
            "origin_label": self.origin_label,
            "nearest_enemy_index": self.nearest_enemy_index,
            "distance_to_enemy": self.distance_to_enemy,
            "norm": self.perturbation_norm,
            "empirical_prob": self.empirical_prob,
            "theoretical_exact": self.theoretical_exact,
            "theoretical_phi": self.theoretical_phi,
            "valid": self.valid,
            "follows_theorem": self.follows_theorem,
        }


def parse_origin_class(value: OriginClass) -> tuple[int, ...]:
    """Map "+1" / "-1" / "both" (or ±1) to the labels attacks start from."""
    text = str(value).strip().lower()
    if text in ("1", "+1"):
        return (1,)
    if text == "-1":
        return (-1,)
    if text == "both":
        return (1, -1)
    raise ConfigError(f"origin_class must be '+1', '-1' or 'both', got {value!r}")


# ---------------------------------------------------------------------------
# Single-point operations
# ---------------------------------------------------------------------------

def craft_ae(origin, enemy, norm: float) -> np.ndarray:
    """origin + norm * (enemy - origin) / ||enemy - origin||"""
    origin, enemy = as_point(origin), as_point(enemy)
    if not (math.isfinite(norm) and norm > 0):
        raise DomainError(f"norm must be a positive number, got {norm!r}")
    gap = math.sqrt(squared_distance(origin, enemy))
    if gap == 0.0:
        raise DegeneratePairError("origin and enemy coincide")
    return origin + (norm / gap) * (enemy - origin)


def empirical_success_prob(model: GpModel, adversarial_point, origin_label: int) -> float:
    """
    Probability that the GP labels `adversarial_point` opposite to
    `origin_label`, computed from the predictive Gaussian (no sampling).
    """
    if origin_label not in (1, -1):
        raise ConfigError(f"origin_label must be +1 or -1, got {origin_label!r}")
    dist = predict(model, adversarial_point)
    if origin_label == 1:
        return tail_probability(dist.mean, dist.variance)
    if dist.variance <= 0.0:
        return 1.0 - tail_probability(dist.mean, dist.variance)
    return std_normal_cdf(dist.mean / dist.std)


def nearest_enemies(dataset: LabeledDataset, kernel: KernelSpec, origins) -> list[tuple[int, float, bool]]:
    """
    For each origin index, its closest opposite-label point.

    Returns:
        (enemy_index, distance, enemy_is_kernel_argmax) per origin, in the
        order given. Ties go to the lowest index.
    """
    out = []
    for label in (1, -1):
        rows = [i for i in origins if dataset.labels[i] == label]
        if not rows:
            continue
        enemies = np.flatnonzero(dataset.labels == -label)
        sq = pairwise_squared_distances(dataset.points[rows], dataset.points[enemies])
        values = kernel_from_squared_distance(kernel, sq)
        best = np.argmin(sq, axis=1)
        for k, origin in enumerate(rows):
            j = int(best[k])
            agrees = bool(values[k, j] == values[k].max())
            out.append((origin, (int(enemies[j]), math.sqrt(sq[k, j]), agrees)))
    lookup = dict(out)
    return [lookup[i] for i in origins]


# ---------------------------------------------------------------------------
# Sweep
# ---------------------------------------------------------------------------

def _attack_one(model: GpModel, origin: int, enemy: int, gap: float, agrees: bool,
                norm: float, r: float, epsilon: float) -> AttackRecord:
    dataset, kernel = model.dataset, model.kernel
    x_origin, x_enemy = dataset.points[origin], dataset.points[enemy]
    label = int(dataset.labels[origin])

    adversarial = craft_ae(x_origin, x_enemy, norm)
    empirical = empirical_success_prob(model, adversarial, label)
    pair = make_cross_pair(x_origin, x_enemy, kernel, plus_index=origin, minus_index=enemy)
    cert = msp_certificate(pair, r, epsilon, kernel, jitter=model.jitter)

    logger.debug(
        f"origin={origin} enemy={enemy} d={gap:.4g} empirical={empirical:.4g} "
        f"exact={cert.exact_tail:.4g} valid={cert.valid}"
    )
    return AttackRecord(
        origin_index=origin,
        origin_label=label,
        nearest_enemy_index=enemy,
        distance_to_enemy=gap,
        perturbation_norm=float(norm),
        adversarial_point=adversarial,
        empirical_prob=empirical,
        theoretical_exact=cert.exact_tail,
        theoretical_phi=cert.phi_bound,
        valid=cert.valid,
        enemy_is_kernel_argmax=agrees,
    )


def run_attack_sweep(
    dataset: LabeledDataset,
    kernel: KernelSpec,
    norm: float,
    epsilon: float = 0.0,
    jitter: Optional[float] = None,
    origin_class: OriginClass = 1,
    max_workers: Optional[int] = None,
    show_progress: bool = False,
) -> list[AttackRecord]:
    """
    Attack every origin point once, toward its nearest enemy.

    Args:
        dataset: Training data; one GP is fitted on all of it
        kernel: Kernel specification
        norm: Euclidean length of every perturbation
        epsilon: Mean gap passed to the certificates
        jitter: Fit jitter; None means the configured default
        origin_class: "+1", "-1" or "both"
        max_workers: Thread pool width; None means GPCERT_MAX_WORKERS
        show_progress: Draw a tqdm bar

    Returns:
        One AttackRecord per origin point, ordered by origin index.
        Records whose certificate is not valid are kept and flagged.
    """
    labels = parse_origin_class(origin_class)
    if not (math.isfinite(norm) and norm > 0):
        raise DomainError(f"norm must be a positive number, got {norm!r}")
    r = kernel_at_distance(kernel, norm)
    if not (0.0 < r < kernel.theta1):
        raise DomainError(f"kernel value at norm={norm!r} is {r!r}; outside (0, theta1)")

    model = fit(dataset, kernel, jitter=jitter)
    origins = [int(i) for i in np.flatnonzero(np.isin(dataset.labels, labels))]
    enemies = nearest_enemies(dataset, kernel, origins)

    disagreements = sum(1 for _, _, agrees in enemies if not agrees)
    if disagreements:
        logger.warning(f"⚠️  {disagreements} nearest enemies are not the kernel argmax")

    workers = max_workers or get_settings().max_workers
    logger.info(f"🔄 Attacking {len(origins)} points (norm={norm:g}, r={r:.4g}, workers={workers})")

    records: list[Optional[AttackRecord]] = [None] * len(origins)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = {
            executor.submit(_attack_one, model, origin, enemy, gap, agrees, norm, r, epsilon): k
            for k, (origin, (enemy, gap, agrees)) in enumerate(zip(origins, enemies))
        }
        done = as_completed(futures)
        if show_progress:
            done = tqdm(done, total=len(futures), desc="Attacking")
        for future in done:
            records[futures[future]] = future.result()

    if model.clamp_count:
        logger.warning(f"⚠️  Predictive variance clamped {model.clamp_count} times")
    following = sum(1 for rec in records if rec.follows_theorem)
    logger.info(f"✓ Attack sweep complete: {following}/{len(records)} follow the bound")
    return records
