"""Weighted point clouds approximating nu (or nu_L) with excursion-level error bars."""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from src.model.random_stream import RandomStream

logger = logging.getLogger(__name__)

NORMALIZATION = "nuL_probability"


class CloudMeta(BaseModel):
    """Provenance of a cloud; written to the JSON sidecar."""

    kind: str = "nu"
    spec_hash: str = ""
    seed: int = 0
    m_excursions: int = 0
    n_max: int = 0
    truncated_fraction: float = 0.0
    nuL_truncated_fraction: float = 0.0
    points_beyond_cap: int = 0
    log_radius_cap: Optional[float] = None
    tol: Optional[float] = None


@dataclass
class PointCloudMeasure:
    """Points u_i with weights w_i; ``cluster_ids`` names the excursion of each point."""

    points: np.ndarray
    weights: np.ndarray
    cluster_ids: np.ndarray
    n_clusters: int
    meta: CloudMeta = field(default_factory=CloudMeta)
    normalization: str = NORMALIZATION

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim == 1:
            self.points = self.points[:, None]
        self.weights = np.asarray(self.weights, dtype=float)
        self.cluster_ids = np.asarray(self.cluster_ids, dtype=np.int64)
        n = self.points.shape[0]
        if self.weights.shape != (n,) or self.cluster_ids.shape != (n,):
            raise ValueError("points, weights and cluster_ids must have matching lengths")
        if n and (self.weights <= 0).any():
            raise ValueError("cloud weights must be positive")
        if n and (self.cluster_ids.min() < 0 or self.cluster_ids.max() >= self.n_clusters):
            raise ValueError("cluster ids out of range")

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def radii(self) -> np.ndarray:
        return np.linalg.norm(self.points, axis=1)

    def total_mass(self) -> float:
        return float(math.fsum(self.weights))

    def cluster_sums(self, values: np.ndarray) -> np.ndarray:
        """Per-excursion sums of w_i * values_i."""
        return np.bincount(self.cluster_ids, weights=self.weights * values, minlength=self.n_clusters)

    def with_points(self, points: np.ndarray) -> "PointCloudMeasure":
        return PointCloudMeasure(
            points=points,
            weights=self.weights,
            cluster_ids=self.cluster_ids,
            n_clusters=self.n_clusters,
            meta=self.meta,
            normalization=self.normalization,
        )


def cluster_stderr(sums: np.ndarray) -> float:
    """Standard error of sums.sum() when clusters are i.i.d."""
    m = sums.size
    if m < 2:
        return 0.0 if m == 1 and sums[0] == 0.0 else math.nan
    return float(math.sqrt(m * np.var(sums, ddof=1)))


def estimate_values(nu_hat: PointCloudMeasure, values: np.ndarray) -> Tuple[float, float]:
    """sum_i w_i values_i with the cluster standard error."""
    values = np.asarray(values, dtype=float)
    if nu_hat.n_points == 0:
        return 0.0, 0.0
    if not np.all(np.isfinite(values)):
        raise ValueError("test function is not finite on the cloud")
    sums = nu_hat.cluster_sums(values)
    return float(math.fsum(sums)), cluster_stderr(sums)


def integrate(nu_hat: PointCloudMeasure, phi: Callable[[np.ndarray], np.ndarray]) -> Tuple[float, float]:
    """nu_hat(phi) and its excursion-level standard error; phi maps (n, d) -> (n,)."""
    if nu_hat.n_points == 0:
        return 0.0, 0.0
    return estimate_values(nu_hat, phi(nu_hat.points))


def ratio_estimate(
    nu_hat: PointCloudMeasure, num_values: np.ndarray, den_values: np.ndarray
) -> Tuple[float, float]:
    """nu_hat(num)/nu_hat(den) with a delta-method cluster standard error."""
    num = nu_hat.cluster_sums(np.asarray(num_values, dtype=float))
    den = nu_hat.cluster_sums(np.asarray(den_values, dtype=float))
    total_den = math.fsum(den)
    if total_den <= 0.0:
        return math.nan, math.nan
    ratio = math.fsum(num) / total_den
    influence = (num - ratio * den) / total_den
    return ratio, cluster_stderr(influence)


def cluster_bootstrap(
    nu_hat: PointCloudMeasure, values: np.ndarray, n_boot: int, stream: RandomStream
) -> np.ndarray:
    """Bootstrap replicates of nu_hat(values), resampling whole excursions."""
    sums = nu_hat.cluster_sums(np.asarray(values, dtype=float))
    gen = stream.generator()
    m = sums.size
    replicates = np.empty(n_boot)
    for k in range(n_boot):
        counts = np.bincount(gen.integers(0, m, size=m), minlength=m)
        replicates[k] = counts @ sums
    return replicates


def bootstrap_ci(replicates: np.ndarray, level: float = 0.99) -> Tuple[float, float]:
    tail = 0.5 * (1.0 - level)
    lo, hi = np.quantile(replicates, [tail, 1.0 - tail])
    return float(lo), float(hi)
