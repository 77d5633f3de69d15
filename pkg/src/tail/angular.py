"""Histogram estimate of the angular measure Sigma on the unit sphere."""

import logging
import math

import numpy as np
import pandas as pd

from src.invariant.measure import PointCloudMeasure, ratio_estimate
from src.utils.errors import InsufficientSupport

logger = logging.getLogger(__name__)

MIN_POINTS = 100


def _bin_layout(points: np.ndarray, n_bins: int):
    """Bin index per point and the bin centers on the sphere."""
    d = points.shape[1]
    if d == 1:
        idx = (points[:, 0] > 0).astype(int)
        centers = np.array([[-1.0], [1.0]])
    elif d == 2:
        angle = np.arctan2(points[:, 1], points[:, 0])
        width = 2.0 * math.pi / n_bins
        idx = np.minimum(((angle + math.pi) / width).astype(int), n_bins - 1)
        mid = -math.pi + width * (np.arange(n_bins) + 0.5)
        centers = np.column_stack([np.cos(mid), np.sin(mid)])
    else:
        # orthants, coded by the sign bits of the coordinates
        bits = (points > 0).astype(int)
        idx = bits @ (1 << np.arange(d))
        codes = np.arange(1 << d)
        signs = np.where((codes[:, None] >> np.arange(d)) & 1, 1.0, -1.0)
        centers = signs / math.sqrt(d)
    return idx, centers


def angular_measure(nu_hat: PointCloudMeasure, z_min: float, n_bins: int = 64) -> pd.DataFrame:
    """Normalized histogram of u/|u| over points with |u| > z_min.

    d = 1 always uses the two points of S^0, d = 2 uses ``n_bins`` equal arcs and
    d >= 3 uses orthants.
    """
    radii = nu_hat.radii()
    far = radii > z_min
    if np.count_nonzero(far) < MIN_POINTS:
        raise InsufficientSupport(
            f"only {np.count_nonzero(far)} points beyond |u| = {z_min:.4g}, need {MIN_POINTS}"
        )

    idx, centers = _bin_layout(nu_hat.points, n_bins)
    denom = far.astype(float)
    rows = []
    for k, center in enumerate(centers):
        weight, stderr = ratio_estimate(nu_hat, (far & (idx == k)).astype(float), denom)
        row = {f"bin_center_{i + 1}": c for i, c in enumerate(center)}
        row.update({"bin": k, "weight": weight, "stderr": stderr})
        rows.append(row)
    hist = pd.DataFrame(rows)
    logger.info(f"angular measure over {int(far.sum())} points beyond {z_min:.4g}, {len(hist)} bins")
    return hist
