"""Inequality and slow-variation diagnostics for the invariant measure."""

import logging
import math
from typing import Dict, Iterable, List, Optional

import numpy as np
import pandas as pd

from src.invariant.measure import PointCloudMeasure, estimate_values
from src.model.mu_spec import MuSpec
from src.tail.annuli import annulus_mass
from src.utils.errors import ConfigNotCoveredByG

logger = logging.getLogger(__name__)

SLOW_VARIATION_FROM = math.exp(4.0)


def nu_leb_check(nu_hat: PointCloudMeasure, M: float) -> Dict[str, float]:
    """Upper bound for f(a) = a^{-1/2}: int_{|u|>=M} f(|u|) nu <= C_1 int_{M/e}^inf f(a) da/a.

    C_1 is the largest mass of the annuli (M e^k, M e^{k+1}] present in the cloud,
    so the annulus bound l is constant and the right side equals 2 C_1 (M/e)^{-1/2}.
    """
    radii = nu_hat.radii()
    top = max(float(radii.max()) if radii.size else M, M)
    n_annuli = max(1, int(math.ceil(math.log(top / M))) + 1)
    c1 = max(annulus_mass(nu_hat, M * math.exp(k), M * math.exp(k + 1))[0] for k in range(n_annuli))

    with np.errstate(divide="ignore"):
        values = np.where(radii >= M, radii ** -0.5, 0.0)
    lhs, lhs_se = estimate_values(nu_hat, values)
    rhs = c1 * 2.0 * (M / math.e) ** -0.5
    return {"nu_leb_lhs": lhs, "nu_leb_lhs_stderr": lhs_se, "nu_leb_c1": c1, "nu_leb_rhs": rhs}


def bound_diagnostics(
    nu_hat: PointCloudMeasure,
    z_grid: Iterable[float],
    spec: Optional[MuSpec] = None,
    require_half_space: bool = True,
) -> Dict[str, float]:
    """Log-growth bound, positivity and slow-variation ratios over the z grid."""
    if require_half_space and spec is not None and spec.dim > 1 and not spec.positive_half_space():
        raise ConfigNotCoveredByG(
            "half-space diagnostics need B with nonnegative coordinates and B_1 > 0"
        )
    z_grid = list(z_grid)
    radii = nu_hat.radii()

    log_ratios: List[float] = []
    for z in z_grid:
        inside, _ = estimate_values(nu_hat, (radii < z).astype(float))
        log_ratios.append(inside / (2.0 + math.log(z)))

    masses = []
    lower = []
    for z in z_grid:
        mass, se, _ = annulus_mass(nu_hat, z, math.e * z)
        masses.append(mass)
        lower.append(mass - 3.0 * se)

    def L(z: float) -> float:
        return annulus_mass(nu_hat, z, math.e * z)[0]

    up, down = [], []
    for z in z_grid:
        if z < SLOW_VARIATION_FROM:
            continue
        base = L(z)
        if base > 0:
            up.append(L(2.0 * z) / base)
            down.append(L(0.5 * z) / base)

    checks = {
        "log_bound_sup": max(log_ratios),
        "log_bound_min": min(log_ratios),
        "log_bound_spread": max(log_ratios) / min(log_ratios) if min(log_ratios) > 0 else math.inf,
        "annulus_min_mass": min(masses),
        "positivity_min_lower": min(lower),
        "sv_ratio_2_min": min(up) if up else math.nan,
        "sv_ratio_2_max": max(up) if up else math.nan,
        "sv_ratio_half_min": min(down) if down else math.nan,
        "sv_ratio_half_max": max(down) if down else math.nan,
    }
    checks.update(nu_leb_check(nu_hat, z_grid[0]))
    if checks["positivity_min_lower"] <= 0:
        logger.warning("an annulus mass is not positive at 3 standard errors")
    return checks


def bounds_to_frame(checks: Dict[str, float]) -> pd.DataFrame:
    return pd.DataFrame({"name": list(checks), "value": list(checks.values())})
