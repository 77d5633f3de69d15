"""Dilations of the cloud, annulus masses and the tail constant C_+."""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from src.invariant.measure import PointCloudMeasure, estimate_values, integrate, ratio_estimate
from src.utils.errors import InsufficientSupport

logger = logging.getLogger(__name__)

MIN_HITS = 100


def dilation(
    nu_hat: PointCloudMeasure, z: float, phi: Callable[[np.ndarray], np.ndarray]
) -> Tuple[float, float]:
    """Integral of u -> phi(u / z) against the cloud."""
    if z <= 0:
        raise ValueError("dilation factor must be positive")
    return integrate(nu_hat, lambda u: phi(u / z))


def annulus_indicator(radii: np.ndarray, lo: float, hi: float) -> np.ndarray:
    return ((radii > lo) & (radii <= hi)).astype(float)


def annulus_mass(nu_hat: PointCloudMeasure, lo: float, hi: float) -> Tuple[float, float, int]:
    """(mass, stderr, distinct excursions) of {lo < |u| <= hi}."""
    radii = nu_hat.radii()
    values = annulus_indicator(radii, lo, hi)
    mass, stderr = estimate_values(nu_hat, values)
    hits = int(np.unique(nu_hat.cluster_ids[values > 0]).size)
    return mass, stderr, hits


def annulus_table(
    nu_hat: PointCloudMeasure, z_grid: Iterable[float], alpha: float = 1.0, beta: float = math.e
) -> pd.DataFrame:
    rows = []
    for z in z_grid:
        mass, stderr, hits = annulus_mass(nu_hat, alpha * z, beta * z)
        rows.append(
            {"z": z, "alpha": alpha, "beta": beta, "mass": mass, "stderr": stderr, "n_excursions": hits}
        )
    return pd.DataFrame(rows, columns=["z", "alpha", "beta", "mass", "stderr", "n_excursions"])


def flatness_test(values: np.ndarray, stderrs: np.ndarray) -> Tuple[float, float, float, float]:
    """Inverse-variance mean of ``values`` and the chi-square test that all equal it.

    Returns (mean, stderr of mean, chi2, p-value).
    """
    values = np.asarray(values, dtype=float)
    stderrs = np.asarray(stderrs, dtype=float)
    w = 1.0 / stderrs**2
    mean = float(np.sum(w * values) / np.sum(w))
    mean_se = float(1.0 / math.sqrt(np.sum(w)))
    chi2 = float(np.sum(w * (values - mean) ** 2))
    dof = values.size - 1
    pvalue = float(stats.chi2.sf(chi2, dof)) if dof > 0 else 1.0
    return mean, mean_se, chi2, pvalue


@dataclass
class TailReport:
    annulus_table: pd.DataFrame
    c_plus: float
    c_plus_stderr: float
    chi2: float
    chi2_pvalue: float
    lattice_span: float = 0.0
    sigma_hist: Optional[pd.DataFrame] = None
    bound_checks: Dict[str, float] = field(default_factory=dict)

    def c_plus_ci(self, level: float = 0.99) -> Tuple[float, float]:
        q = stats.norm.ppf(0.5 + 0.5 * level)
        return self.c_plus - q * self.c_plus_stderr, self.c_plus + q * self.c_plus_stderr

    def to_dict(self) -> Dict:
        lo, hi = self.c_plus_ci()
        return {
            "c_plus": self.c_plus,
            "c_plus_stderr": self.c_plus_stderr,
            "c_plus_ci99": [lo, hi],
            "chi2": self.chi2,
            "chi2_pvalue": self.chi2_pvalue,
            "lattice_span": self.lattice_span,
            "n_annuli_used": int(self.annulus_table["reliable"].sum()),
            "bound_checks": self.bound_checks,
        }


def estimate_Cplus(
    nu_hat: PointCloudMeasure,
    z_grid: Iterable[float],
    lattice_p: float = 0.0,
    min_hits: int = MIN_HITS,
) -> TailReport:
    """C_+ from annuli z < |u| <= e z (aperiodic) or z < |u| <= e^p z, divided by p (lattice)."""
    log_width = lattice_p if lattice_p > 0 else 1.0
    table = annulus_table(nu_hat, z_grid, 1.0, math.exp(log_width))
    table["reliable"] = (table["n_excursions"] >= min_hits) & (table["stderr"] > 0)

    dropped = table.loc[~table["reliable"], "z"].tolist()
    if dropped:
        logger.warning(f"dropping {len(dropped)} annuli with < {min_hits} contributing excursions")
    used = table[table["reliable"]]
    if used.empty:
        raise InsufficientSupport(
            f"no annulus in the z grid has {min_hits} contributing excursions"
        )

    c_plus, c_se, chi2, pvalue = flatness_test(
        used["mass"].to_numpy() / log_width, used["stderr"].to_numpy() / log_width
    )
    logger.info(f"C_+ = {c_plus:.5g} +/- {c_se:.2g} from {len(used)} annuli (chi2 p={pvalue:.3g})")
    return TailReport(
        annulus_table=table,
        c_plus=c_plus,
        c_plus_stderr=c_se,
        chi2=chi2,
        chi2_pvalue=pvalue,
        lattice_span=lattice_p,
    )


def lattice_ratio(nu_hat: PointCloudMeasure, z: float, p: float, n: int = 2) -> Tuple[float, float]:
    """mass(z < |u| <= e^{np} z) / mass(z < |u| <= e^p z); equals n in the limit."""
    radii = nu_hat.radii()
    num = annulus_indicator(radii, z, math.exp(n * p) * z)
    den = annulus_indicator(radii, z, math.exp(p) * z)
    return ratio_estimate(nu_hat, num, den)
