"""Cross-check of the Monte Carlo tail constant against the potential-theory value.

T(Phi) is estimated twice: as the plateau of f_Phi at large x, and as
-2 K(psi_Phi) / sigma^2. Dividing the second by int Phi(a) da/a gives C_+.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import stats

from src.crossval.estimators import (
    GridPass,
    grid_pass,
    paired_draws,
    poisson_consistency,
    psi_via_r_convolution,
    trapezoid_weights,
)
from src.crossval.testfn import RadialTestFn, build_phi
from src.invariant.measure import PointCloudMeasure, cluster_stderr
from src.model.mu_spec import MuSpec
from src.model.random_stream import RandomStream
from src.potential.grid import GridFn, decay_fit, decay_tail_moment
from src.tail.annuli import TailReport
from src.utils.errors import ConfigError, InconsistentEstimates, NoPlateau

logger = logging.getLogger(__name__)

TAIL_START = 3.0
TAIL_UNCERTAINTY = 0.5
DRIFT_SIGMAS = 3.0
CI_LEVEL = 0.99


def _ci(value: float, stderr: float, level: float = CI_LEVEL) -> Tuple[float, float]:
    q = stats.norm.ppf(0.5 + 0.5 * level)
    return value - q * stderr, value + q * stderr


def _clean(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


@dataclass
class PlateauFit:
    """Weighted linear fit of f_phi on the window; ``mean`` is the fit at the weighted centre."""

    mean: float
    mean_stderr: float
    slope: float
    slope_stderr: float
    window: Tuple[float, float]

    @property
    def flat(self) -> bool:
        return abs(self.slope) <= DRIFT_SIGMAS * self.slope_stderr


def plateau_coefficients(x: np.ndarray, stderr: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Linear functionals giving the weighted mean and slope of values on x."""
    w = np.where(stderr > 0, 1.0 / np.maximum(stderr, 1e-300) ** 2, 0.0)
    if not np.any(w > 0) or not np.all(np.isfinite(w)):
        w = np.ones_like(x)
    w = w / w.sum()
    center = float(np.sum(w * x))
    spread = float(np.sum(w * (x - center) ** 2))
    return w, w * (x - center) / spread


def fit_plateau(
    nu_hat: PointCloudMeasure,
    phi: RadialTestFn,
    f_hat: GridFn,
    fraction: float,
    workers: int = 1,
) -> PlateauFit:
    """Fit the last ``fraction`` of the positive-x part of f_hat.

    The fit is linear in the grid values, so a second pass over the window
    accumulates it per excursion and gives exact cluster standard errors.
    """
    x = f_hat.x
    positive = np.flatnonzero(x > 0)
    n_win = max(3, int(math.ceil(fraction * positive.size)))
    if positive.size < 3:
        raise ConfigError("cross-validation grid needs at least three positive points")
    idx = positive[-n_win:]
    mean_c, slope_c = plateau_coefficients(x[idx], f_hat.stderr[idx])
    window = grid_pass(nu_hat, phi, x[idx], lin_f={"mean": mean_c, "slope": slope_c}, workers=workers)
    mean, mean_se = window.linear["mean"]
    slope, slope_se = window.linear["slope"]
    return PlateauFit(mean, mean_se, slope, slope_se, (float(x[idx[0]]), float(x[idx[-1]])))


def tail_moment(psi_hat: GridFn, model: str = "exp") -> Tuple[float, float]:
    """int_{|x| > X} x psi(x) dx from a decay fit on each side, and its uncertainty."""
    x = psi_hat.x
    values = np.asarray(psi_hat.values, dtype=float)
    total = 0.0
    for side in (1.0, -1.0):
        mask = side * x >= TAIL_START
        if mask.sum() < 3:
            continue
        xs, vs = np.abs(x[mask]), values[mask]
        try:
            C, rate = decay_fit(xs, vs, model)
        except ValueError:
            continue
        X = float(xs.max())
        # decay_tail_moment covers both tails of the envelope
        piece = 0.5 * decay_tail_moment(C, rate, X, model)
        if not math.isfinite(piece):
            logger.warning(f"psi_phi does not decay on the {'right' if side > 0 else 'left'} side")
            return 0.0, math.inf
        sign = math.copysign(1.0, float(np.sum(vs[np.argsort(xs)][-3:])))
        total += side * sign * piece
    return total, TAIL_UNCERTAINTY * abs(total)


def full_line_moment(
    nu_hat: PointCloudMeasure, draws, log_integral: float
) -> Tuple[float, float]:
    """K(psi_phi) = int Phi * int (log|au| - log|au + b|) nu(du) mu(db da) for radial phi."""
    diff = draws.s_a - draws.s_b
    diff = np.where(np.isfinite(diff), diff, 0.0)
    sums = nu_hat.cluster_sums(diff)
    return log_integral * math.fsum(sums), abs(log_integral) * cluster_stderr(sums)


@dataclass
class CrossvalReport:
    gamma: float
    sigma2: float
    log_integral: float
    log_integral_closed: float
    J_psi: float
    J_psi_stderr: float
    K_psi: float
    K_psi_stderr: float
    K_tail: float
    K_psi_full_line: float
    K_psi_full_line_stderr: float
    T_potential: float
    T_potential_stderr: float
    plateau: PlateauFit
    cplus_pot: float
    cplus_pot_stderr: float
    fubini: float
    fubini_stderr: float
    poisson_max_abs_z: float
    f_phi: GridFn
    psi_phi: GridFn
    poisson: GridFn
    cplus_mc: Optional[float] = None
    cplus_mc_stderr: Optional[float] = None
    convolution_max_abs_z: Optional[float] = None
    heuristic: bool = False
    rtol: float = 0.2
    notes: Dict[str, str] = field(default_factory=dict)

    @property
    def T_plateau(self) -> float:
        return self.plateau.mean

    @property
    def gap_T(self) -> float:
        """Relative gap between the plateau and -2 K / sigma^2."""
        return abs(self.T_plateau - self.T_potential) / abs(self.T_plateau)

    @property
    def gap_cplus(self) -> Optional[float]:
        if self.cplus_mc is None:
            return None
        return abs(self.cplus_pot - self.cplus_mc) / abs(self.cplus_mc)

    def to_dict(self) -> Dict:
        out = {
            "gamma": self.gamma,
            "sigma2": self.sigma2,
            "heuristic": self.heuristic,
            "log_integral": self.log_integral,
            "log_integral_closed": self.log_integral_closed,
            "J_psi": self.J_psi,
            "J_psi_stderr": self.J_psi_stderr,
            "K_psi": self.K_psi,
            "K_psi_stderr": self.K_psi_stderr,
            "K_tail": self.K_tail,
            "K_psi_full_line": self.K_psi_full_line,
            "K_psi_full_line_stderr": self.K_psi_full_line_stderr,
            "T_potential": self.T_potential,
            "T_potential_stderr": self.T_potential_stderr,
            "T_potential_ci99": list(_ci(self.T_potential, self.T_potential_stderr)),
            "T_plateau": self.T_plateau,
            "T_plateau_stderr": self.plateau.mean_stderr,
            "T_plateau_ci99": list(_ci(self.T_plateau, self.plateau.mean_stderr)),
            "plateau_slope": self.plateau.slope,
            "plateau_slope_stderr": self.plateau.slope_stderr,
            "plateau_window": list(self.plateau.window),
            "cplus_pot": self.cplus_pot,
            "cplus_pot_stderr": self.cplus_pot_stderr,
            "cplus_pot_ci99": list(_ci(self.cplus_pot, self.cplus_pot_stderr)),
            "cplus_mc": self.cplus_mc,
            "cplus_mc_stderr": self.cplus_mc_stderr,
            "gap_T": self.gap_T,
            "gap_cplus": self.gap_cplus,
            "fubini": self.fubini,
            "fubini_stderr": self.fubini_stderr,
            "poisson_max_abs_z": self.poisson_max_abs_z,
            "convolution_max_abs_z": self.convolution_max_abs_z,
            "rtol": self.rtol,
            "notes": self.notes,
        }
        return {
            k: [_clean(v) for v in value] if isinstance(value, list) else _clean(value)
            for k, value in out.items()
        }

    def raise_for_failure(self) -> None:
        if not self.plateau.flat:
            raise NoPlateau(
                f"f_phi drifts on [{self.plateau.window[0]:g}, {self.plateau.window[1]:g}]: "
                f"slope {self.plateau.slope:.3g} +/- {self.plateau.slope_stderr:.2g}"
            )
        if not self.gap_T <= self.rtol:
            raise InconsistentEstimates(
                f"plateau {self.T_plateau:.5g} vs -2K/sigma^2 {self.T_potential:.5g} "
                f"(relative gap {self.gap_T:.3f} > {self.rtol})"
            )
        gap = self.gap_cplus
        if gap is not None and not gap <= self.rtol:
            raise InconsistentEstimates(
                f"C_+ potential {self.cplus_pot:.5g} vs annuli {self.cplus_mc:.5g} "
                f"(relative gap {gap:.3f} > {self.rtol})"
            )


def cplus_crosscheck(
    spec: MuSpec,
    nu_hat: PointCloudMeasure,
    gamma: float,
    x_grid: np.ndarray,
    stream: RandomStream,
    c_plus_mc: Optional[TailReport] = None,
    rtol: float = 0.2,
    plateau_fraction: float = 0.4,
    decay_model: str = "exp",
    zeta0=None,
    check_convolution: bool = False,
    workers: int = 1,
) -> CrossvalReport:
    """Estimate T(Phi_gamma) both ways and C_+ = T / int Phi da/a; compare with the annuli."""
    if spec.lattice_span() > 0:
        raise ConfigError("the C_+ cross-check needs an aperiodic law of log A")
    x = np.asarray(x_grid, dtype=float)
    sigma2 = spec.sigma2()

    phi = build_phi(spec, gamma, zeta0)
    log_int = phi.log_integral()
    log_int_closed = phi.log_integral_closed()
    if abs(log_int - log_int_closed) > 1e-4 * log_int_closed:
        logger.warning(f"int Phi da/a: quadrature {log_int:.8g} vs closed form {log_int_closed:.8g}")

    draws = paired_draws(spec, nu_hat, phi, stream)
    w = trapezoid_weights(x)
    main: GridPass = grid_pass(
        nu_hat, phi, x, draws=draws, lin_psi={"J": w, "K": w * x}, fubini=True, workers=workers
    )
    plateau = fit_plateau(nu_hat, phi, main.f, plateau_fraction, workers)

    J, J_se = main.linear["J"]
    K_grid, K_grid_se = main.linear["K"]
    K_tail, K_tail_se = tail_moment(main.psi, decay_model)
    K = K_grid + K_tail
    K_se = math.hypot(K_grid_se, K_tail_se)
    T = -2.0 * K / sigma2
    T_se = 2.0 * K_se / sigma2
    K_full, K_full_se = full_line_moment(nu_hat, draws, log_int)

    poisson = poisson_consistency(spec, main.f, main.psi)
    finite_z = np.abs(poisson.values[np.isfinite(poisson.values)])

    conv_z = None
    if check_convolution:
        via_r = psi_via_r_convolution(spec, nu_hat, gamma, x, stream)
        se = np.hypot(main.psi.stderr, via_r.stderr)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.abs(main.psi.values - via_r.values) / se
        conv_z = float(np.nanmax(z))

    notes = {}
    heuristic = zeta0 is not None
    if heuristic:
        notes["zeta0"] = "angular factor present; T(phi) is not covered by the radial theory"
        logger.warning(notes["zeta0"])
    if J_se > 0 and abs(J) > DRIFT_SIGMAS * J_se and not heuristic:
        notes["J_psi"] = f"J(psi_phi) = {J:.3g} is {abs(J) / J_se:.1f} stderr from 0"
        logger.warning(notes["J_psi"])

    report = CrossvalReport(
        gamma=gamma,
        sigma2=sigma2,
        log_integral=log_int,
        log_integral_closed=log_int_closed,
        J_psi=J,
        J_psi_stderr=J_se,
        K_psi=K,
        K_psi_stderr=K_se,
        K_tail=K_tail,
        K_psi_full_line=K_full,
        K_psi_full_line_stderr=K_full_se,
        T_potential=T,
        T_potential_stderr=T_se,
        plateau=plateau,
        cplus_pot=T / log_int,
        cplus_pot_stderr=T_se / log_int,
        fubini=main.fubini[0],
        fubini_stderr=main.fubini[1],
        poisson_max_abs_z=float(finite_z.max()) if finite_z.size else math.nan,
        f_phi=main.f,
        psi_phi=main.psi,
        poisson=poisson,
        cplus_mc=c_plus_mc.c_plus if c_plus_mc is not None else None,
        cplus_mc_stderr=c_plus_mc.c_plus_stderr if c_plus_mc is not None else None,
        convolution_max_abs_z=conv_z,
        heuristic=heuristic,
        rtol=rtol,
        notes=notes,
    )
    logger.info(
        f"T plateau {report.T_plateau:.5g}, T potential {T:.5g}, "
        f"C_+ potential {report.cplus_pot:.5g}"
        + (f", C_+ annuli {report.cplus_mc:.5g}" if report.cplus_mc is not None else "")
    )
    return report
