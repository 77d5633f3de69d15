"""Numerical membership certificate for the class F(mu_bar)."""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate

from src.model.mu_spec import MuSpec
from src.potential.kernel import split_radius
from src.potential.psi import PsiFunction
from src.utils.errors import LatticeZeroMismatch, NotInClass

logger = logging.getLogger(__name__)

LATTICE_ZERO_TOL = 1e-12
MOMENT_STEP = 1e-4
CUTOFFS = (50.0, 100.0, 200.0, 400.0)


@dataclass
class FClassCert:
    psi: PsiFunction
    J: float
    K: float
    split: float
    off_origin_bound: float
    tail_bound: float
    theta_max: float
    lattice_span: float = 0.0

    @property
    def lattice(self) -> bool:
        return self.lattice_span > 0.0

    def to_dict(self):
        return {
            "psi": self.psi.name,
            "J": self.J,
            "K": self.K,
            "split": self.split,
            "off_origin_bound": self.off_origin_bound,
            "tail_bound": self.tail_bound,
            "theta_max": self.theta_max,
            "lattice_span": self.lattice_span,
        }


def _ratio_modulus(spec: MuSpec, psi: PsiFunction):
    def f(theta: float) -> float:
        denom = spec.one_minus_char_fn(theta)
        return float(abs(psi.hat(-theta)) / abs(denom))

    return f


def extract_moments(psi: PsiFunction, h: float = MOMENT_STEP):
    """J and K from psi_hat = J + i theta K + O(theta^2), by central differences."""
    J = float(np.real(psi.hat(0.0)))
    K = float((np.imag(psi.hat(h)) - np.imag(psi.hat(-h))) / (2.0 * h))
    return J, K


def certify_F(spec: MuSpec, psi: PsiFunction, tol: float = 1e-6) -> FClassCert:
    """Check psi against F(mu_bar): moments at 0 and integrability of psi_hat/(1 - mu_hat) off 0."""
    J, K = extract_moments(psi)
    if abs(J - psi.J) > 1e-6 * max(1.0, abs(psi.J)) or abs(K - psi.K) > 1e-4 * max(1.0, abs(psi.K)):
        raise NotInClass(
            f"psi '{psi.name}': declared (J, K) = ({psi.J:.6g}, {psi.K:.6g}) "
            f"but the transform gives ({J:.6g}, {K:.6g})"
        )
    a = split_radius(spec)
    f = _ratio_modulus(spec, psi)
    p = spec.lattice_span()

    if p > 0:
        for k in range(1, 4):
            zero = 2.0 * math.pi * k / p
            value = max(abs(psi.hat(zero)), abs(psi.hat(-zero)))
            if value > LATTICE_ZERO_TOL * max(1.0, abs(J)):
                raise LatticeZeroMismatch(
                    f"psi_hat({zero:.6g}) = {value:.3e} but 1 - mu_hat vanishes there"
                )
        cell = math.pi / p
        bound = 0.0
        for lo, hi in ((-cell, -a), (a, cell)):
            value, _ = integrate.quad(f, lo, hi, limit=200)
            bound += value
        cert = FClassCert(psi, J, K, a, bound, 0.0, cell, p)
        logger.info(f"psi '{psi.name}' certified on the period cell: J={J:.6g} K={K:.6g}")
        return cert

    cutoffs = [c for c in CUTOFFS if psi.theta_max is None or c < psi.theta_max]
    if psi.theta_max is not None:
        cutoffs.append(psi.theta_max)
    partial = []
    lo = a
    total = 0.0
    for hi in cutoffs:
        pos, _ = integrate.quad(f, lo, hi, limit=500)
        neg, _ = integrate.quad(f, -hi, -lo, limit=500)
        total += pos + neg
        partial.append(total)
        lo = hi
    if not all(math.isfinite(v) for v in partial):
        raise NotInClass(f"psi_hat/(1 - mu_hat) is not integrable for psi '{psi.name}'")

    tail = _tail_bound(partial, tol, psi.theta_max is not None)
    if tail is None:
        raise NotInClass(
            f"psi_hat/(1 - mu_hat) does not decay for psi '{psi.name}': "
            f"partial integrals {[round(v, 6) for v in partial]}"
        )
    logger.info(
        f"psi '{psi.name}' certified: J={J:.6g} K={K:.6g} split={a:.3g} "
        f"bound={total:.4g} (+{tail:.2g})"
    )
    return FClassCert(psi, J, K, a, total, tail, cutoffs[-1], 0.0)


def _tail_bound(partial, tol: float, band_limited: bool) -> Optional[float]:
    """Geometric extrapolation of the remaining integral; None when it does not shrink."""
    if band_limited or len(partial) < 3:
        return 0.0
    last = partial[-1] - partial[-2]
    prev = partial[-2] - partial[-3]
    if last <= tol:
        return max(last, 0.0)
    ratio = last / prev if prev > 0 else math.inf
    if ratio >= 0.75:
        return None
    return last * ratio / (1.0 - ratio)
