"""Characteristic function of mu_bar and the kernel r(x) = E|Y - x| - |x|."""

import math
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from src.model.mu_spec import MuSpec
from src.utils.errors import QuadratureFailure


def char_fn(spec: MuSpec, theta) -> np.ndarray:
    """E[exp(i theta Y)] with Y = -log A."""
    return spec.char_fn(theta)


def r_fn(spec: MuSpec, x) -> np.ndarray:
    return spec.r(x)


def r_hat(spec: MuSpec, theta) -> np.ndarray:
    """Transform of r: 2 (1 - mu_hat(theta)) / theta^2, equal to sigma^2 at 0."""
    theta = np.asarray(theta, dtype=float)
    safe = np.where(theta == 0.0, 1.0, theta)
    value = 2.0 * spec.one_minus_char_fn(safe) / safe**2
    return np.where(theta == 0.0, spec.sigma2() + 0j, value)


def r_moments(spec: MuSpec):
    """(J(r), K(r)) = (sigma^2, E[Y^3] / 3)."""
    return spec.sigma2(), spec.a_law.y_third_moment() / 3.0


def fourier_transform(
    fn: Callable[[float], float],
    theta: float,
    support: Sequence[float],
    breakpoints: Sequence[float] = (),
    tol: float = 1e-12,
) -> complex:
    """int e^{i theta x} fn(x) dx over ``support`` by oscillatory-weight quadrature.

    The support is cut at the breakpoints (kinks of fn) and each piece is
    integrated with cos and sin weights.
    """
    lo, hi = support
    cuts = sorted({lo, hi, *(b for b in breakpoints if lo < b < hi)})
    real = imag = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b - a <= 0:
            continue
        re, re_err = integrate.quad(fn, a, b, weight="cos", wvar=theta, epsabs=tol, epsrel=tol, limit=200)
        im, im_err = integrate.quad(fn, a, b, weight="sin", wvar=theta, epsabs=tol, epsrel=tol, limit=200)
        if max(re_err, im_err) > 1e3 * tol:
            raise QuadratureFailure(f"transform at theta={theta} has error {max(re_err, im_err):.2e}")
        real += re
        imag += im
    return complex(real, imag)


def r_transform_numeric(spec: MuSpec, theta: float) -> complex:
    """Transform of r computed from r itself; the oracle for r_hat."""
    return fourier_transform(
        lambda x: float(spec.r(x)), theta, spec.a_law.r_support(), spec.a_law.r_kinks()
    )


def split_radius(spec: MuSpec, ratio: float = 1e-3) -> float:
    """Radius a below which the quartic term of 1 - mu_hat is < ratio of the quadratic."""
    sigma2 = spec.sigma2()
    m4 = spec.a_law.fourth_moment()
    if m4 <= 0:
        return 1.0
    return math.sqrt(ratio * 12.0 * sigma2 / m4)
