"""The recurrent potential A psi, solving mu_bar * f - f = psi.

Three routes:

* direct (aperiodic mu_bar): for J(psi) = 0,
  A psi(x) = -(1/2 pi) int e^{i theta x} psi_hat(-theta) / (1 - mu_hat(theta)) d theta.
  The 1/theta singularity -2iK/(sigma^2 theta) is removed with a Gaussian
  cutoff and inverted in closed form, -(K/sigma^2) erf(x/sqrt 2); the bounded
  remainder goes through oscillatory-weight quadrature. For J(psi) > 0,
  A psi = A(psi - J g) + J A g with g the standard Gaussian density, and A g is
  a convergent integral of (1 - e^{i theta x}) g_hat / (1 - mu_hat).
* lattice (span p): the lattice potential kernel
  a(k) = (1/2 pi) int_{-pi}^{pi} (1 - e^{-ik theta}) / (1 - mu_hat(theta/p)) d theta
  and A psi(x) = sum_k a(k) [psi(x + kp) - J g(kp)], g = r / sigma^2.
* richardson: A^lambda psi = c_lambda J - G^lambda * psi on lambda = 1 - 2^-k,
  extrapolated in t = sqrt(1 - lambda).
"""

import logging
import math
import warnings
from typing import Callable, NamedTuple, Optional, Tuple

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.laguerre import laggauss
from pydantic import BaseModel, ConfigDict, Field
from scipy import integrate
from scipy.integrate import IntegrationWarning
from scipy.special import erf

from src.model.laws import LognormalLaw, ShiftedExpLaw, _AtomicLaw
from src.model.mu_spec import MuSpec
from src.potential.fclass import FClassCert, certify_F
from src.potential.grid import GridFn
from src.potential.kernel import split_radius
from src.potential.psi import PsiFunction, gaussian, psi_r
from src.utils.errors import ConfigError, ExtrapolationDivergence, QuadratureFailure

logger = logging.getLogger(__name__)

GAUSS_CUTOFF = 12.0


class QuadParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    tol: float = Field(default=1e-6, gt=0.0)
    limit: int = Field(default=500, ge=50)
    method: str = "auto"
    richardson_k_min: int = 4
    richardson_k_max: int = 12
    richardson_window: int = 4


def _quad(fn: Callable[[float], float], a: float, b: float, tol: float, limit: int, **kwargs) -> float:
    """scipy quad with the error estimate checked against the budget."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        if math.isinf(b) and "weight" in kwargs:
            value, err = integrate.quad(fn, a, b, epsabs=tol, limlst=200, limit=limit, **kwargs)
        else:
            value, err = integrate.quad(fn, a, b, epsabs=tol, epsrel=tol, limit=limit, **kwargs)
    if not math.isfinite(value) or err > 100.0 * tol * max(1.0, abs(value)):
        raise QuadratureFailure(f"quadrature on [{a:.3g}, {b:.3g}] ended with error {err:.2e}")
    return value


# ---------------------------------------------------------------------------
# aperiodic, direct lambda = 1
# ---------------------------------------------------------------------------


def _remainder(spec: MuSpec, psi: PsiFunction, K: float) -> Callable[[float], complex]:
    """psi_hat(-theta)/(1 - mu_hat(theta)) minus its -2iK/(sigma^2 theta) e^{-theta^2/2} part."""
    sigma2 = spec.sigma2()

    def R(theta: float) -> complex:
        # Clenshaw-Curtis panels evaluate the endpoint theta = 0
        theta = max(theta, 1e-8)
        main = complex(psi.hat(-theta) / spec.one_minus_char_fn(theta))
        return main + 2j * K / (sigma2 * theta) * math.exp(-0.5 * theta * theta)

    return R


def _zero_frequency_tail(
    psi: PsiFunction, m: Callable[[float], complex], start: float, tol: float, limit: int
) -> float:
    """int_start^inf Re[psi_hat(-t) / (1 - m(t))] dt for a multiplier m that decays in t.

    The slowly decaying part int_start^inf Re psi_hat(-t) dt equals pi psi(0)
    minus the integral over [0, start]; only psi_hat m / (1 - m) is left to QAGI.
    """
    head = _quad(lambda t: complex(psi.hat(-t)).real, 0.0, start, tol, limit)

    def rest(t):
        mt = complex(m(t))
        return (complex(psi.hat(-t)) * mt / (1.0 - mt)).real

    return math.pi * float(psi(0.0)) - head + _quad(rest, start, math.inf, tol, limit)


def _direct_zero_mass(
    spec: MuSpec, psi: PsiFunction, K: float, x: np.ndarray, quad: QuadParams
) -> np.ndarray:
    R = _remainder(spec, psi, K)
    a = split_radius(spec)
    top = psi.theta_max if psi.theta_max is not None else math.inf
    tol, limit = quad.tol * 1e-2, quad.limit

    def mu_hat(t):
        return 1.0 - complex(spec.one_minus_char_fn(t))

    def re(t):
        return R(t).real

    def im(t):
        return R(t).imag

    out = np.empty(x.size)
    for i, xi in enumerate(x):
        if abs(xi) < 1e-12:
            cos_part = _quad(re, 0.0, a, tol, limit)
            if math.isinf(top):
                cos_part += _zero_frequency_tail(psi, mu_hat, a, tol, limit)
            else:
                cos_part += _quad(re, a, top, tol, limit)
            sin_part = 0.0
        else:
            cos_part = _quad(re, 0.0, a, tol, limit, weight="cos", wvar=xi)
            cos_part += _quad(re, a, top, tol, limit, weight="cos", wvar=xi)
            sin_part = _quad(im, 0.0, a, tol, limit, weight="sin", wvar=xi)
            sin_part += _quad(im, a, top, tol, limit, weight="sin", wvar=xi)
        out[i] = -(cos_part - sin_part) / math.pi
    return out - K / spec.sigma2() * erf(x / math.sqrt(2.0))


def _gaussian_potential(spec: MuSpec, x: np.ndarray, quad: QuadParams) -> np.ndarray:
    """A g for the standard Gaussian g, normalized by A g(0) = 0."""
    tol, limit = quad.tol * 1e-2, max(quad.limit, 2000)
    out = np.empty(x.size)
    for i, xi in enumerate(x):
        if xi == 0.0:
            out[i] = 0.0
            continue

        def f(t, xi=xi):
            t = max(t, 1e-8)
            d = complex(spec.one_minus_char_fn(t))
            p = 2.0 * math.sin(0.5 * t * xi) ** 2
            q = -math.sin(t * xi)
            return math.exp(-0.5 * t * t) * (p * d.real + q * d.imag) / abs(d) ** 2

        out[i] = _quad(f, 0.0, GAUSS_CUTOFF, tol, limit) / math.pi
    return out


def _direct(spec: MuSpec, cert: FClassCert, x: np.ndarray, quad: QuadParams) -> np.ndarray:
    psi, J = cert.psi, cert.J
    if abs(J) <= 1e-12:
        return _direct_zero_mass(spec, psi, cert.K, x, quad)
    residual_psi = psi.combine(1.0, gaussian(), -J)
    return _direct_zero_mass(spec, residual_psi, cert.K, x, quad) + J * _gaussian_potential(
        spec, x, quad
    )


# ---------------------------------------------------------------------------
# lattice
# ---------------------------------------------------------------------------


def lattice_kernel(spec: MuSpec, ks: np.ndarray, lam: float = 1.0, tol: float = 1e-12) -> np.ndarray:
    """a^lambda(k) = (1/pi) int_0^pi Re[(1 - e^{-ik theta}) / (1 - lambda phi(theta))] d theta."""
    p = spec.lattice_span()

    def denom(t: float) -> complex:
        d = complex(spec.one_minus_char_fn(t / p))
        return (1.0 - lam) + lam * d if lam < 1.0 else d

    out = np.empty(len(ks))
    for i, k in enumerate(ks):
        if k == 0:
            out[i] = 0.0
            continue

        def f(t, k=k):
            d = denom(max(t, 1e-8))
            re = 2.0 * math.sin(0.5 * k * t) ** 2
            im = math.sin(k * t)
            return (re * d.real + im * d.imag) / (d.real**2 + d.imag**2)

        out[i] = _quad(f, 0.0, math.pi, tol, 2000) / math.pi
    return out


def _lattice_terms(spec: MuSpec, cert: FClassCert, x: np.ndarray):
    """Index range k and the matrix psi(x + kp) - J g(kp)."""
    p = spec.lattice_span()
    lo, hi = cert.psi.support
    g_lo, g_hi = spec.a_law.r_support()
    k_min = int(math.floor(min((lo - x.max()) / p, g_lo / p))) - 1
    k_max = int(math.ceil(max((hi - x.min()) / p, g_hi / p))) + 1
    ks = np.arange(k_min, k_max + 1)
    g = reference_g(spec)(ks * p)
    terms = cert.psi(x[:, None] + ks[None, :] * p) - cert.J * g[None, :]
    return ks, terms


def _lattice(spec: MuSpec, cert: FClassCert, x: np.ndarray, lam: float = 1.0) -> np.ndarray:
    ks, terms = _lattice_terms(spec, cert, x)
    return terms @ lattice_kernel(spec, ks, lam)


# ---------------------------------------------------------------------------
# lambda < 1 and Richardson extrapolation
# ---------------------------------------------------------------------------


def potential_A_lambda(
    spec: MuSpec, cert: FClassCert, x: np.ndarray, lam: float, quad: QuadParams
) -> np.ndarray:
    """A^lambda psi(x) = c_lambda J - G^lambda * psi(x), c_lambda = G^lambda * g(0)."""
    x = np.asarray(x, dtype=float)
    if not 0.0 < lam < 1.0:
        raise ValueError("lambda must lie in (0, 1)")
    if spec.lattice_span() > 0:
        return _lattice(spec, cert, x, lam)

    psi, J = cert.psi, cert.J
    g = gaussian()
    width = math.sqrt(1.0 - lam)
    cut = min(GAUSS_CUTOFF, psi.theta_max or math.inf)
    points = [w for w in (width, 4.0 * width, 16.0 * width) if w < cut]
    tol, limit = quad.tol * 1e-2, max(quad.limit, 2000)

    def denom(t: float) -> complex:
        return (1.0 - lam) + lam * complex(spec.one_minus_char_fn(t))

    out = np.empty(x.size)
    for i, xi in enumerate(x):

        def head(t, xi=xi):
            num = J * g.hat(-t) - np.exp(1j * t * xi) * psi.hat(-t)
            return (complex(num) / denom(t)).real

        value = _quad(head, 0.0, cut, tol, limit, points=points)
        if psi.theta_max is None:
            # beyond the cutoff only the psi term is left

            def tail_re(t):
                return (complex(psi.hat(-t)) / denom(t)).real

            def tail_im(t):
                return (complex(psi.hat(-t)) / denom(t)).imag

            if abs(xi) < 1e-12:
                value -= _zero_frequency_tail(
                    psi, lambda t: lam * (1.0 - complex(spec.one_minus_char_fn(t))), cut, tol, limit
                )
            else:
                value -= _quad(tail_re, cut, math.inf, tol, limit, weight="cos", wvar=xi)
                value += _quad(tail_im, cut, math.inf, tol, limit, weight="sin", wvar=xi)
        out[i] = value / math.pi
    return out


def richardson_limit(step_ratio: float, values: np.ndarray) -> np.ndarray:
    """Neville-style Richardson tableau; rows of ``values`` go from coarse to fine."""
    level = np.asarray(values, dtype=float)
    for m in range(1, level.shape[0]):
        mult = step_ratio**m
        level = (mult * level[1:] - level[:-1]) / (mult - 1.0)
    return level[0]


def _richardson(
    spec: MuSpec, cert: FClassCert, x: np.ndarray, quad: QuadParams
) -> Tuple[np.ndarray, float, float]:
    ks = range(quad.richardson_k_min, quad.richardson_k_max + 1)
    values = np.array([potential_A_lambda(spec, cert, x, 1.0 - 2.0**-k, quad) for k in ks])
    w = quad.richardson_window
    if values.shape[0] < w + 1:
        raise ValueError("Richardson needs at least window + 1 lambda levels")

    ratio = math.sqrt(2.0)
    final = richardson_limit(ratio, values[-w:])
    previous = richardson_limit(ratio, values[-w - 1 : -1])
    change = float(np.max(np.abs(final - previous)))

    d1 = np.abs(values[-2] - values[-3])
    d2 = np.abs(values[-1] - values[-2])
    usable = (d1 > 0) & (d2 > 0)
    order = float(np.median(np.log(d1[usable] / d2[usable]) / math.log(ratio))) if usable.any() else math.nan

    scale = max(1.0, float(np.max(np.abs(final))))
    if change > 1e-2 * scale:
        raise ExtrapolationDivergence(
            f"Richardson estimates moved by {change:.3e} between the last two windows"
        )
    logger.info(f"lambda extrapolation: empirical order {order:.2f}, last change {change:.2e}")
    return final, order, change


# ---------------------------------------------------------------------------
# public entry points
# ---------------------------------------------------------------------------


def resolve_method(spec: MuSpec, method: str) -> str:
    if method == "auto":
        return "lattice" if spec.lattice_span() > 0 else "direct"
    if method not in ("direct", "lattice", "richardson"):
        raise ConfigError(f"unknown potential method '{method}'")
    if method == "lattice" and spec.lattice_span() == 0:
        raise ConfigError("lattice method requested for an aperiodic law")
    if method == "direct" and spec.lattice_span() > 0:
        raise ConfigError("direct Fourier inversion does not apply to a lattice law")
    return method


def potential_A(
    spec: MuSpec,
    psi: PsiFunction,
    x_grid: np.ndarray,
    quad: Optional[QuadParams] = None,
    cert: Optional[FClassCert] = None,
) -> GridFn:
    """A psi on x_grid (uniform), tagged with J, K, sigma^2 and the quadrature settings."""
    quad = quad or QuadParams()
    cert = cert or certify_F(spec, psi, quad.tol)
    x = np.asarray(x_grid, dtype=float)
    method = resolve_method(spec, quad.method)

    tags = {
        "psi": psi.name,
        "J": cert.J,
        "K": cert.K,
        "sigma2": spec.sigma2(),
        "lattice_span": spec.lattice_span(),
        "tol": quad.tol,
        "method": method,
    }
    logger.info(f"computing A psi for '{psi.name}' on {x.size} points ({method})")
    if method == "direct":
        values = _direct(spec, cert, x, quad)
    elif method == "lattice":
        values = _lattice(spec, cert, x)
    else:
        values, order, change = _richardson(spec, cert, x, quad)
        tags.update({"richardson_order": order, "richardson_change": change})
    return GridFn.from_samples(x, values, tags=tags)


# ---------------------------------------------------------------------------
# checks on a computed potential
# ---------------------------------------------------------------------------


def mu_bar_nodes(spec: MuSpec, n: int = 80) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights with E f(Y) ~ sum w_i f(y_i): exact for atoms, Gauss rules otherwise."""
    law = spec.a_law
    if isinstance(law, _AtomicLaw):
        return law.support_atoms()
    if isinstance(law, LognormalLaw):
        t, w = hermgauss(n)
        keep = w > 1e-16 * w.max()
        return math.sqrt(2.0) * law.s * t[keep], w[keep] / math.sqrt(math.pi)
    if isinstance(law, ShiftedExpLaw):
        t, w = laggauss(n)
        keep = w > 1e-16 * w.max()
        return law.s * (1.0 - t[keep]), w[keep]
    y = -math.log(law.value)
    return np.array([y]), np.array([1.0])


def convolve_mu_bar(spec: MuSpec, f: GridFn, n_nodes: int = 80) -> GridFn:
    """x -> E f(x + Y) on the grid; NaN where x + Y leaves the grid for some node."""
    y, w = mu_bar_nodes(spec, n_nodes)
    x = f.x
    shifted = x[:, None] + y[None, :]
    inside = np.all((shifted >= x[0] - 1e-9) & (shifted <= x[-1] + 1e-9), axis=1)
    values = f.interpolate(np.clip(shifted, x[0], x[-1]).ravel()).reshape(shifted.shape) @ w
    return f.with_values(np.where(inside, values, np.nan))


def poisson_residual(spec: MuSpec, A_psi: GridFn, psi: PsiFunction) -> Tuple[float, GridFn]:
    """sup |mu_bar * A psi - A psi - psi| over the grid interior, and the residual itself."""
    conv = convolve_mu_bar(spec, A_psi)
    residual = conv.values - A_psi.values - psi(A_psi.x)
    finite = np.isfinite(residual)
    sup = float(np.max(np.abs(residual[finite]))) if finite.any() else math.nan
    return sup, A_psi.with_values(residual)


class Decomposition(NamedTuple):
    C1: float
    C2: float
    residual: float


def solution_decomposition(f: GridFn, A_psi: GridFn, J: float, lattice_p: float = 0.0) -> Decomposition:
    """Least-squares f - A psi = C1 J x + C2; on a lattice only points of p Z are used."""
    x = A_psi.x
    h = np.asarray(f.values, dtype=float) - np.asarray(A_psi.values, dtype=float)
    mask = np.isfinite(h)
    if lattice_p > 0:
        on_lattice = np.abs(x / lattice_p - np.round(x / lattice_p)) < 1e-9
        if on_lattice.any():
            mask &= on_lattice
    xs, hs = x[mask], h[mask]

    if abs(J) > 1e-12:
        design = np.column_stack([J * xs, np.ones_like(xs)])
        (c1, c2), *_ = np.linalg.lstsq(design, hs, rcond=None)
        fit = c1 * J * xs + c2
    else:
        c1, c2 = 0.0, float(np.mean(hs))
        fit = np.full_like(hs, c2)
    residual = float(np.max(np.abs(hs - fit))) if hs.size else math.nan
    return Decomposition(float(c1), float(c2), residual)


def reference_g(spec: MuSpec) -> PsiFunction:
    """The positive J = 1 function defining c_lambda: r / sigma^2 on a lattice, Gaussian otherwise."""
    if spec.lattice_span() > 0:
        r = psi_r(spec)
        s2 = spec.sigma2()
        return PsiFunction(
            name="r/sigma2",
            value=lambda x: spec.r(x) / s2,
            transform=lambda t: r.hat(t) / s2,
            J=1.0,
            K=r.K / s2,
            support=r.support,
            kinks=r.kinks,
        )
    return gaussian()
