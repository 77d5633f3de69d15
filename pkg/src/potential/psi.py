"""Right-hand sides psi of the Poisson equation, each with its transform and moments."""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.stats import norm

from src.model.mu_spec import MuSpec
from src.potential.grid import GridFn, grid_transform
from src.potential.kernel import r_hat, r_moments
from src.utils.errors import ConfigError


@dataclass
class PsiFunction:
    """psi with psi_hat(theta) = int e^{i theta x} psi(x) dx, J = int psi, K = int x psi."""

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    transform: Callable[[np.ndarray], np.ndarray]
    J: float
    K: float
    support: Tuple[float, float]
    theta_max: Optional[float] = None
    kinks: List[float] = field(default_factory=list)

    def __call__(self, x) -> np.ndarray:
        return self.value(np.asarray(x, dtype=float))

    def hat(self, theta) -> np.ndarray:
        return self.transform(np.asarray(theta, dtype=float))

    def combine(self, alpha: float, other: "PsiFunction", beta: float) -> "PsiFunction":
        """alpha * self + beta * other."""
        lo = min(self.support[0], other.support[0])
        hi = max(self.support[1], other.support[1])
        caps = [t for t in (self.theta_max, other.theta_max) if t is not None]
        return PsiFunction(
            name=f"{alpha:g}*{self.name}+{beta:g}*{other.name}",
            value=lambda x: alpha * self.value(x) + beta * other.value(x),
            transform=lambda t: alpha * self.transform(t) + beta * other.transform(t),
            J=alpha * self.J + beta * other.J,
            K=alpha * self.K + beta * other.K,
            support=(lo, hi),
            theta_max=min(caps) if caps else None,
            kinks=sorted({*self.kinks, *other.kinks}),
        )


def psi_r(spec: MuSpec) -> PsiFunction:
    J, K = r_moments(spec)
    return PsiFunction(
        name="r",
        value=spec.r,
        transform=lambda t: r_hat(spec, t),
        J=J,
        K=K,
        support=spec.a_law.r_support(),
        kinks=list(spec.a_law.r_kinks()),
    )


def _one_minus_phase(u: np.ndarray) -> np.ndarray:
    """1 - e^{iu} without cancellation near u = 0."""
    return 2.0 * np.sin(0.5 * u) ** 2 - 1j * np.sin(u)


def psi_rshift(spec: MuSpec, c: float) -> PsiFunction:
    """r(x) - r(x - c): J = 0, K = -c sigma^2."""
    J, K = r_moments(spec)
    lo, hi = spec.a_law.r_support()
    kinks = list(spec.a_law.r_kinks())
    return PsiFunction(
        name=f"rshift:{c:g}",
        value=lambda x: spec.r(x) - spec.r(x - c),
        transform=lambda t: r_hat(spec, t) * _one_minus_phase(c * np.asarray(t, dtype=float)),
        J=0.0,
        K=-c * J,
        support=(min(lo, lo + c), max(hi, hi + c)),
        kinks=sorted({*kinks, *(k + c for k in kinks)}),
    )


def gaussian(mean: float = 0.0, scale: float = 1.0) -> PsiFunction:
    return PsiFunction(
        name="gaussian",
        value=lambda x: norm.pdf(x, loc=mean, scale=scale),
        transform=lambda t: np.exp(1j * mean * t - 0.5 * (scale * t) ** 2),
        J=1.0,
        K=mean,
        support=(mean - 40.0 * scale, mean + 40.0 * scale),
    )


def psi_from_grid(grid: GridFn) -> PsiFunction:
    """Tabulated psi (zero off the grid); the transform is the trapezoid sum."""
    x = grid.x
    real = grid.with_values(np.real(grid.values).astype(float))
    return PsiFunction(
        name=str(grid.tags.get("name", "file")),
        value=lambda q: real.interpolate(q),
        transform=lambda t: grid_transform(real, t).reshape(np.shape(t)),
        J=real.trapezoid(),
        K=real.first_moment(),
        support=(float(x[0]), float(x[-1])),
        theta_max=math.pi / grid.dx,
    )


def parse_psi(text: str, spec: MuSpec) -> PsiFunction:
    """'r', 'rshift:c', 'gaussian' or a path to a GridFn CSV."""
    text = text.strip()
    if text == "r":
        return psi_r(spec)
    if text.startswith("rshift:"):
        try:
            c = float(text.split(":", 1)[1])
        except ValueError as e:
            raise ConfigError(f"bad shift in psi '{text}'") from e
        return psi_rshift(spec, c)
    if text == "gaussian":
        return gaussian()
    path = Path(text[5:] if text.startswith("file:") else text)
    if not path.exists():
        raise ConfigError(f"psi '{text}' is neither a known form nor an existing file")
    return psi_from_grid(GridFn.read_csv(path))
