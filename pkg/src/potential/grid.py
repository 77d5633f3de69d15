"""Functions tabulated on a uniform 1-D grid, with CSV + JSON-header persistence."""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import integrate, optimize
from scipy.interpolate import CubicSpline

logger = logging.getLogger(__name__)


@dataclass
class GridFn:
    """values[i] = f(x0 + i dx); ``stderr`` is set for Monte Carlo estimates."""

    x0: float
    dx: float
    values: np.ndarray
    stderr: Optional[np.ndarray] = None
    tags: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.dx <= 0:
            raise ValueError("grid spacing must be positive")
        self.values = np.asarray(self.values)
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float)

    @classmethod
    def from_samples(cls, x: np.ndarray, values: np.ndarray, **kwargs) -> "GridFn":
        x = np.asarray(x, dtype=float)
        dx = float(x[1] - x[0]) if x.size > 1 else 1.0
        if x.size > 2 and not np.allclose(np.diff(x), dx, rtol=1e-9, atol=1e-12):
            raise ValueError("grid is not uniform")
        return cls(float(x[0]), dx, values, **kwargs)

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.values.size)

    def __len__(self) -> int:
        return self.values.size

    def trapezoid(self) -> float:
        """J: the integral of the tabulated function."""
        return float(integrate.trapezoid(self.values, dx=self.dx))

    def first_moment(self) -> float:
        """K: the integral of x times the function."""
        return float(integrate.trapezoid(self.x * self.values, dx=self.dx))

    def interpolate(self, xq, outside: float = 0.0) -> np.ndarray:
        """Cubic-spline value at xq; ``outside`` beyond the grid."""
        xq = np.asarray(xq, dtype=float)
        x = self.x
        spline = CubicSpline(x, self.values)
        inside = (xq >= x[0]) & (xq <= x[-1])
        return np.where(inside, spline(np.clip(xq, x[0], x[-1])), outside)

    def with_values(self, values: np.ndarray, **tags) -> "GridFn":
        return GridFn(self.x0, self.dx, values, tags={**self.tags, **tags})

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"x": self.x})
        if np.iscomplexobj(self.values):
            frame["value_re"] = self.values.real
            frame["value_im"] = self.values.imag
        else:
            frame["value"] = self.values
        if self.stderr is not None:
            frame["stderr"] = self.stderr
        return frame

    def write_csv(self, path: Path) -> Path:
        """CSV (x, value[, stderr]) preceded by one '# {json}' header line."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = {"x0": self.x0, "dx": self.dx, "n": len(self), **_jsonable(self.tags)}
        with open(path, "w", newline="") as f:
            f.write("# " + json.dumps(header, sort_keys=True) + "\n")
            self.to_frame().to_csv(f, index=False)
        return path

    @classmethod
    def read_csv(cls, path: Path) -> "GridFn":
        path = Path(path)
        with open(path) as f:
            first = f.readline()
        tags: Dict[str, Any] = {}
        if first.startswith("#"):
            tags = json.loads(first[1:])
            frame = pd.read_csv(path, skiprows=1)
        else:
            frame = pd.read_csv(path)
        for key in ("x0", "dx", "n"):
            tags.pop(key, None)
        if "value" in frame:
            values = frame["value"].to_numpy()
        else:
            values = frame["value_re"].to_numpy() + 1j * frame["value_im"].to_numpy()
        stderr = frame["stderr"].to_numpy() if "stderr" in frame else None
        return cls.from_samples(frame["x"].to_numpy(), values, stderr=stderr, tags=tags)


def _jsonable(tags: Dict[str, Any]) -> Dict[str, Any]:
    out = {}
    for key, value in tags.items():
        if isinstance(value, (np.floating, np.integer)):
            value = value.item()
        if isinstance(value, float) and not math.isfinite(value):
            value = str(value)
        out[key] = value
    return out


def symmetric_grid(xmax: float, dx: float) -> np.ndarray:
    """Uniform grid on [-xmax, xmax] through 0."""
    n = int(round(xmax / dx))
    return dx * np.arange(-n, n + 1)


def grid_transform(psi: GridFn, theta) -> np.ndarray:
    """Trapezoid Fourier transform sum_i w_i e^{i theta x_i} psi(x_i)."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    x = psi.x
    w = np.full(x.size, psi.dx)
    w[[0, -1]] *= 0.5
    phase = np.exp(1j * np.outer(theta, x))
    return phase @ (w * psi.values)


def decay_fit(x: np.ndarray, values: np.ndarray, model: str = "exp") -> Tuple[float, float]:
    """Fit |values| <= C e^{-delta |x|} ("exp") or C / (1 + |x|^chi) ("power").

    Least squares in log space over the strictly positive magnitudes; returns
    (C, rate). The fit is shifted up so every used point lies below the envelope.
    """
    x = np.abs(np.asarray(x, dtype=float))
    mag = np.abs(np.asarray(values, dtype=float))
    keep = mag > 0
    x, mag = x[keep], mag[keep]
    if x.size < 2:
        raise ValueError("decay fit needs at least two nonzero values")

    if model == "exp":
        slope, intercept = np.polyfit(x, np.log(mag), 1)
        rate = -slope
        envelope = np.exp(-rate * x)
    elif model == "power":

        def residual(params):
            log_c, chi = params
            return log_c - np.log1p(x**chi) - np.log(mag)

        fit = optimize.least_squares(residual, x0=[0.0, 2.0])
        rate = float(fit.x[1])
        envelope = 1.0 / (1.0 + x**rate)
    else:
        raise ValueError(f"unknown decay model '{model}'")

    C = float(np.max(mag / envelope))
    return C, float(rate)


def decay_tail_moment(C: float, rate: float, X: float, model: str = "exp") -> float:
    """Bound on int_{|x|>X} |x| C * envelope(x) dx over both tails."""
    if model == "exp":
        if rate <= 0:
            return math.inf
        return 2.0 * C * math.exp(-rate * X) * (X / rate + 1.0 / rate**2)
    if rate <= 2:
        return math.inf
    return 2.0 * C * X ** (2.0 - rate) / (rate - 2.0)
