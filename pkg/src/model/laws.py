"""Parametric families for the multiplier A and the translation B.

The multiplier families are parametrised through log A. Every quantity below
that refers to mu_bar is about Y = -log A, the law whose characteristic
function drives the potential kernel.
"""

import math
from fractions import Fraction
from functools import reduce
from typing import Annotated, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, model_validator
from scipy.special import erfcx

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def sin_minus_id(u: np.ndarray) -> np.ndarray:
    """sin(u) - u without cancellation for small u."""
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < 1e-2
    u2 = u * u
    series = -u * u2 / 6.0 * (1.0 - u2 / 20.0 * (1.0 - u2 / 42.0))
    return np.where(small, series, np.sin(u) - u)


class _Family(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


# ---------------------------------------------------------------------------
# multiplier laws
# ---------------------------------------------------------------------------


class _ALaw(_Family):
    """Common interface of the log A families."""

    def sample_log(self, gen: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def mean_log(self) -> float:
        raise NotImplementedError

    def sigma2(self) -> float:
        raise NotImplementedError

    def fourth_moment(self) -> float:
        raise NotImplementedError

    def y_third_moment(self) -> float:
        """E[Y^3], Y = -log A."""
        raise NotImplementedError

    def lattice_span(self) -> float:
        return 0.0

    def char_fn(self, theta) -> np.ndarray:
        """E[exp(i theta Y)], Y = -log A."""
        raise NotImplementedError

    def one_minus_char_fn(self, theta) -> np.ndarray:
        return 1.0 - self.char_fn(theta)

    def r(self, x) -> np.ndarray:
        """r(x) = E|Y - x| - |x|."""
        raise NotImplementedError

    def r_support(self) -> Tuple[float, float]:
        """Interval outside which r is below double precision."""
        raise NotImplementedError

    def r_kinks(self) -> List[float]:
        return [0.0]

    def moment_delta(self) -> float:
        """Exponent delta with E[A^delta + A^-delta] finite."""
        return math.inf

    def moment_eps(self) -> float:
        """Exponent eps with E|log A|^(2+eps) finite."""
        return math.inf

    def is_degenerate(self) -> bool:
        return self.sigma2() <= 0.0


class LognormalLaw(_ALaw):
    """log A ~ Normal(0, s^2)."""

    kind: Literal["lognormal"] = "lognormal"
    s: PositiveFloat = 1.0

    def sample_log(self, gen, n):
        return self.s * gen.standard_normal(n)

    def mean_log(self):
        return 0.0

    def sigma2(self):
        return self.s**2

    def fourth_moment(self):
        return 3.0 * self.s**4

    def y_third_moment(self):
        return 0.0

    def char_fn(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.exp(-0.5 * (self.s * theta) ** 2).astype(complex)

    def one_minus_char_fn(self, theta):
        theta = np.asarray(theta, dtype=float)
        return (-np.expm1(-0.5 * (self.s * theta) ** 2)).astype(complex)

    def r(self, x):
        ax = np.abs(np.asarray(x, dtype=float))
        t = ax / self.s
        # 2 s pdf(t) - 2|x| cdf(-t), written with the scaled complementary erf
        return np.exp(-0.5 * t * t) * (
            2.0 * self.s / _SQRT_2PI - ax * erfcx(t / math.sqrt(2.0))
        )

    def r_support(self):
        return (-12.0 * self.s, 12.0 * self.s)


class _AtomicLaw(_ALaw):
    """Finite-support log A law; subclasses provide atoms()."""

    def atoms(self) -> Tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def sample_log(self, gen, n):
        values, probs = self.atoms()
        if len(values) == 1:
            return np.full(n, values[0])
        return gen.choice(values, size=n, p=probs)

    def mean_log(self):
        values, probs = self.atoms()
        return math.fsum(probs * values)

    def sigma2(self):
        values, probs = self.atoms()
        mean = self.mean_log()
        return math.fsum(probs * (values - mean) ** 2)

    def fourth_moment(self):
        values, probs = self.atoms()
        return math.fsum(probs * values**4)

    def y_third_moment(self):
        values, probs = self.atoms()
        return -math.fsum(probs * values**3)

    def char_fn(self, theta):
        values, probs = self.atoms()
        theta = np.asarray(theta, dtype=float)
        return np.sum(probs * np.exp(-1j * theta[..., None] * values), axis=-1)

    def one_minus_char_fn(self, theta):
        values, probs = self.atoms()
        theta = np.asarray(theta, dtype=float)
        u = theta[..., None] * values
        real = np.sum(probs * 2.0 * np.sin(0.5 * u) ** 2, axis=-1)
        imag = np.sum(probs * sin_minus_id(u), axis=-1) + theta * self.mean_log()
        return real + 1j * imag

    def r(self, x):
        values, probs = self.atoms()
        x = np.asarray(x, dtype=float)
        return np.sum(probs * np.abs(x[..., None] + values), axis=-1) - np.abs(x)

    def r_support(self):
        values, _ = self.atoms()
        y = -values
        return (float(min(y.min(), 0.0)), float(max(y.max(), 0.0)))

    def r_kinks(self):
        values, _ = self.atoms()
        return sorted({0.0, *(-values).tolist()})

    def support_atoms(self) -> Tuple[np.ndarray, np.ndarray]:
        """Atoms of Y = -log A with their probabilities."""
        values, probs = self.atoms()
        return -values, probs


class TwoPointLaw(_AtomicLaw):
    """log A = +p or -p with probability 1/2 each."""

    kind: Literal["two_point"] = "two_point"
    p_span: PositiveFloat = 1.0

    def atoms(self):
        return np.array([self.p_span, -self.p_span]), np.array([0.5, 0.5])

    def lattice_span(self):
        return float(self.p_span)

    def char_fn(self, theta):
        return np.cos(self.p_span * np.asarray(theta, dtype=float)).astype(complex)

    def one_minus_char_fn(self, theta):
        u = 0.5 * self.p_span * np.asarray(theta, dtype=float)
        return (2.0 * np.sin(u) ** 2).astype(complex)


class DiscreteLaw(_AtomicLaw):
    """Finite-support law of log A given by atoms and probabilities."""

    kind: Literal["discrete"] = "discrete"
    values: List[float]
    probs: List[float]

    @model_validator(mode="after")
    def _check_atoms(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise ValueError("values and probs must be non-empty and of equal length")
        if any(p <= 0 for p in self.probs):
            raise ValueError("probs must be positive")
        if abs(math.fsum(self.probs) - 1.0) > 1e-12:
            raise ValueError("probs must sum to 1")
        return self

    def atoms(self):
        return np.asarray(self.values, dtype=float), np.asarray(self.probs, dtype=float)

    def lattice_span(self):
        nonzero = [abs(v) for v in self.values if v != 0.0]
        if not nonzero:
            return 0.0
        fractions = []
        for v in nonzero:
            frac = Fraction(v).limit_denominator(10**6)
            if abs(float(frac) - v) > 1e-12 * max(1.0, v):
                return 0.0
            fractions.append(frac)
        den = _lcm_denominator(fractions)
        span = reduce(math.gcd, (int(f * den) for f in fractions)) / den
        # incommensurable atoms only share a tiny rational span
        if span < 1e-6 * max(nonzero):
            return 0.0
        return float(span)


def _lcm_denominator(fractions: List[Fraction]) -> int:
    return reduce(lambda a, b: a * b // math.gcd(a, b), (f.denominator for f in fractions), 1)


class ShiftedExpLaw(_ALaw):
    """log A = s (E - 1) with E ~ Exp(1): centered, skewed, aperiodic."""

    kind: Literal["shifted_exp"] = "shifted_exp"
    s: PositiveFloat = 1.0

    def sample_log(self, gen, n):
        return self.s * (gen.standard_exponential(n) - 1.0)

    def mean_log(self):
        return 0.0

    def sigma2(self):
        return self.s**2

    def fourth_moment(self):
        return 9.0 * self.s**4

    def y_third_moment(self):
        return -2.0 * self.s**3

    def char_fn(self, theta):
        u = self.s * np.asarray(theta, dtype=float)
        return np.exp(1j * u) / (1.0 + 1j * u)

    def one_minus_char_fn(self, theta):
        u = self.s * np.asarray(theta, dtype=float)
        numer = 2.0 * np.sin(0.5 * u) ** 2 - 1j * sin_minus_id(u)
        return numer / (1.0 + 1j * u)

    def r(self, x):
        x = np.asarray(x, dtype=float)
        s = self.s
        inside = 2.0 * s * np.exp(np.minimum(x, s) / s - 1.0) - 2.0 * np.maximum(x, 0.0)
        return np.where(x >= s, 0.0, inside)

    def r_support(self):
        return (-40.0 * self.s, self.s)

    def r_kinks(self):
        return [0.0, float(self.s)]

    def moment_delta(self):
        return 0.5 / self.s


class ConstantALaw(_ALaw):
    """A equal to a constant; never admissible, kept so validation can name why."""

    kind: Literal["constant"] = "constant"
    value: PositiveFloat

    def sample_log(self, gen, n):
        return np.full(n, math.log(self.value))

    def mean_log(self):
        return math.log(self.value)

    def sigma2(self):
        return 0.0

    def fourth_moment(self):
        return 0.0

    def y_third_moment(self):
        return -math.log(self.value) ** 3

    def char_fn(self, theta):
        return np.exp(-1j * math.log(self.value) * np.asarray(theta, dtype=float))

    def r(self, x):
        x = np.asarray(x, dtype=float)
        return np.abs(-math.log(self.value) - x) - np.abs(x)

    def r_support(self):
        y = -math.log(self.value)
        return (min(y, 0.0), max(y, 0.0))


ALaw = Annotated[
    Union[LognormalLaw, TwoPointLaw, DiscreteLaw, ShiftedExpLaw, ConstantALaw],
    Field(discriminator="kind"),
]


# ---------------------------------------------------------------------------
# translation laws
# ---------------------------------------------------------------------------


class _BLaw(_Family):
    def sample(self, gen: np.random.Generator, n: int, dim: int) -> np.ndarray:
        raise NotImplementedError

    def dim_hint(self) -> Optional[int]:
        return None

    def is_zero(self) -> bool:
        """True when B = 0 almost surely."""
        return False

    def positive_first_coordinate(self) -> bool:
        """True when B has nonnegative coordinates and B_1 > 0 a.s."""
        return False

    def moment_delta(self) -> float:
        return math.inf


class ConstantB(_BLaw):
    kind: Literal["constant"] = "constant"
    value: List[float]

    def sample(self, gen, n, dim):
        return np.broadcast_to(np.asarray(self.value, dtype=float), (n, dim)).copy()

    def dim_hint(self):
        return len(self.value)

    def is_zero(self):
        return all(v == 0.0 for v in self.value)

    def positive_first_coordinate(self):
        return self.value[0] > 0 and all(v >= 0 for v in self.value)


class UniformB(_BLaw):
    """B uniform on the box [low, high]."""

    kind: Literal["uniform"] = "uniform"
    low: List[float]
    high: List[float]

    @model_validator(mode="after")
    def _check_box(self):
        if len(self.low) != len(self.high):
            raise ValueError("low and high must have equal length")
        if any(h < lo for lo, h in zip(self.low, self.high)):
            raise ValueError("high must dominate low")
        return self

    def sample(self, gen, n, dim):
        return gen.uniform(np.asarray(self.low), np.asarray(self.high), size=(n, dim))

    def dim_hint(self):
        return len(self.low)

    def is_zero(self):
        return all(v == 0.0 for v in self.low + self.high)

    def positive_first_coordinate(self):
        return self.low[0] > 0 and all(v >= 0 for v in self.low)


class GaussianB(_BLaw):
    kind: Literal["gaussian"] = "gaussian"
    mean: List[float]
    cov: List[List[float]]

    @model_validator(mode="after")
    def _check_cov(self):
        d = len(self.mean)
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (d, d):
            raise ValueError(f"cov must be {d}x{d}")
        if not np.allclose(cov, cov.T) or np.linalg.eigvalsh(cov).min() < -1e-12:
            raise ValueError("cov must be symmetric positive semi-definite")
        return self

    def sample(self, gen, n, dim):
        return gen.multivariate_normal(np.asarray(self.mean), np.asarray(self.cov), size=n)

    def dim_hint(self):
        return len(self.mean)

    def is_zero(self):
        return all(v == 0.0 for v in self.mean) and not np.any(np.asarray(self.cov))


class LognormalRadialB(_BLaw):
    """|B| = exp(mu + s Z), direction uniform on the sphere."""

    kind: Literal["lognormal_radial"] = "lognormal_radial"
    mu: float = 0.0
    s: PositiveFloat = 1.0

    def sample(self, gen, n, dim):
        radius = np.exp(self.mu + self.s * gen.standard_normal(n))
        direction = gen.standard_normal((n, dim))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        return radius[:, None] * direction


BLaw = Annotated[
    Union[ConstantB, UniformB, GaussianB, LognormalRadialB],
    Field(discriminator="kind"),
]
