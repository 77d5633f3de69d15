"""The law mu of (B_1, A_1), hypothesis (H) validation and pair sampling."""

import hashlib
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Type

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.model.affine import AffinePair
from src.model.laws import ALaw, BLaw, LognormalLaw, ConstantB
from src.model.random_stream import RandomStream
from src.utils.errors import (
    AffineCriticalError,
    Degenerate,
    MomentFailure,
    NonCritical,
)

logger = logging.getLogger(__name__)

CRITICALITY_TOL = 1e-12


class MuSpec(BaseModel):
    """Product law of (B_1, A_1) with an optional recentering offset x0."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    dim: int = Field(default=1, ge=1)
    a_law: ALaw = Field(default_factory=LognormalLaw)
    b_law: BLaw = Field(default_factory=lambda: ConstantB(value=[1.0]))
    recenter_offset: Optional[List[float]] = None

    @model_validator(mode="after")
    def _check_dimensions(self):
        hint = self.b_law.dim_hint()
        if hint is not None and hint != self.dim:
            raise ValueError(f"b_law has dimension {hint}, model dim is {self.dim}")
        if self.recenter_offset is not None and len(self.recenter_offset) != self.dim:
            raise ValueError("recenter_offset must have length dim")
        return self

    # -- sampling -----------------------------------------------------------

    def sample_block(self, gen: np.random.Generator, n: int) -> Tuple[np.ndarray, np.ndarray]:
        """Draw n i.i.d. pairs; returns (log a, b) with shapes (n,) and (n, dim).

        With a recentering offset the pairs follow
        delta_(x0,1) * mu * delta_(-x0,1), i.e. b is replaced by b + (1 - a) x0.
        """
        log_a = self.a_law.sample_log(gen, n)
        b = self.b_law.sample(gen, n, self.dim)
        if self.recenter_offset is not None:
            x0 = np.asarray(self.recenter_offset, dtype=float)
            b = b - np.expm1(log_a)[:, None] * x0
        return log_a, b

    # -- mu_bar quantities --------------------------------------------------

    def sigma2(self) -> float:
        return self.a_law.sigma2()

    def lattice_span(self) -> float:
        return self.a_law.lattice_span()

    def char_fn(self, theta) -> np.ndarray:
        return self.a_law.char_fn(theta)

    def one_minus_char_fn(self, theta) -> np.ndarray:
        return self.a_law.one_minus_char_fn(theta)

    def r(self, x) -> np.ndarray:
        return self.a_law.r(x)

    def positive_half_space(self) -> bool:
        """Sufficient condition for hypothesis (G): B_1 > 0 and B >= 0 coordinatewise."""
        if self.recenter_offset is not None and any(self.recenter_offset):
            return False
        return self.b_law.positive_first_coordinate()

    def fingerprint(self) -> str:
        return hashlib.sha256(self.model_dump_json().encode()).hexdigest()


@dataclass
class ValidationCheck:
    name: str
    passed: bool
    detail: str
    error: Optional[Type[AffineCriticalError]] = None


@dataclass
class ValidationReport:
    """Per-condition outcome of hypothesis (H) and the moment conditions."""

    checks: List[ValidationCheck] = field(default_factory=list)
    lattice_span: float = 0.0
    sigma2: float = 0.0
    moment_delta: float = math.inf
    moment_eps: float = math.inf

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{"check": c.name, "passed": c.passed, "detail": c.detail} for c in self.checks]
        )

    def to_dict(self) -> Dict:
        return {
            "passed": self.passed,
            "lattice_span": self.lattice_span,
            "sigma2": self.sigma2,
            "moment_delta": _json_float(self.moment_delta),
            "moment_eps": _json_float(self.moment_eps),
            "checks": [
                {"name": c.name, "passed": c.passed, "detail": c.detail} for c in self.checks
            ],
        }

    def raise_for_failure(self) -> None:
        for check in self.checks:
            if not check.passed:
                raise check.error(f"{check.name}: {check.detail}")


def _json_float(value: float):
    return value if math.isfinite(value) else "inf"


def validate_spec(spec: MuSpec, raise_on_failure: bool = True) -> ValidationReport:
    """Check criticality, non-degeneracy and moments; report lattice span and sigma^2."""
    a_law, b_law = spec.a_law, spec.b_law
    mean_log = a_law.mean_log()
    sigma2 = a_law.sigma2()
    delta = min(a_law.moment_delta(), b_law.moment_delta())
    eps = a_law.moment_eps()

    report = ValidationReport(
        lattice_span=spec.lattice_span(),
        sigma2=sigma2,
        moment_delta=delta,
        moment_eps=eps,
    )
    report.checks = [
        ValidationCheck(
            "criticality",
            abs(mean_log) <= CRITICALITY_TOL,
            f"E[log A] = {mean_log:.3e}",
            NonCritical,
        ),
        ValidationCheck(
            "A_not_identically_one",
            sigma2 > 0.0,
            f"Var[log A] = {sigma2:.6g}",
            Degenerate,
        ),
        ValidationCheck(
            "no_fixed_point",
            not b_law.is_zero(),
            "B = 0 a.s. makes x = 0 a fixed point" if b_law.is_zero() else "P[Ax+B=x] < 1",
            Degenerate,
        ),
        ValidationCheck(
            "log_moment_2_plus_eps",
            eps > 0.0,
            f"E(|log A| + log+|B|)^(2+eps) finite for eps = {eps}",
            MomentFailure,
        ),
        ValidationCheck(
            "small_moments",
            delta > 0.0,
            f"E[A^d + A^-d + |B|^d] finite for d < {delta}",
            MomentFailure,
        ),
        ValidationCheck(
            "sigma2_finite_positive",
            0.0 < sigma2 < math.inf,
            f"sigma^2 = {sigma2:.6g}",
            Degenerate,
        ),
    ]

    if report.passed:
        logger.info(
            f"mu validated: lattice_span={report.lattice_span}, sigma2={report.sigma2:.6g}"
        )
    else:
        failed = [c.name for c in report.checks if not c.passed]
        logger.warning(f"mu fails hypothesis checks: {failed}")
        if raise_on_failure:
            report.raise_for_failure()
    return report


def sample_pair(spec: MuSpec, stream: RandomStream) -> AffinePair:
    """One draw (b, a) from mu, fully determined by the stream."""
    log_a, b = spec.sample_block(stream.generator(), 1)
    return AffinePair(b=tuple(b[0]), a=math.exp(log_a[0]))
