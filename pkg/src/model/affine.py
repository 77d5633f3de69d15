"""The "ax+b" group: elements (b, a) with b in R^d and a > 0."""

from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

Vector = Union[Sequence[float], np.ndarray, float]


def _as_tuple(b: Vector) -> Tuple[float, ...]:
    return tuple(float(v) for v in np.atleast_1d(np.asarray(b, dtype=float)))


@dataclass(frozen=True)
class AffinePair:
    """Group element (b, a) acting by x -> a x + b."""

    b: Tuple[float, ...]
    a: float

    def __post_init__(self):
        object.__setattr__(self, "b", _as_tuple(self.b))
        object.__setattr__(self, "a", float(self.a))
        if not self.a > 0:
            raise ValueError(f"multiplier must be positive, got {self.a}")

    @classmethod
    def identity(cls, dim: int = 1) -> "AffinePair":
        return cls(b=(0.0,) * dim, a=1.0)

    @property
    def dim(self) -> int:
        return len(self.b)

    def compose(self, other: "AffinePair") -> "AffinePair":
        """(b, a)(b', a') = (b + a b', a a')."""
        return AffinePair(
            b=tuple(bi + self.a * bj for bi, bj in zip(self.b, other.b)),
            a=self.a * other.a,
        )

    def act(self, x: Vector) -> np.ndarray:
        return self.a * np.asarray(x, dtype=float) + np.asarray(self.b)

    def __mul__(self, other: "AffinePair") -> "AffinePair":
        return self.compose(other)


def act(g: AffinePair, x: Vector) -> np.ndarray:
    return g.act(x)


def compose(g: AffinePair, h: AffinePair) -> AffinePair:
    return g.compose(h)
