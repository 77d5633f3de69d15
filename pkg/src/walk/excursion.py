"""Excursions of the recursion above the running level of S_n = log(A_1...A_n).

Paths are generated in blocks of geometrically growing size. Inside a block the
state is carried as X_n = exp(S_n) V_n with V_n = X_0 + sum_{k<=n} B_k exp(-S_k);
while S_k >= 0 every increment of V is bounded, so long excursions neither
overflow nor lose the recursion.
"""

import logging
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd

from src.model.mu_spec import MuSpec
from src.model.random_stream import RandomStream
from src.utils.errors import Truncated

logger = logging.getLogger(__name__)

BLOCK_START = 16
BLOCK_MAX = 1 << 16


@dataclass
class WalkOutcome:
    """Raw result of one excursion; fields are filled according to what was recorded."""

    L: Optional[int]
    n_stop: int
    s_stop: float
    v_stop: np.ndarray
    points: Optional[np.ndarray] = None
    beyond_cap: int = 0
    walk: Optional[np.ndarray] = None
    log_a: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None

    @property
    def truncated(self) -> bool:
        return self.L is None


def simulate_walk(
    spec: MuSpec,
    start,
    n_max: int,
    gen: np.random.Generator,
    record_path: bool = False,
    record_steps: bool = False,
    log_radius_cap: Optional[float] = None,
) -> WalkOutcome:
    """Run X_n from ``start`` until S_n < 0 for the first time or n_max steps."""
    start = np.asarray(start, dtype=float).reshape(spec.dim)
    s_level = 0.0
    v = start.copy()
    n_done = 0
    block = BLOCK_START
    L: Optional[int] = None

    points: List[np.ndarray] = []
    walk: List[np.ndarray] = [np.zeros(1)]
    steps_log_a: List[np.ndarray] = []
    steps_b: List[np.ndarray] = []
    beyond = 0

    if record_path:
        kept, dropped = _keep_points(np.zeros(1), start[None, :], log_radius_cap)
        points.append(kept)
        beyond += dropped

    while True:
        k = min(block, n_max - n_done)
        log_a, b = spec.sample_block(gen, k)
        s_blk = s_level + np.cumsum(log_a)
        below = np.flatnonzero(s_blk < 0.0)
        stopped = below.size > 0
        upto = int(below[0]) + 1 if stopped else k

        v_blk = v + np.cumsum(b[:upto] * np.exp(-s_blk[:upto])[:, None], axis=0)

        if record_path:
            if stopped:
                n_rec = upto - 1
            else:
                n_rec = k if n_done + k < n_max else k - 1
            if n_rec > 0:
                kept, dropped = _keep_points(s_blk[:n_rec], v_blk[:n_rec], log_radius_cap)
                points.append(kept)
                beyond += dropped
        if record_steps:
            walk.append(s_blk[:upto])
            steps_log_a.append(log_a[:upto])
            steps_b.append(b[:upto])

        s_level = float(s_blk[upto - 1])
        v = v_blk[upto - 1]
        n_done += upto
        if stopped:
            L = n_done
            break
        if n_done >= n_max:
            break
        block = min(2 * block, BLOCK_MAX)

    outcome = WalkOutcome(L=L, n_stop=n_done, s_stop=s_level, v_stop=v, beyond_cap=beyond)
    if record_path:
        outcome.points = np.concatenate(points, axis=0) if points else np.empty((0, spec.dim))
    if record_steps:
        outcome.walk = np.concatenate(walk)
        outcome.log_a = np.concatenate(steps_log_a)
        outcome.b = np.concatenate(steps_b, axis=0)
    return outcome


def _keep_points(
    s_values: np.ndarray, v_values: np.ndarray, log_radius_cap: Optional[float]
) -> Tuple[np.ndarray, int]:
    """Materialize X = exp(S) V, dropping points with log|X| above the cap."""
    if log_radius_cap is None:
        with np.errstate(over="ignore", invalid="ignore"):
            return np.exp(s_values)[:, None] * v_values, 0
    with np.errstate(divide="ignore"):
        log_radius = s_values + np.log(np.linalg.norm(v_values, axis=1))
    keep = log_radius <= log_radius_cap
    return np.exp(s_values[keep])[:, None] * v_values[keep], int(np.count_nonzero(~keep))


@dataclass
class Excursion:
    """One recorded path X_0..X_{n_stop-1} with its walk S_0..S_{n_stop}."""

    path: np.ndarray
    walk: np.ndarray
    L: Optional[int]
    n_max: int
    log_a: np.ndarray
    b: np.ndarray
    seed_tag: str = ""
    ladder_up: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    @property
    def truncated(self) -> bool:
        return self.L is None

    @property
    def n_stop(self) -> int:
        return len(self.path)


def ascending_ladder_epochs(walk: np.ndarray, weak: bool = False) -> np.ndarray:
    """Indices T_1 < T_2 < ... where S_n exceeds (weak: reaches) its previous maximum."""
    walk = np.asarray(walk, dtype=float)
    if walk.size < 2:
        return np.empty(0, dtype=int)
    prev_max = np.maximum.accumulate(walk)[:-1]
    hits = walk[1:] >= prev_max if weak else walk[1:] > prev_max
    return np.flatnonzero(hits) + 1


def run_excursion(spec: MuSpec, start, n_max: int, stream: RandomStream) -> Excursion:
    """Record X_0 = start up to X_{L-1}, or up to X_{n_max-1} when S stays >= 0."""
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    outcome = simulate_walk(
        spec, start, n_max, stream.generator(), record_path=True, record_steps=True
    )
    excursion = Excursion(
        path=outcome.points,
        walk=outcome.walk,
        L=outcome.L,
        n_max=n_max,
        log_a=outcome.log_a,
        b=outcome.b,
        seed_tag=stream.tag,
    )
    excursion.ladder_up = ascending_ladder_epochs(excursion.walk)
    if excursion.truncated:
        logger.debug(f"excursion {stream.tag} truncated at n_max={n_max}")
    return excursion


@dataclass(frozen=True)
class LadderPair:
    """(X_L, exp(S_L)) for an excursion started at a given point; m < 1 always."""

    q: np.ndarray
    m: float


def draw_ladder_pair(spec: MuSpec, start, n_max: int, gen: np.random.Generator) -> LadderPair:
    outcome = simulate_walk(spec, start, n_max, gen)
    if outcome.truncated:
        raise Truncated(f"no strict descent of S within n_max={n_max} steps")
    m = float(np.exp(outcome.s_stop))
    return LadderPair(q=m * outcome.v_stop, m=m)


def ladder_pair(spec: MuSpec, start, n_max: int, stream: RandomStream) -> LadderPair:
    return draw_ladder_pair(spec, start, n_max, stream.generator())


def excursions_to_frame(excursions: Iterable[Tuple[int, Excursion]]) -> pd.DataFrame:
    """One row per step: excursion_id, n, S_n and the coordinates of X_n."""
    frames = []
    for excursion_id, exc in excursions:
        n = np.arange(exc.n_stop)
        frame = pd.DataFrame({"excursion_id": excursion_id, "n": n, "S_n": exc.walk[: exc.n_stop]})
        for i in range(exc.path.shape[1]):
            frame[f"x_{i + 1}"] = exc.path[:, i]
        frames.append(frame)
    if not frames:
        return pd.DataFrame(columns=["excursion_id", "n", "S_n"])
    return pd.concat(frames, ignore_index=True)
