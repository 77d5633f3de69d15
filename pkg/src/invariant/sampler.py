"""Samplers for nu_L (backward ladder series) and nu (excursion union)."""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy import stats

from src.invariant.measure import CloudMeta, PointCloudMeasure, estimate_values
from src.model.mu_spec import MuSpec
from src.model.random_stream import EXCURSIONS, NU_L, RandomStream
from src.utils.errors import Truncated
from src.utils.pool import chunk_ranges, ordered_map
from src.walk.excursion import draw_ladder_pair, simulate_walk

logger = logging.getLogger(__name__)

MAX_LADDER_TERMS = 100_000


def backward_series(
    spec: MuSpec, tol: float, n_max: int, gen: np.random.Generator, strict: bool = True
) -> Tuple[np.ndarray, bool]:
    """Q_1 + M_1 Q_2 + M_1 M_2 Q_3 + ... until the running product drops below tol.

    Returns the sample and whether an inner ladder pair hit n_max (only possible
    with ``strict=False``; the partial sum is returned then).
    """
    origin = np.zeros(spec.dim)
    total = np.zeros(spec.dim)
    prod = 1.0
    for _ in range(MAX_LADDER_TERMS):
        if prod < tol:
            return total, False
        try:
            pair = draw_ladder_pair(spec, origin, n_max, gen)
        except Truncated:
            if strict:
                raise
            return total, True
        total += prod * pair.q
        prod *= pair.m
    return total, prod >= tol


@dataclass(frozen=True)
class _NuLTask:
    spec: MuSpec
    indices: range
    tol: float
    n_max: int
    stream: RandomStream
    strict: bool


def _nu_L_chunk(task: _NuLTask) -> Tuple[np.ndarray, np.ndarray]:
    points = np.empty((len(task.indices), task.spec.dim))
    flags = np.zeros(len(task.indices), dtype=bool)
    for k, i in enumerate(task.indices):
        gen = task.stream.child(i).generator()
        points[k], flags[k] = backward_series(task.spec, task.tol, task.n_max, gen, task.strict)
    return points, flags


def sample_nu_L(
    spec: MuSpec,
    n_samples: int,
    tol: float,
    n_max: int,
    stream: RandomStream,
    strict: bool = True,
    workers: int = 1,
    chunk_size: int = 2000,
) -> PointCloudMeasure:
    """Independent draws from the stationary law of the ladder chain, weight 1/n each."""
    if not 0.0 < tol < 1.0:
        raise ValueError("tol must lie in (0, 1)")
    tasks = [
        _NuLTask(spec, indices, tol, n_max, stream, strict)
        for indices in chunk_ranges(n_samples, chunk_size)
    ]
    results = ordered_map(_nu_L_chunk, tasks, workers)
    points = np.concatenate([p for p, _ in results], axis=0)
    flags = np.concatenate([f for _, f in results])

    truncated = float(flags.mean()) if flags.size else 0.0
    if truncated > 0:
        logger.warning(f"{truncated:.2%} of nu_L samples hit a truncated ladder pair")
    logger.info(f"sampled nu_L: {n_samples} points, tol={tol}")
    return PointCloudMeasure(
        points=points,
        weights=np.full(n_samples, 1.0 / n_samples),
        cluster_ids=np.arange(n_samples),
        n_clusters=n_samples,
        meta=CloudMeta(
            kind="nu_L",
            spec_hash=spec.fingerprint(),
            seed=stream.seed,
            m_excursions=n_samples,
            n_max=n_max,
            truncated_fraction=truncated,
            tol=tol,
        ),
    )


def forward_chain(
    spec: MuSpec, start, n_steps: int, stream: RandomStream, n_max: int = 10**7
) -> np.ndarray:
    """States Z_1..Z_n of the ladder chain Z_k = M_k Z_{k-1} + Q_k started at ``start``."""
    gen = stream.generator()
    origin = np.zeros(spec.dim)
    z = np.asarray(start, dtype=float).reshape(spec.dim).copy()
    states = np.empty((n_steps, spec.dim))
    for k in range(n_steps):
        pair = draw_ladder_pair(spec, origin, n_max, gen)
        z = pair.m * z + pair.q
        states[k] = z
    return states


def push_ladder(
    nu_L: PointCloudMeasure, spec: MuSpec, stream: RandomStream, n_max: int = 10**7
) -> np.ndarray:
    """One ladder-chain step applied to every point of a nu_L cloud (mu_L * nu_L).

    Points whose ladder pair does not close within n_max are dropped.
    """
    origin = np.zeros(spec.dim)
    pushed = []
    for i, u in enumerate(nu_L.points):
        try:
            pair = draw_ladder_pair(spec, origin, n_max, stream.child(i).generator())
        except Truncated:
            continue
        pushed.append(pair.m * u + pair.q)
    dropped = nu_L.n_points - len(pushed)
    if dropped:
        logger.warning(f"{dropped} of {nu_L.n_points} ladder steps truncated at n_max={n_max}")
    return np.array(pushed).reshape(-1, spec.dim)


def stationarity_ks(
    nu_L: PointCloudMeasure, spec: MuSpec, stream: RandomStream, n_max: int = 10**7
) -> Tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic and p-value of |u| under nu_L and mu_L * nu_L."""
    pushed = push_ladder(nu_L, spec, stream, n_max)
    result = stats.ks_2samp(nu_L.radii(), np.linalg.norm(pushed, axis=1))
    return float(result.statistic), float(result.pvalue)


@dataclass(frozen=True)
class _ExcursionTask:
    spec: MuSpec
    starts: np.ndarray
    indices: range
    n_max: int
    stream: RandomStream
    log_radius_cap: Optional[float]


def _excursion_chunk(task: _ExcursionTask):
    points: List[np.ndarray] = []
    ids: List[np.ndarray] = []
    truncated = 0
    beyond = 0
    for j in task.indices:
        gen = task.stream.child(j).generator()
        start = task.starts[gen.integers(task.starts.shape[0])]
        outcome = simulate_walk(
            task.spec, start, task.n_max, gen, record_path=True, log_radius_cap=task.log_radius_cap
        )
        points.append(outcome.points)
        ids.append(np.full(outcome.points.shape[0], j, dtype=np.int64))
        truncated += outcome.truncated
        beyond += outcome.beyond_cap
    return np.concatenate(points, axis=0), np.concatenate(ids), truncated, beyond


def estimate_nu(
    spec: MuSpec,
    m_excursions: int,
    n_max: int,
    stream: RandomStream,
    nu_L: Optional[PointCloudMeasure] = None,
    nuL_samples: int = 10**4,
    tol: float = 1e-12,
    ladder_n_max: int = 10**7,
    log_radius_cap: Optional[float] = 30.0,
    workers: int = 1,
    chunk_size: int = 2000,
) -> PointCloudMeasure:
    """Union of m excursions X_0..X_{L-1} started from nu_L draws, weight 1/m per point."""
    if nu_L is None:
        nu_L = sample_nu_L(
            spec,
            nuL_samples,
            tol,
            ladder_n_max,
            stream.child(NU_L),
            strict=False,
            workers=workers,
            chunk_size=chunk_size,
        )
    excursion_stream = stream.child(EXCURSIONS)
    tasks = [
        _ExcursionTask(spec, nu_L.points, indices, n_max, excursion_stream, log_radius_cap)
        for indices in chunk_ranges(m_excursions, chunk_size)
    ]
    logger.info(f"running {m_excursions} excursions in {len(tasks)} tasks (n_max={n_max})")
    results = ordered_map(_excursion_chunk, tasks, workers)

    points = np.concatenate([r[0] for r in results], axis=0)
    ids = np.concatenate([r[1] for r in results])
    truncated = sum(r[2] for r in results)
    beyond = sum(r[3] for r in results)

    truncated_fraction = truncated / m_excursions
    if truncated:
        logger.warning(f"{truncated} excursions ({truncated_fraction:.2%}) truncated at n_max={n_max}")
    if beyond:
        logger.info(f"{beyond} points beyond log-radius cap {log_radius_cap} counted, not stored")

    cloud = PointCloudMeasure(
        points=points,
        weights=np.full(points.shape[0], 1.0 / m_excursions),
        cluster_ids=ids,
        n_clusters=m_excursions,
        meta=CloudMeta(
            kind="nu",
            spec_hash=spec.fingerprint(),
            seed=stream.seed,
            m_excursions=m_excursions,
            n_max=n_max,
            truncated_fraction=truncated_fraction,
            nuL_truncated_fraction=nu_L.meta.truncated_fraction,
            points_beyond_cap=beyond,
            log_radius_cap=log_radius_cap,
            tol=tol,
        ),
    )
    logger.info(f"assembled nu cloud: {cloud.n_points} points from {m_excursions} excursions")
    return cloud


def resample_one_step(
    nu_hat: PointCloudMeasure, spec: MuSpec, stream: RandomStream
) -> PointCloudMeasure:
    """The cloud pushed once through mu: u -> a u + b with a fresh pair per point."""
    log_a, b = spec.sample_block(stream.generator(), nu_hat.n_points)
    return nu_hat.with_points(np.exp(log_a)[:, None] * nu_hat.points + b)


def invariance_gap(
    nu_hat: PointCloudMeasure, spec: MuSpec, phi, stream: RandomStream
) -> Tuple[float, float]:
    """(mu * nu_hat)(phi) - nu_hat(phi) with a paired cluster standard error."""
    pushed = resample_one_step(nu_hat, spec, stream)
    return estimate_values(nu_hat, phi(pushed.points) - phi(nu_hat.points))


def split_sample_gap(first: Tuple[float, float], second: Tuple[float, float]) -> float:
    """|v1 - v2| in units of the combined standard error."""
    (v1, s1), (v2, s2) = first, second
    combined = math.hypot(s1, s2)
    return abs(v1 - v2) / combined if combined > 0 else (0.0 if v1 == v2 else math.inf)
