"""Monte Carlo estimates of f_phi and psi_phi on an x grid from a nu cloud.

f_phi(x)   = int phi(e^{-x} u) nu(du)
psi_phi(x) = int int [phi(e^{-x} a u) - phi(e^{-x} (a u + b))] nu(du) mu(db da)

psi_phi uses one fresh (b, a) per cloud point, shared by every x, so both terms
of the difference see the same draw.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple, Union

import numpy as np

from src.crossval.testfn import RadialTestFn
from src.invariant.measure import PointCloudMeasure, cluster_stderr
from src.model.mu_spec import MuSpec
from src.model.random_stream import PSI_DRAWS, RandomStream
from src.potential.grid import GridFn
from src.potential.solver import convolve_mu_bar
from src.utils.pool import chunk_ranges, ordered_map

logger = logging.getLogger(__name__)

DRAW_CHUNK = 100_000
N_GROUPS = 256
POISSON_NODES = 16


@dataclass(frozen=True)
class LogLaplace:
    """zeta(u) = e^{-gamma |log|u||}, the radial factor phi is built from."""

    gamma: float

    @property
    def name(self) -> str:
        return f"zeta_{self.gamma:g}"

    def profile(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        with np.errstate(invalid="ignore"):
            return np.where(np.isfinite(s), np.exp(-self.gamma * np.abs(s)), 0.0)

    def angular(self, u: np.ndarray) -> np.ndarray:
        return np.ones(u.shape[0])


@dataclass
class PairedDraws:
    """log|u|, log|a u|, log|a u + b| and angular factors for every cloud point."""

    s: np.ndarray
    s_a: np.ndarray
    s_b: np.ndarray
    zeta_u: np.ndarray
    zeta_v: np.ndarray


def paired_draws(
    spec: MuSpec,
    nu_hat: PointCloudMeasure,
    phi: Union[RadialTestFn, LogLaplace],
    stream: RandomStream,
) -> PairedDraws:
    """Fresh (b, a) per point; block k of DRAW_CHUNK points uses stream child (PSI_DRAWS, k)."""
    n = nu_hat.n_points
    log_a = np.empty(n)
    b = np.empty((n, nu_hat.dim))
    for k, rows in enumerate(chunk_ranges(n, DRAW_CHUNK)):
        la, bb = spec.sample_block(stream.child(PSI_DRAWS, k).generator(), len(rows))
        log_a[rows.start : rows.stop] = la
        b[rows.start : rows.stop] = bb

    u = nu_hat.points
    v = np.exp(log_a)[:, None] * u + b
    with np.errstate(divide="ignore"):
        s = np.log(np.linalg.norm(u, axis=1))
        s_b = np.log(np.linalg.norm(v, axis=1))
    return PairedDraws(s=s, s_a=s + log_a, s_b=s_b, zeta_u=phi.angular(u), zeta_v=phi.angular(v))


def trapezoid_weights(x: np.ndarray) -> np.ndarray:
    w = np.full(x.size, float(x[1] - x[0]) if x.size > 1 else 1.0)
    if x.size > 1:
        w[[0, -1]] *= 0.5
    return w


@dataclass(frozen=True)
class _BlockTask:
    xs: np.ndarray
    lin_f: Dict[str, np.ndarray]
    lin_psi: Dict[str, np.ndarray]
    phi: RadialTestFn
    draws: Optional[PairedDraws]
    s: np.ndarray
    zeta_u: np.ndarray
    weights: np.ndarray
    ids: np.ndarray
    n_clusters: int
    fubini_w: Optional[np.ndarray]


def _sums(task: _BlockTask, values: np.ndarray) -> np.ndarray:
    return np.bincount(task.ids, weights=task.weights * values, minlength=task.n_clusters)


def _grid_block(task: _BlockTask):
    n = task.xs.size
    f = np.empty(n)
    f_se = np.empty(n)
    psi = np.full(n, np.nan)
    psi_se = np.full(n, np.nan)
    lin = {name: np.zeros(task.n_clusters) for name in (*task.lin_f, *task.lin_psi)}
    fubini = np.zeros(task.n_clusters) if task.fubini_w is not None else None

    for i, x in enumerate(task.xs):
        c = _sums(task, task.phi.profile(task.s - x) * task.zeta_u)
        f[i], f_se[i] = math.fsum(c), cluster_stderr(c)
        for name, coef in task.lin_f.items():
            lin[name] += coef[i] * c

        if task.draws is not None:
            d = task.draws
            first = task.phi.profile(d.s_a - x) * d.zeta_u
            second = task.phi.profile(d.s_b - x) * d.zeta_v
            c = _sums(task, first - second)
            psi[i], psi_se[i] = math.fsum(c), cluster_stderr(c)
            for name, coef in task.lin_psi.items():
                lin[name] += coef[i] * c
            if fubini is not None:
                fubini += task.fubini_w[i] * _sums(task, np.abs(first - second))
    return f, f_se, psi, psi_se, lin, fubini


@dataclass
class GridPass:
    f: GridFn
    psi: Optional[GridFn]
    linear: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    fubini: Optional[Tuple[float, float]] = None


def grid_pass(
    nu_hat: PointCloudMeasure,
    phi: RadialTestFn,
    x_grid: np.ndarray,
    draws: Optional[PairedDraws] = None,
    lin_f: Optional[Dict[str, np.ndarray]] = None,
    lin_psi: Optional[Dict[str, np.ndarray]] = None,
    fubini: bool = False,
    workers: int = 1,
    block: int = 8,
) -> GridPass:
    """One pass over the cloud per grid point, in blocks of x.

    ``lin_f`` / ``lin_psi`` map names to coefficient vectors c over the grid;
    sum_x c(x) f(x) (resp. psi) is accumulated per excursion so its standard
    error is exact.
    """
    x = np.asarray(x_grid, dtype=float)
    lin_f = lin_f or {}
    lin_psi = lin_psi or {}
    with np.errstate(divide="ignore"):
        s = np.log(nu_hat.radii())
    zeta_u = phi.angular(nu_hat.points)
    fubini_w = trapezoid_weights(x) if fubini else None

    tasks = []
    for rows in chunk_ranges(x.size, block):
        sl = slice(rows.start, rows.stop)
        tasks.append(
            _BlockTask(
                xs=x[sl],
                lin_f={k: v[sl] for k, v in lin_f.items()},
                lin_psi={k: v[sl] for k, v in lin_psi.items()},
                phi=phi,
                draws=draws,
                s=s,
                zeta_u=zeta_u,
                weights=nu_hat.weights,
                ids=nu_hat.cluster_ids,
                n_clusters=nu_hat.n_clusters,
                fubini_w=fubini_w[sl] if fubini_w is not None else None,
            )
        )
    results = ordered_map(_grid_block, tasks, workers)

    f = np.concatenate([r[0] for r in results])
    f_se = np.concatenate([r[1] for r in results])
    psi = np.concatenate([r[2] for r in results])
    psi_se = np.concatenate([r[3] for r in results])

    linear = {}
    for name in (*lin_f, *lin_psi):
        total = np.sum([r[4][name] for r in results], axis=0)
        linear[name] = (float(math.fsum(total)), cluster_stderr(total))

    fub = None
    if fubini:
        total = np.sum([r[5] for r in results], axis=0)
        fub = (float(math.fsum(total)), cluster_stderr(total))

    tags = {"gamma": phi.gamma, "test_fn": phi.name}
    f_grid = GridFn.from_samples(x, f, stderr=f_se, tags={**tags, "quantity": "f_phi"})
    psi_grid = None
    if draws is not None:
        psi_grid = GridFn.from_samples(x, psi, stderr=psi_se, tags={**tags, "quantity": "psi_phi"})
    return GridPass(f=f_grid, psi=psi_grid, linear=linear, fubini=fub)


def estimate_f_phi(nu_hat: PointCloudMeasure, phi: RadialTestFn, x_grid: np.ndarray) -> GridFn:
    """f_phi on the grid with a per-point cluster standard error."""
    return grid_pass(nu_hat, phi, x_grid).f


def estimate_psi_phi(
    spec: MuSpec,
    nu_hat: PointCloudMeasure,
    phi: RadialTestFn,
    x_grid: np.ndarray,
    stream: RandomStream,
) -> GridFn:
    """psi_phi on the grid as a paired one-step difference."""
    draws = paired_draws(spec, nu_hat, phi, stream)
    return grid_pass(nu_hat, phi, x_grid, draws=draws).psi


def psi_via_r_convolution(
    spec: MuSpec,
    nu_hat: PointCloudMeasure,
    gamma: float,
    x_grid: np.ndarray,
    stream: RandomStream,
) -> GridFn:
    """psi_phi rebuilt as r * psi_zeta, with zeta(u) = e^{-gamma |log|u||}.

    psi_zeta is estimated on the grid widened by the support of r; the
    convolution is a trapezoid sum on the grid spacing. Standard errors come
    from N_GROUPS batches of excursions.
    """
    x = np.asarray(x_grid, dtype=float)
    dx = float(x[1] - x[0])
    lo, hi = spec.a_law.r_support()
    k_lo, k_hi = int(math.floor(lo / dx)), int(math.ceil(hi / dx))
    t = dx * np.arange(k_lo, k_hi + 1)
    ext = x[0] - dx * np.arange(k_hi, 0, -1)
    ext = np.concatenate([ext, x, x[-1] + dx * np.arange(1, -k_lo + 1)])

    zeta = LogLaplace(gamma)
    draws = paired_draws(spec, nu_hat, zeta, stream)
    groups = nu_hat.cluster_ids % N_GROUPS
    group_sums = np.empty((ext.size, N_GROUPS))
    for i, xe in enumerate(ext):
        d = zeta.profile(draws.s_a - xe) * draws.zeta_u - zeta.profile(draws.s_b - xe) * draws.zeta_v
        group_sums[i] = np.bincount(groups, weights=nu_hat.weights * d, minlength=N_GROUPS)

    r_w = spec.r(t) * trapezoid_weights(t)
    conv = np.zeros((x.size, N_GROUPS))
    offset = k_hi
    for j, wj in enumerate(r_w):
        # x_i - t_j sits at ext index offset + i - (k_lo + j)
        start = offset - (k_lo + j)
        conv += wj * group_sums[start : start + x.size]
    values = conv.sum(axis=1)
    stderr = np.array([cluster_stderr(row) for row in conv])
    return GridFn.from_samples(
        x, values, stderr=stderr, tags={"gamma": gamma, "quantity": "psi_phi_via_r"}
    )


def poisson_consistency(spec: MuSpec, f_hat: GridFn, psi_hat: GridFn) -> GridFn:
    """(f - mu_bar * f + psi) / combined stderr at each interior grid point."""
    conv = convolve_mu_bar(spec, f_hat, n_nodes=POISSON_NODES)
    gap = f_hat.values - conv.values + psi_hat.values
    se = np.hypot(f_hat.stderr, psi_hat.stderr)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, gap / se, np.where(gap == 0, 0.0, np.inf))
    return f_hat.with_values(np.where(np.isfinite(conv.values), z, np.nan), quantity="poisson_z")

