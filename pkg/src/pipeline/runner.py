"""Subcommand bodies: each one reads its inputs, runs a stage and writes its artifacts."""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

from src.config.settings import RunConfig
from src.crossval.report import CrossvalReport, cplus_crosscheck
from src.invariant.cloud_io import read_cloud, write_cloud
from src.invariant.measure import PointCloudMeasure, bootstrap_ci, cluster_bootstrap
from src.invariant.sampler import estimate_nu, invariance_gap, sample_nu_L, stationarity_ks
from src.model.mu_spec import ValidationReport, validate_spec
from src.model.random_stream import BOOTSTRAP, DUMP, NU_L, RESAMPLE, STATIONARITY, RandomStream
from src.potential.fclass import certify_F
from src.potential.grid import GridFn, symmetric_grid
from src.potential.psi import parse_psi
from src.potential.solver import QuadParams, poisson_residual, potential_A
from src.tail.angular import angular_measure
from src.tail.annuli import TailReport, annulus_indicator, estimate_Cplus, lattice_ratio
from src.tail.bounds import bound_diagnostics, bounds_to_frame
from src.utils.errors import ConfigError, InsufficientSupport
from src.walk.duality import DualityResult, duality_check
from src.walk.excursion import excursions_to_frame, run_excursion

logger = logging.getLogger(__name__)

CLOUD_FILE = "nu_cloud.nupc"
LATTICE_RATIO_LOG_Z = (3.0, 5.0)


def write_json(path: Path, payload: Dict[str, Any]) -> Path:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
    logger.info(f"wrote {path}")
    return path


def _json_default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _finite(value: float) -> Optional[float]:
    return value if math.isfinite(value) else None


@dataclass
class RunContext:
    config: RunConfig
    out: Path
    cloud_path: Optional[Path] = None

    @property
    def spec(self):
        return self.config.model

    @property
    def stream(self) -> RandomStream:
        return RandomStream(self.config.run.seed)

    @property
    def workers(self) -> int:
        return self.config.run.workers

    def prepare(self) -> "RunContext":
        self.out.mkdir(parents=True, exist_ok=True)
        return self

    def load_cloud(self) -> PointCloudMeasure:
        path = self.cloud_path or self.out / CLOUD_FILE
        if not Path(path).exists():
            raise ConfigError(f"no cloud at {path}; run 'simulate' first or pass --cloud")
        cloud = read_cloud(path)
        if cloud.meta.spec_hash and cloud.meta.spec_hash != self.spec.fingerprint():
            logger.warning(f"cloud {path} was simulated for a different model")
        return cloud


def run_validate(ctx: RunContext) -> ValidationReport:
    report = validate_spec(ctx.spec, raise_on_failure=False)
    payload = {
        "config_fingerprint": ctx.config.fingerprint(),
        "model": ctx.spec.model_dump(mode="json"),
        "validation": report.to_dict(),
    }
    write_json(ctx.out / "model.json", payload)
    report.to_frame().to_csv(ctx.out / "validation.csv", index=False)
    return report


def run_simulate(ctx: RunContext) -> Dict[str, Any]:
    validate_spec(ctx.spec)
    run = ctx.config.run
    stream = ctx.stream
    nu_L = sample_nu_L(
        ctx.spec,
        run.nuL_samples,
        run.tol,
        run.ladder_n_max,
        stream.child(NU_L),
        strict=False,
        workers=ctx.workers,
        chunk_size=run.chunk_size,
    )
    cloud = estimate_nu(
        ctx.spec,
        run.m_excursions,
        run.n_max,
        stream,
        nu_L=nu_L,
        tol=run.tol,
        log_radius_cap=run.log_radius_cap,
        workers=ctx.workers,
        chunk_size=run.chunk_size,
    )
    write_cloud(ctx.out / CLOUD_FILE, cloud)

    if run.dump_excursions:
        dumped = []
        for j in range(run.dump_excursions):
            start = nu_L.points[j % nu_L.n_points]
            dumped.append((j, run_excursion(ctx.spec, start, run.n_max, stream.child(DUMP, j))))
        excursions_to_frame(dumped).to_csv(ctx.out / "excursions.csv", index=False)

    # one-step invariance of the cloud against a bounded test function
    def bump(u: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.exp(-np.abs(np.log(np.linalg.norm(u, axis=1))))

    gap, gap_se = invariance_gap(cloud, ctx.spec, bump, stream.child(RESAMPLE))
    ks_stat, ks_pvalue = stationarity_ks(nu_L, ctx.spec, stream.child(STATIONARITY), run.ladder_n_max)
    if ks_pvalue < 0.01:
        logger.warning(f"nu_L sample fails the one-step stationarity test (p = {ks_pvalue:.3g})")
    summary = {
        "n_points": cloud.n_points,
        "n_excursions": cloud.n_clusters,
        "total_mass": cloud.total_mass(),
        "truncated_fraction": cloud.meta.truncated_fraction,
        "nuL_truncated_fraction": nu_L.meta.truncated_fraction,
        "points_beyond_cap": cloud.meta.points_beyond_cap,
        "invariance_gap": gap,
        "invariance_gap_stderr": gap_se,
        "nuL_ks_statistic": ks_stat,
        "nuL_ks_pvalue": ks_pvalue,
    }
    write_json(ctx.out / "simulate.json", summary)
    return summary


def _bootstrap_cplus(ctx: RunContext, cloud: PointCloudMeasure, report: TailReport):
    n_boot = ctx.config.tail.n_boot
    used = report.annulus_table[report.annulus_table["reliable"]]
    if n_boot < 2 or used.empty:
        return None
    log_width = report.lattice_span if report.lattice_span > 0 else 1.0
    radii = cloud.radii()
    values = np.zeros(cloud.n_points)
    for _, row in used.iterrows():
        values += annulus_indicator(radii, row["alpha"] * row["z"], row["beta"] * row["z"])
    values /= len(used) * log_width
    replicates = cluster_bootstrap(cloud, values, n_boot, ctx.stream.child(BOOTSTRAP))
    return list(bootstrap_ci(replicates))


def run_tail(ctx: RunContext, cloud: Optional[PointCloudMeasure] = None) -> TailReport:
    if cloud is None:
        cloud = ctx.load_cloud()
    tail = ctx.config.tail
    spec = ctx.spec
    p = spec.lattice_span()

    report = estimate_Cplus(cloud, tail.z_grid(), lattice_p=p, min_hits=tail.min_hits)
    report.annulus_table.to_csv(ctx.out / "annuli.csv", index=False)

    try:
        report.sigma_hist = angular_measure(
            cloud, math.exp(tail.sigma_log_z_min), tail.angular_bins(cloud.dim)
        )
        report.sigma_hist.to_csv(ctx.out / "sigma.csv", index=False)
    except InsufficientSupport as e:
        logger.warning(f"angular measure skipped: {e}")

    report.bound_checks = bound_diagnostics(cloud, tail.bounds_grid(), spec)
    bounds_to_frame(report.bound_checks).to_csv(ctx.out / "bounds.csv", index=False)

    payload = report.to_dict()
    payload["bound_checks"] = {k: _finite(float(v)) for k, v in report.bound_checks.items()}
    payload["c_plus_bootstrap_ci99"] = _bootstrap_cplus(ctx, cloud, report)
    if p > 0:
        payload["lattice_ratios"] = [
            dict(zip(("z", "ratio", "stderr"), (math.exp(lz), *lattice_ratio(cloud, math.exp(lz), p))))
            for lz in LATTICE_RATIO_LOG_Z
        ]
    write_json(ctx.out / "tail.json", payload)
    return report


def run_potential(ctx: RunContext) -> Dict[str, Any]:
    validate_spec(ctx.spec)
    settings = ctx.config.potential
    psi = parse_psi(settings.psi, ctx.spec)
    quad = QuadParams(tol=settings.tol, method=settings.method)
    cert = certify_F(ctx.spec, psi, quad.tol)

    x = symmetric_grid(settings.xmax, settings.dx)
    A_psi: GridFn = potential_A(ctx.spec, psi, x, quad=quad, cert=cert)
    sup, residual = poisson_residual(ctx.spec, A_psi, psi)

    A_psi.write_csv(ctx.out / "potential_A.csv")
    residual.write_csv(ctx.out / "potential_residual.csv")
    sigma2 = ctx.spec.sigma2()
    summary = {
        "certificate": cert.to_dict(),
        "method": A_psi.tags["method"],
        "A_at_xmin": float(A_psi.values[0]),
        "A_at_xmax": float(A_psi.values[-1]),
        "limit_plus": -cert.K / sigma2,
        "limit_minus": cert.K / sigma2,
        "slope_plus": cert.J / sigma2,
        "poisson_residual_sup": _finite(sup),
        "richardson_order": A_psi.tags.get("richardson_order"),
    }
    write_json(ctx.out / "potential.json", summary)
    return summary


def run_crossval(ctx: RunContext, cloud: Optional[PointCloudMeasure] = None) -> CrossvalReport:
    if cloud is None:
        cloud = ctx.load_cloud()
    settings = ctx.config.potential
    x = np.arange(
        settings.crossval_xmin, settings.crossval_xmax + 0.5 * settings.crossval_dx, settings.crossval_dx
    )
    try:
        mc = estimate_Cplus(cloud, ctx.config.tail.z_grid(), min_hits=ctx.config.tail.min_hits)
    except InsufficientSupport as e:
        logger.warning(f"no Monte Carlo C_+ to compare with: {e}")
        mc = None

    report = cplus_crosscheck(
        ctx.spec,
        cloud,
        settings.gamma,
        x,
        ctx.stream,
        c_plus_mc=mc,
        rtol=settings.rtol,
        plateau_fraction=settings.plateau_fraction,
        check_convolution=True,
        workers=ctx.workers,
    )
    report.f_phi.write_csv(ctx.out / "f_phi.csv")
    report.psi_phi.write_csv(ctx.out / "psi_phi.csv")
    pd.DataFrame({"x": report.poisson.x, "z": report.poisson.values}).to_csv(
        ctx.out / "poisson_z.csv", index=False
    )
    write_json(ctx.out / "crossval.json", report.to_dict())
    report.raise_for_failure()
    return report


def run_duality(ctx: RunContext, s: float, depth: int) -> DualityResult:
    result = duality_check(ctx.spec, s, depth)
    (ctx.out / "duality.txt").write_text(result.to_text())
    result.to_frame().to_csv(ctx.out / "duality.csv", index=False)
    return result
