"""affine-critical command line: validate, simulate, tail, potential, crossval, duality."""

import functools
import json
import logging
import sys
from pathlib import Path

import click
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from src.config.settings import load_run_config
from src.pipeline.runner import (
    RunContext,
    run_crossval,
    run_duality,
    run_potential,
    run_simulate,
    run_tail,
    run_validate,
)
from src.utils.errors import AffineCriticalError, ConfigError, InconsistentEstimates

console = Console()
logger = logging.getLogger(__name__)

PASS_EXTRA = {"ignore_unknown_options": True, "allow_extra_args": True}

# subcommand flags that stand for a config key
CONFIG_FLAGS = {
    "psi": "potential.psi",
    "xmax": "potential.xmax",
    "dx": "potential.dx",
    "tol": "potential.tol",
}
FAMILY_PARAMS = {"lognormal": "s", "two_point": "p_span", "shifted_exp": "s"}


def family_override(family: str) -> str:
    """``kind[:param]`` (or a JSON law) as a ``model.a_law`` override."""
    if family.lstrip().startswith("{"):
        return f"model.a_law={family}"
    kind, _, param = family.partition(":")
    if kind not in FAMILY_PARAMS:
        raise ConfigError(f"unknown family '{kind}', expected one of {sorted(FAMILY_PARAMS)} or a JSON law")
    law = {"kind": kind}
    if param:
        try:
            law[FAMILY_PARAMS[kind]] = float(param)
        except ValueError as e:
            raise ConfigError(f"family parameter '{param}' is not a number") from e
    return f"model.a_law={json.dumps(law)}"


def _setup_logging(level: str) -> None:
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), rich_tracebacks=True)],
        force=True,
    )


def run_options(fn):
    """Options shared by every subcommand that reads a run config."""

    @click.option("--config", "config_path", type=click.Path(dir_okay=False, path_type=Path), help="JSON run config")
    @click.option("--set", "overrides", multiple=True, help="Dotted override, e.g. --set run.seed=7")
    @click.option("--out", type=click.Path(file_okay=False, path_type=Path), help="Output directory")
    @click.option("--workers", type=int, help="Worker processes")
    @click.option("--cloud", type=click.Path(dir_okay=False, path_type=Path), help="Cloud file to read")
    @click.pass_context
    @functools.wraps(fn)
    def wrapper(ctx, config_path, overrides, out, workers, cloud, **kwargs):
        try:
            dotted = [arg.lstrip("-") for arg in ctx.args]
            extra = list(overrides) + dotted
            if workers is not None:
                extra.append(f"run.workers={workers}")
            for flag, key in CONFIG_FLAGS.items():
                value = kwargs.pop(flag, None)
                if value is not None:
                    extra.append(f"{key}={value}")
            family = kwargs.pop("family", None)
            if family is not None:
                extra.append(family_override(family))
            config = load_run_config(config_path, extra)
            if not ctx.obj.get("verbose"):
                logging.getLogger().setLevel(config.log_level.upper())
            run_ctx = RunContext(config=config, out=Path(out or config.output_dir), cloud_path=cloud)
            return fn(run_ctx.prepare(), **kwargs)
        except AffineCriticalError as e:
            console.print(f"[bold red]{type(e).__name__}: {e}[/bold red]")
            sys.exit(e.exit_code)

    return wrapper


@click.group()
@click.option("--verbose", is_flag=True, help="Debug logging")
@click.pass_context
def cli(ctx, verbose):
    """Critical affine recursion: invariant measure, tail constant and potential kernel."""
    ctx.ensure_object(dict)
    ctx.obj["verbose"] = verbose
    _setup_logging("DEBUG" if verbose else "INFO")


@cli.command(context_settings=PASS_EXTRA)
@run_options
def validate(run_ctx: RunContext):
    """Check hypothesis (H) for the configured law."""
    report = run_validate(run_ctx)
    table = Table(title="Hypothesis checks")
    table.add_column("Check", style="cyan")
    table.add_column("Passed", style="green")
    table.add_column("Detail", style="yellow")
    for check in report.checks:
        table.add_row(check.name, "✓" if check.passed else "✗", check.detail)
    console.print(table)
    console.print(f"lattice_span = {report.lattice_span:g}")
    report.raise_for_failure()
    console.print(
        f"[bold green]✓ law accepted[/bold green] sigma2={report.sigma2:.6g} ({run_ctx.spec.a_law.kind})"
    )


@cli.command(context_settings=PASS_EXTRA)
@run_options
def simulate(run_ctx: RunContext):
    """Sample nu_L, run the excursions and write the nu cloud."""
    console.print("[bold blue]Simulating excursions...[/bold blue]")
    summary = run_simulate(run_ctx)
    table = Table(title="nu cloud")
    table.add_column("Quantity", style="cyan")
    table.add_column("Value", style="green")
    for key, value in summary.items():
        table.add_row(key, f"{value:.6g}" if isinstance(value, float) else f"{value:,}")
    console.print(table)


@cli.command(context_settings=PASS_EXTRA)
@run_options
def tail(run_ctx: RunContext):
    """Annulus masses, C_+, angular measure and bound diagnostics."""
    report = run_tail(run_ctx)
    table = Table(title="Annuli")
    for col in ("z", "mass", "stderr", "n_excursions", "reliable"):
        table.add_column(col, style="cyan" if col == "z" else "green")
    for _, row in report.annulus_table.iterrows():
        table.add_row(
            f"{row['z']:.4g}", f"{row['mass']:.5g}", f"{row['stderr']:.2g}",
            f"{int(row['n_excursions']):,}", "✓" if row["reliable"] else "✗",
        )
    console.print(table)
    lo, hi = report.c_plus_ci()
    console.print(
        f"C_+ = [bold]{report.c_plus:.5g}[/bold] ± {report.c_plus_stderr:.2g} "
        f"(99% CI [{lo:.4g}, {hi:.4g}], chi2 p={report.chi2_pvalue:.3g})"
    )


@cli.command(context_settings=PASS_EXTRA)
@click.option("--psi", help="Right-hand side: r, rshift:c or a CSV file")
@click.option("--family", help="Multiplier law, e.g. lognormal:1 or two_point:1")
@click.option("--xmax", type=float, help="Half-width of the x grid")
@click.option("--dx", type=float, help="Grid step")
@click.option("--tol", type=float, help="Quadrature tolerance")
@run_options
def potential(run_ctx: RunContext):
    """A psi on a symmetric grid, with the Poisson residual."""
    summary = run_potential(run_ctx)
    table = Table(title=f"Potential ({summary['method']})")
    table.add_column("Quantity", style="cyan")
    table.add_column("Value", style="green")
    for key in ("A_at_xmin", "A_at_xmax", "limit_minus", "limit_plus", "slope_plus", "poisson_residual_sup"):
        value = summary[key]
        table.add_row(key, "n/a" if value is None else f"{value:.8g}")
    console.print(table)


@cli.command(context_settings=PASS_EXTRA)
@run_options
def crossval(run_ctx: RunContext):
    """Compare the plateau of f_Phi, -2 K(psi_Phi)/sigma^2 and the annulus C_+."""
    report = run_crossval(run_ctx)
    table = Table(title=f"Cross-validation, gamma={report.gamma:g}")
    table.add_column("Estimate", style="cyan")
    table.add_column("Value", style="green")
    table.add_column("Stderr", style="yellow")
    table.add_row("T plateau", f"{report.T_plateau:.5g}", f"{report.plateau.mean_stderr:.2g}")
    table.add_row("T potential", f"{report.T_potential:.5g}", f"{report.T_potential_stderr:.2g}")
    table.add_row("C_+ potential", f"{report.cplus_pot:.5g}", f"{report.cplus_pot_stderr:.2g}")
    if report.cplus_mc is not None:
        table.add_row("C_+ annuli", f"{report.cplus_mc:.5g}", f"{report.cplus_mc_stderr:.2g}")
    table.add_row("J(psi)", f"{report.J_psi:.3g}", f"{report.J_psi_stderr:.2g}")
    console.print(table)
    console.print("[bold green]✓ estimates agree[/bold green]")


@cli.command(context_settings=PASS_EXTRA)
@click.option("--s", "s", type=float, default=0.5, show_default=True, help="Weight base, alpha_i = s^i")
@click.option("--depth", type=int, default=20, show_default=True, help="Enumeration depth")
@run_options
def duality(run_ctx: RunContext, s: float, depth: int):
    """Exact check of the ladder duality identity for a finite-support law."""
    result = run_duality(run_ctx, s, depth)
    console.print(f"lhs = {result.lhs:.8f}")
    console.print(f"rhs = {result.rhs:.8f}")
    console.print(f"truncation bound = {result.bound:.3e}")
    if not result.consistent:
        raise InconsistentEstimates(f"|lhs - rhs| = {abs(result.lhs - result.rhs):.3e} exceeds the bound")


if __name__ == "__main__":
    cli()
