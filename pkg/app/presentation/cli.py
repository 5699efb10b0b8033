from __future__ import annotations

import sys
from typing import Optional

import click

from app.application.errors import CapacityError
from app.application.services.enumeration import FAMILIES
from app.application.services.samplers import PATH_LAWS
from app.application.services.verify import CHECKS, SCALES
from app.infrastructure.datasets.writer import FORMATS


def _fail(message: str, err: Exception):
    click.echo(f"{message}: {err}", err=True)
    sys.exit(3 if isinstance(err, CapacityError) else 1)


def _emit_json(record, out: Optional[str]):
    from app.infrastructure.datasets.writer import DatasetWriter, dumps_json

    if out:
        filepath = DatasetWriter().write_json(record, out)
        click.echo(f"Saved {filepath}")
    else:
        click.echo(dumps_json(record))


def _emit_csv(rows: list[dict], columns, out: Optional[str]):
    from app.infrastructure.datasets.writer import DatasetWriter, format_csv

    if out:
        filepath = DatasetWriter().write_csv(rows, columns, out)
        click.echo(f"Saved {filepath}")
    else:
        click.echo(format_csv(rows, columns), nl=False)


@click.group()
def cli():
    ...


@cli.command()
@click.option(
    "--family",
    type=click.Choice(sorted(list(FAMILIES.keys())), case_sensitive=True),
    default="omega",
    show_default=True,
    help="Path family to count.",
)
@click.option("--L", "L", type=click.IntRange(min=1), required=True, help="Path length.")
@click.option("--workers", type=click.IntRange(min=1), default=None, help="Number of workers.")
@click.option("--L-max", "L_max", type=click.IntRange(min=0), default=None, help="Enumeration capacity.")
@click.option("--out", type=str, default=None, help="Output JSON file.")
def count(family: str, L: int, workers: Optional[int], L_max: Optional[int], out: Optional[str]):
    """Count a path family exactly."""
    from app.application.services.enumeration import CountService
    from app.application.settings import get_run_config

    config = get_run_config("count", L=L, workers=workers, L_max=L_max, out=out)
    try:
        table = CountService().count(family, config.L, workers=config.workers, L_max=config.L_max)
        _emit_json(table.to_dict(), config.out)
    except Exception as e:
        _fail("Failed to count paths", e)


@cli.command()
@click.option("--t-max", "t_max", type=click.IntRange(min=1), default=30, show_default=True, help="Largest excursion length.")
@click.option("--strip", "R", type=click.IntRange(min=0), default=None, help="Strip width R; emit strip tables instead.")
@click.option(
    "--format",
    "format_",
    type=click.Choice(FORMATS, case_sensitive=True),
    default="csv",
    show_default=True,
    help="Output format.",
)
@click.option("--out", type=str, default=None, help="Output file.")
def excursions(t_max: int, R: Optional[int], format_: str, out: Optional[str]):
    """Tabulate excursion counts and kernels, or the strip tables of one width."""
    from app.application.services.tables import EXCURSION_COLUMNS, STRIP_COLUMNS, TableService
    from app.application.settings import cache_dir
    from app.infrastructure.datasets.writer import write_dataset

    try:
        service = TableService()
        if R is None:
            rows, columns = service.excursion_table(t_max), EXCURSION_COLUMNS
        else:
            rows, columns = service.strip_table(R, t_max, cache_dir()), STRIP_COLUMNS
        if out:
            filepath = write_dataset(rows, format_, out, columns=columns)
            click.echo(f"Saved {filepath}")
        elif format_ == "json":
            _emit_json(rows, None)
        else:
            _emit_csv(rows, columns, None)
    except Exception as e:
        _fail("Failed to tabulate excursions", e)


@cli.command()
@click.option("--tolerance", type=click.FloatRange(min=0.0, min_open=True), default=None, help="Root-finding tolerance.")
@click.option("--t-max", "t_max", type=click.IntRange(min=2), default=None, help="Series horizon.")
@click.option("--out", type=str, default=None, help="Output JSON file.")
def tilt(tolerance: Optional[float], t_max: Optional[int], out: Optional[str]):
    """Solve for the tilt parameters and report the identity residuals."""
    from app.application.services.tables import TableService
    from app.application.settings import get_run_config

    config = get_run_config("tilt", tolerance=tolerance, t_max=t_max, out=out)
    try:
        summary = TableService().tilt_summary(config.tolerance, config.t_max)
        _emit_json(summary, config.out)
    except Exception as e:
        _fail("Failed to solve for the tilt", e)


@cli.command()
@click.option(
    "--law",
    type=click.Choice(sorted(PATH_LAWS), case_sensitive=True),
    required=True,
    help="Path law to sample from.",
)
@click.option("--length", "L", type=click.IntRange(min=1), required=True, help="Path length.")
@click.option("--n", "n_draws", type=click.IntRange(min=0), required=True, help="Number of draws.")
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True, help="Master seed.")
@click.option("--workers", type=click.IntRange(min=1), default=None, help="Number of workers.")
@click.option("--symmetrize", is_flag=True, help="Spread importance samples over all symmetries.")
@click.option("--out", type=str, default=None, help="Output CSV file.")
def sample(
    law: str,
    L: int,
    n_draws: int,
    seed: int,
    workers: Optional[int],
    symmetrize: bool,
    out: Optional[str],
):
    """Draw paths and emit their step strings and weights."""
    from app.application.services.samplers import SAMPLE_COLUMNS, SampleService
    from app.application.settings import get_run_config

    config = get_run_config("sample", L=L, n_draws=n_draws, seed=seed, workers=workers, out=out)
    try:
        rows = SampleService().sample(
            law,
            config.L,
            config.n_draws,
            seed=config.seed,
            workers=config.workers,
            symmetrize=symmetrize,
            L_max=config.L_max,
        )
        _emit_csv(rows, SAMPLE_COLUMNS, config.out)
    except Exception as e:
        _fail("Failed to sample paths", e)


@cli.command()
@click.option("--length", "L", type=click.IntRange(min=1), required=True, help="Path length.")
@click.option("--n", "n_draws", type=click.IntRange(min=1), required=True, help="Number of draws.")
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True, help="Master seed.")
@click.option("--workers", type=click.IntRange(min=1), default=None, help="Number of workers.")
@click.option("--eps", type=click.FloatRange(min=0.0, min_open=True), default=0.05, show_default=True, help="Concentration tolerance.")
@click.option("--out", type=str, default=None, help="Output JSON file.")
def report(L: int, n_draws: int, seed: int, workers: Optional[int], eps: float, out: Optional[str]):
    """Generate the scaling report at one path length."""
    from app.application.services.scaling import build_report
    from app.application.settings import get_run_config

    config = get_run_config("report", L=L, n_draws=n_draws, seed=seed, workers=workers, out=out)
    try:
        result = build_report(config.L, config.n_draws, seed=config.seed, workers=config.workers, eps=eps)
        _emit_json(result.to_dict(), config.out)
    except Exception as e:
        _fail("Failed to generate report", e)


@cli.command()
@click.option(
    "--scale",
    type=click.Choice(sorted(list(SCALES.keys())), case_sensitive=True),
    default="full",
    show_default=True,
    help="Sample sizes: 'quick' for a smoke run, 'full' for acceptance.",
)
@click.option(
    "--check",
    "checks",
    type=click.Choice(list(CHECKS.keys()), case_sensitive=True),
    multiple=True,
    help="Check to run; repeat for several. All checks by default.",
)
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True, help="Master seed.")
@click.option("--workers", type=click.IntRange(min=1), default=None, help="Number of workers.")
@click.option("--out", type=str, default=None, help="Output JSON file.")
def verify(scale: str, checks: tuple[str, ...], seed: int, workers: Optional[int], out: Optional[str]):
    """Run the acceptance checks and report pass/fail per check."""
    from app.application.services.verify import VerifyService
    from app.application.settings import get_run_config

    config = get_run_config("verify", seed=seed, workers=workers, out=out)
    try:
        result = VerifyService().run(checks or None, scale=scale, seed=config.seed, workers=config.workers)
        _emit_json(result, config.out)
    except Exception as e:
        _fail("Verification failed", e)
    if not result["passed"]:
        failed = [name for name, r in result["checks"].items() if not r["passed"]]
        click.echo(f"Failed checks: {', '.join(failed)}", err=True)
        sys.exit(1)
