"""CLI application for misclass-qlearn."""

from __future__ import annotations

from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Annotated, Any, Optional

import typer
from pydantic import ValidationError
from rich.console import Console

from misclass_qlearn import __version__
from misclass_qlearn.adapters.report import (
    PREDICTION_COLUMNS,
    SENSITIVITY_COLUMNS,
    SIMULATION_COLUMNS,
    Record,
    prediction_records,
    prediction_table,
    sensitivity_table,
    simulation_records,
    simulation_table,
    write_report,
)
from misclass_qlearn.adapters.sensitivity import run_sensitivity
from misclass_qlearn.core.errors import MisclassQLearnError
from misclass_qlearn.core.simulation import Scenario, run_predictive, run_replications
from misclass_qlearn.utils.config import (
    config_kind,
    get_settings,
    load_analysis_config,
    load_scenario_config,
)
from misclass_qlearn.utils.logger import setup_logging

app = typer.Typer(
    name="mql",
    help="Q-learning for dynamic treatment regimes with a misclassified binary outcome",
    add_completion=False,
)

console = Console()

CONFIG_ERROR_EXIT = 1
NUMERICAL_ERROR_EXIT = 3


def version_callback(value: bool) -> None:
    """Print version and exit."""
    if value:
        console.print(f"misclass-qlearn v{__version__}")
        raise typer.Exit()


@app.callback()
def main(
    _: Annotated[
        Optional[bool],
        typer.Option(
            "--version",
            "-v",
            help="Show version and exit",
            callback=version_callback,
            is_eager=True,
        ),
    ] = None,
    verbose: Annotated[
        bool,
        typer.Option("--verbose", "-V", help="Enable verbose output"),
    ] = False,
    quiet: Annotated[
        bool,
        typer.Option("--quiet", "-q", help="Suppress non-error output"),
    ] = False,
) -> None:
    """Q-learning with misclassified binary outcomes: simulations and sensitivity analyses."""
    log_level = "DEBUG" if verbose else get_settings().log_level
    setup_logging(level=log_level, quiet=quiet)


@contextmanager
def _exit_on_error() -> Iterator[None]:
    """Turn package errors into their exit codes with a one-line message."""
    try:
        yield
    except MisclassQLearnError as e:
        console.print(f"[red]Error:[/red] {e}")
        raise typer.Exit(e.exit_code) from None
    except ValidationError as e:
        console.print(f"[red]Invalid configuration:[/red] {e}")
        raise typer.Exit(CONFIG_ERROR_EXIT) from None


@app.command()
def simulate(
    scenario: Annotated[
        Optional[Scenario],
        typer.Argument(help="Scenario to simulate (overrides the config file)"),
    ] = None,
    config: Annotated[
        Optional[Path],
        typer.Option("--config", "-c", help="YAML config with a 'simulation' section"),
    ] = None,
    seed: Annotated[Optional[int], typer.Option("--seed", help="Run seed")] = None,
    reps: Annotated[
        Optional[int], typer.Option("--reps", "-r", help="Number of replications")
    ] = None,
    n: Annotated[Optional[int], typer.Option("--n", help="Training sample size")] = None,
    rho: Annotated[Optional[float], typer.Option("--rho", help="Validation ratio")] = None,
    gamma10: Annotated[
        Optional[float], typer.Option("--gamma10", help="P(Y*=1 | Y=0)")
    ] = None,
    gamma01: Annotated[
        Optional[float], typer.Option("--gamma01", help="P(Y*=0 | Y=1)")
    ] = None,
    bootstrap: Annotated[
        Optional[int],
        typer.Option("--bootstrap", "-B", help="Bootstrap samples per fit (0 disables coverage)"),
    ] = None,
    out: Annotated[
        Optional[Path], typer.Option("--out", "-o", help="Report file")
    ] = None,
    output_format: Annotated[
        Optional[str], typer.Option("--format", "-f", help="Report format (csv, json)")
    ] = None,
    threads: Annotated[
        Optional[int],
        typer.Option("--threads", "-t", min=1, help="Worker threads (MQL_THREADS)"),
    ] = None,
) -> None:
    """Run a Monte Carlo study: one_stage, two_stage or predictive."""
    overrides: dict[str, Any] = {
        "scenario": scenario,
        "seed": seed,
        "replications": reps,
        "n": n,
        "rho": rho,
        "gamma10": gamma10,
        "gamma01": gamma01,
        "bootstrap_samples": bootstrap,
    }
    workers = threads if threads is not None else get_settings().threads

    with _exit_on_error():
        run = load_scenario_config(config, overrides, {"path": out, "format": output_format})
        records: list[Record] = []
        predictive = run.scenarios[0].scenario is Scenario.PREDICTIVE
        exceeded = False
        for cell in run.scenarios:
            if predictive:
                predictions = run_predictive(cell, threads=workers)
                records.extend(prediction_records(cell, predictions))
                exceeded |= any(s.failure_exceeded for s in predictions.values())
            else:
                summaries = run_replications(cell, threads=workers)
                records.extend(simulation_records(cell, summaries))
                exceeded |= any(s.failure_exceeded for s in summaries.values())

        if predictive:
            console.print(prediction_table(records))
        else:
            console.print(simulation_table(records))
        if run.output.path is not None:
            columns = PREDICTION_COLUMNS if predictive else SIMULATION_COLUMNS
            path = write_report(records, columns, run.output.path, run.output.format)
            console.print(f"[green]✓[/green] Report written to {path}")

    if exceeded:
        console.print("[yellow]More than 5% of replications failed for some method[/yellow]")
        raise typer.Exit(NUMERICAL_ERROR_EXIT)


@app.command()
def analyze(
    config: Annotated[
        Path,
        typer.Argument(help="YAML config with an 'analysis' section"),
    ],
    seed: Annotated[Optional[int], typer.Option("--seed", help="Bootstrap seed")] = None,
    bootstrap: Annotated[
        Optional[int],
        typer.Option("--bootstrap", "-B", help="Bootstrap samples (0 disables intervals)"),
    ] = None,
    out: Annotated[
        Optional[Path], typer.Option("--out", "-o", help="Report file")
    ] = None,
    output_format: Annotated[
        Optional[str], typer.Option("--format", "-f", help="Report format (csv, json)")
    ] = None,
) -> None:
    """Sensitivity analysis of a real dataset over assumed misclassification rates."""
    overrides: dict[str, Any] = {
        "seed": seed,
        "bootstrap_samples": bootstrap,
        "output_path": out,
        "output_format": output_format,
    }
    with _exit_on_error():
        settings = load_analysis_config(config, overrides)
        report = run_sensitivity(settings)
        records = report.records()

        console.print(
            f"[bold]{report.n_rows}[/bold] rows, "
            f"[bold]{report.n_validation}[/bold] with a validated outcome"
        )
        console.print(sensitivity_table(records, settings.level))
        for result in report.results:
            if result.rule is not None:
                rates = (
                    "" if result.rates is None
                    else f" ({result.rates.gamma10:g}, {result.rates.gamma01:g})"
                )
                flags = ", ".join(result.fit.flags) if result.fit is not None else ""
                note = f" [yellow](flags: {flags})[/yellow]" if flags else ""
                console.print(f"  {result.method.value}{rates}: {result.rule}{note}")
        if report.flagged:
            console.print(
                f"[yellow]{len(report.flagged)} fit(s) failed an identifiability check; "
                "see the flags column[/yellow]"
            )
        if settings.output_path is not None:
            path = write_report(
                records, SENSITIVITY_COLUMNS, settings.output_path, settings.output_format
            )
            console.print(f"[green]✓[/green] Report written to {path}")

    if report.error_count:
        console.print(f"[yellow]{report.error_count} fit(s) failed; see the report[/yellow]")
        raise typer.Exit(NUMERICAL_ERROR_EXIT)


@app.command("validate-config")
def validate_config(
    config: Annotated[Path, typer.Argument(help="YAML config to check")],
) -> None:
    """Check a config file without running anything."""
    with _exit_on_error():
        kind = config_kind(config)
        if kind == "analysis":
            settings = load_analysis_config(config)
            console.print(
                f"[green]✓[/green] Valid analysis config: {settings.n_stages} stage(s), "
                f"{len(settings.gamma_grid)} grid point(s)"
            )
        else:
            run = load_scenario_config(config)
            first = run.scenarios[0]
            console.print(
                f"[green]✓[/green] Valid simulation config: {first.scenario.value}, "
                f"{len(run.scenarios)} cell(s), {first.replications} replication(s) each"
            )


if __name__ == "__main__":
    app()
