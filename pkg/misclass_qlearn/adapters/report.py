"""Report records, CSV/JSON serialization and console summaries.

Column names and order are fixed per report kind and shared by both file
formats. Files carry full-precision values; console tables show three decimals.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any

import pandas as pd
from rich.table import Table

from misclass_qlearn.core.errors import ConfigError
from misclass_qlearn.core.qlearn import Method
from misclass_qlearn.core.simulation import (
    PREDICTION_FIELDS,
    PredictionSummary,
    ReplicationSummary,
    ScenarioConfig,
)
from misclass_qlearn.utils.file_ops import write_file_safe
from misclass_qlearn.utils.logger import get_logger

logger = get_logger(__name__)

Record = dict[str, Any]

SIMULATION_COLUMNS: tuple[str, ...] = (
    "scenario",
    "n",
    "rho",
    "gamma10",
    "gamma01",
    "method",
    "parameter",
    "truth",
    "bias",
    "se",
    "rmse",
    "cr",
    "replications",
    "failures",
    "separations",
)

PREDICTION_COLUMNS: tuple[str, ...] = (
    "scenario",
    "n",
    "test_n",
    "rho",
    "gamma10",
    "gamma01",
    "method",
    *PREDICTION_FIELDS,
    "replications",
    "failures",
)

SENSITIVITY_COLUMNS: tuple[str, ...] = (
    "method",
    "gamma10",
    "gamma01",
    "parameter",
    "term",
    "estimate",
    "se",
    "ci_low",
    "ci_high",
    "rule",
    "flags",
    "error",
)

METHOD_LABELS: Mapping[Method, str] = {
    Method.VALIDATION_ONLY: "Validation",
    Method.NAIVE: "Naive",
    Method.MLE_CORRECTED: "MLE",
}


def _cell(config: ScenarioConfig) -> Record:
    return {
        "scenario": config.scenario.value,
        "n": config.n,
        "rho": config.rho,
        "gamma10": config.gamma10,
        "gamma01": config.gamma01,
    }


def simulation_records(
    config: ScenarioConfig, summaries: Mapping[Method, ReplicationSummary]
) -> list[Record]:
    """One record per (method, parameter) of a simulation cell."""
    records: list[Record] = []
    for method, summary in summaries.items():
        for k, parameter in enumerate(summary.parameters):
            records.append(
                {
                    **_cell(config),
                    "method": method.value,
                    "parameter": parameter,
                    "truth": float(summary.truth[k]),
                    "bias": float(summary.bias[k]),
                    "se": float(summary.se[k]),
                    "rmse": float(summary.rmse[k]),
                    "cr": float(summary.coverage[k]),
                    "replications": summary.replications,
                    "failures": summary.failure_count,
                    "separations": summary.separation_count,
                }
            )
    return records


def prediction_records(
    config: ScenarioConfig, summaries: Mapping[Method, PredictionSummary]
) -> list[Record]:
    """One record per method of a predictive cell."""
    return [
        {
            **_cell(config),
            "test_n": config.test_n,
            "method": method.value,
            **{key: summary.metrics[key] for key in PREDICTION_FIELDS},
            "replications": summary.replications,
            "failures": summary.failure_count,
        }
        for method, summary in summaries.items()
    ]


def _json_value(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def render_csv(records: Sequence[Record], columns: Sequence[str]) -> str:
    """CSV text with a header row; missing values are empty cells."""
    frame = pd.DataFrame.from_records(list(records), columns=list(columns))
    return str(frame.to_csv(index=False, lineterminator="\n"))


def render_json(records: Sequence[Record], columns: Sequence[str]) -> str:
    """JSON array of records with keys in column order; NaN becomes null."""
    ordered = [{c: _json_value(r.get(c)) for c in columns} for r in records]
    return json.dumps(ordered, indent=2) + "\n"


def write_report(
    records: Sequence[Record],
    columns: Sequence[str],
    path: Path | str,
    output_format: str = "csv",
) -> Path:
    """
    Write records as CSV or JSON.

    Raises:
        ConfigError: unknown format or unwritable path
    """
    path = Path(path)
    if output_format == "csv":
        content = render_csv(records, columns)
    elif output_format == "json":
        content = render_json(records, columns)
    else:
        raise ConfigError(f"Unknown output format: {output_format}")
    if not write_file_safe(path, content):
        raise ConfigError(f"Cannot write report to {path}")
    logger.info(f"Wrote {len(records)} records to {path}")
    return path


def _fmt(value: Any, digits: int = 3) -> str:
    if value is None or (isinstance(value, float) and not math.isfinite(value)):
        return "-"
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return str(value)


def _percent(value: Any) -> str:
    if value is None or (isinstance(value, float) and not math.isfinite(value)):
        return "-"
    return f"{100.0 * float(value):.1f}"


def _method_label(value: str) -> str:
    return METHOD_LABELS.get(Method(value), value)


def simulation_table(records: Iterable[Record], title: str = "Simulation") -> Table:
    """Bias, SE, RMSE and CR% per (cell, method, parameter)."""
    table = Table(title=title)
    for header in ("n", "rho", "(g10, g01)", "Method", "Parameter"):
        table.add_column(header, style="cyan" if header == "Method" else None)
    for header in ("Bias", "SE", "RMSE", "CR%"):
        table.add_column(header, justify="right")
    for r in records:
        table.add_row(
            str(r["n"]),
            _fmt(r["rho"], 2),
            f"({r['gamma10']:g}, {r['gamma01']:g})",
            _method_label(r["method"]),
            r["parameter"],
            _fmt(r["bias"]),
            _fmt(r["se"]),
            _fmt(r["rmse"]),
            _percent(r["cr"]),
        )
    return table


def prediction_table(records: Iterable[Record], title: str = "Prediction") -> Table:
    """Regime accuracy and outcome error rate, sensitivity, specificity in percent."""
    table = Table(title=title)
    for header in ("rho", "(g10, g01)", "Method"):
        table.add_column(header, style="cyan" if header == "Method" else None)
    for header in ("Stage 2", "Stage 1", "Both", "Error", "Sens.", "Spec."):
        table.add_column(header, justify="right")
    for r in records:
        table.add_row(
            _fmt(r["rho"], 2),
            f"({r['gamma10']:g}, {r['gamma01']:g})",
            _method_label(r["method"]),
            *(_percent(r[key]) for key in PREDICTION_FIELDS),
        )
    return table


def sensitivity_table(
    records: Iterable[Record], level: float = 0.95, title: str = "Sensitivity analysis"
) -> Table:
    """Estimates with bootstrap SE and percentile interval per grid point."""
    table = Table(title=title)
    for header in ("Method", "(g10, g01)", "Term"):
        table.add_column(header, style="cyan" if header == "Method" else None)
    for header in ("Estimate", "SE", f"{100.0 * level:g}% CI"):
        table.add_column(header, justify="right")
    table.add_column("Flags", style="yellow")
    for r in records:
        rates = "-" if r["gamma10"] is None else f"({r['gamma10']:g}, {r['gamma01']:g})"
        if r.get("estimate") is None:
            error = f"[red]{r.get('error') or 'failed'}[/red]"
            table.add_row(_method_label(r["method"]), rates, "-", error, "", "", "")
            continue
        interval = f"({_fmt(r['ci_low'])}, {_fmt(r['ci_high'])})"
        table.add_row(
            _method_label(r["method"]),
            rates,
            r["term"],
            _fmt(r["estimate"]),
            _fmt(r["se"]),
            interval,
            r.get("flags") or "",
        )
    return table
