"""Moderate-deviation rates for parametric estimators.

Thin wrapper over the C++ core; see the README for the experiment config keys.
"""

import json
from pathlib import Path

from ._modev import (
    ConfigError,
    EmptyDirError,
    Error,
    BudgetError,
    DomainError,
    PreconditionError,
    config_keys,
    draw_sample,
    emit_report,
    event_probability,
    families,
    fisher_information,
    mle,
    normalized_rate,
    rate_functional,
    run_experiment,
)

__all__ = [
    "BudgetError",
    "ConfigError",
    "DomainError",
    "EmptyDirError",
    "Error",
    "PreconditionError",
    "config_keys",
    "draw_sample",
    "emit_report",
    "event_probability",
    "families",
    "fisher_information",
    "mle",
    "normalized_rate",
    "rate_functional",
    "read_rate_curve",
    "report",
    "run_experiment",
]


def read_rate_curve(path):
    """Rows of a rate-curve CSV as dicts with numeric fields converted."""
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        cells = line.split(",")
        row = {}
        for key, cell in zip(header, cells):
            row[key] = cell if key == "method" else float(cell)
        rows.append(row)
    return rows


def report(results_dir, out_dir=None):
    """emit_report, parsed."""
    return json.loads(emit_report(str(results_dir), None if out_dir is None else str(out_dir)))
