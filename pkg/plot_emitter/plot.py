#!/usr/bin/env python3
"""Render convergence figures from solver CSV outputs.

Reads the delimited files the solver CLI writes (``summary.csv`` with columns
``t,H,H_erg,Znorm,Znorm_erg,eps``; optionally ``state.csv`` with one column
per dual-state coordinate) and emits matplotlib figures.  Input files are
never modified and the same input and options always produce the same image.

    plot.py --in summary.csv --series eps --log-y --out eps.png
    plot.py --in state.csv --series theta --out theta.png
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

SERIES_LABELS = {
    "H": "dual objective",
    "H_erg": "dual objective (ergodic)",
    "Znorm": "consensus residual",
    "Znorm_erg": "consensus residual (ergodic)",
    "eps": "relative error",
}


class PlotError(Exception):
    pass


@dataclass
class PlotSpec:
    input_csv: str
    output: str
    series: list = field(default_factory=lambda: ["eps"])
    log_y: bool = False
    title: str = None


def read_csv(path):
    """Parse a solver CSV; malformed content reports the offending line."""
    path = Path(path)
    if not path.exists():
        raise PlotError(f"{path}: no such file")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PlotError(f"{path}: empty CSV") from None
        columns = {name: [] for name in header}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise PlotError(
                    f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}"
                )
            for name, value in zip(header, row):
                try:
                    columns[name].append(float(value))
                except ValueError:
                    raise PlotError(
                        f"{path}: line {lineno}: non-numeric value {value!r}"
                    ) from None
    if not columns[header[0]]:
        raise PlotError(f"{path}: no data rows")
    return header, {name: np.asarray(vals) for name, vals in columns.items()}


def resolve_series(header, requested):
    """Map a requested name to concrete columns; prefixes select groups.

    ``theta`` (or any other prefix) picks every ``<prefix>_...`` column of a
    state file, giving one line per agent coordinate.
    """
    if requested in header:
        return [requested]
    grouped = [name for name in header if name.startswith(requested + "_")]
    if grouped:
        return grouped
    raise PlotError(f"no column or column group named {requested!r} in the CSV")


def emit(spec: PlotSpec) -> Path:
    """Render the requested series against the step column; returns the path."""
    header, columns = read_csv(spec.input_csv)
    if "t" not in header:
        raise PlotError(f"{spec.input_csv}: missing step column 't'")
    t = columns["t"]

    fig, ax = plt.subplots(figsize=(6.4, 4.0), dpi=120)
    for requested in spec.series:
        for name in resolve_series(header, requested):
            values = columns[name]
            if spec.log_y:
                values = np.where(values > 0, values, np.nan)
            label = SERIES_LABELS.get(name, name)
            ax.plot(t, values, lw=1.2, label=label)
    if spec.log_y:
        ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.grid(True, alpha=0.3)
    if spec.title:
        ax.set_title(spec.title)
    n_lines = len(ax.get_lines())
    if 1 < n_lines <= 12:
        ax.legend(fontsize=8)
    elif n_lines == 1:
        ax.set_ylabel(ax.get_lines()[0].get_label())
    fig.tight_layout()
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, metadata={"Software": None} if out.suffix == ".png" else None)
    plt.close(fig)
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--in", dest="input_csv", required=True, help="input CSV file")
    parser.add_argument(
        "--series",
        default="eps",
        help="comma-separated column names or column-group prefixes",
    )
    parser.add_argument("--log-y", action="store_true")
    parser.add_argument("--out", required=True, help="output image file")
    parser.add_argument("--title", default=None)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    spec = PlotSpec(
        input_csv=args.input_csv,
        output=args.out,
        series=[s.strip() for s in args.series.split(",") if s.strip()],
        log_y=args.log_y,
        title=args.title,
    )
    try:
        emit(spec)
    except PlotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
