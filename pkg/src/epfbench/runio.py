"""File formats shared by the CLI and the library.

Forecast CSV: header ``date,h1,...,h24``, ISO dates, plain decimal
points.  Appending is safe: interrupted backtests resume from the last
completed date.  Config files are ``key=value`` lines; metric reports and
timing logs are small CSVs.
"""
from __future__ import annotations

import csv
from datetime import date
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ParseError
from .metrics import ForecastMatrix

FORECAST_HEADER = ["date", *[f"h{h}" for h in range(1, 25)]]


def write_forecast_csv(fm: ForecastMatrix, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FORECAST_HEADER)
        for day, row in zip(fm.dates, fm.values):
            writer.writerow([day.isoformat()] + [repr(float(v)) for v in row])
    return path


def append_forecast_row(path, day: date, row) -> None:
    """Append one day (creating the file and header when missing)."""
    path = Path(path)
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(FORECAST_HEADER)
        writer.writerow([day.isoformat()] + [repr(float(v)) for v in row])


def read_forecast_csv(path) -> ForecastMatrix:
    path = Path(path)
    dates, rows = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != FORECAST_HEADER:
            raise ParseError(f"{path} does not look like a forecast CSV", line=1)
        for lineno, raw in enumerate(reader, start=2):
            if not raw:
                continue
            if len(raw) != 25:
                raise ParseError(f"expected 25 fields, got {len(raw)}", line=lineno)
            try:
                dates.append(date.fromisoformat(raw[0]))
                rows.append([float(v) for v in raw[1:]])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
    return ForecastMatrix(dates=tuple(dates), values=np.asarray(rows))


def completed_dates(path) -> set:
    """Dates already present in a (possibly partial) forecast CSV."""
    path = Path(path)
    if not path.exists():
        return set()
    done = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for raw in reader:
            if raw:
                done.add(date.fromisoformat(raw[0]))
    return done


def parse_config_file(path) -> dict:
    """Line-based ``key=value`` file; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def write_config_file(config: dict, path) -> Path:
    path = Path(path)
    lines = [f"{k}={v}" for k, v in sorted(config.items())]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_metric_report(rows, path) -> Path:
    """Rows of (model, metric, value) to the report CSV."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "metric", "value"])
        for model, metric, value in rows:
            writer.writerow([model, metric, repr(float(value))])
    return path


def read_metric_report(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        return [(m, k, float(v)) for m, k, v in reader if m]


def write_timing_log(entries, path) -> Path:
    """Per-day recalibration wall times: rows of (date, seconds)."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "seconds"])
        for day, seconds in entries:
            writer.writerow([day.isoformat(), f"{seconds:.6f}"])
    return path


def read_timing_log(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        return [(date.fromisoformat(d), float(s)) for d, s in reader if d]
