"""Datasets, calendar normalization, and calibration windows.

Generates a synthetic market, writes/parses the canonical CSV schema,
shows how daylight-saving days collapse onto the 24-hour grid, and
slices rolling calibration windows.
"""
import tempfile
from datetime import date
from pathlib import Path

import numpy as np

from epfbench.data import (
    calibration_window_slice,
    normalize_calendar,
    parse_dataset_csv,
    test_split,
    write_dataset_csv,
)
from epfbench.synthetic import make_synthetic_dataset

ds = make_synthetic_dataset(n_days=2184, start=date(2013, 1, 1), seed=0)
print(f"synthetic market: {ds.n_days} days, {ds.dates[0]} .. {ds.dates[-1]}")
print(f"price panel shape: {ds.prices.shape}, share of negative prices: "
      f"{np.mean(ds.prices < 0):.4f}")

with tempfile.TemporaryDirectory() as tmp:
    path = write_dataset_csv(ds, Path(tmp) / "SYN.csv")
    back = parse_dataset_csv(path)
    print(f"CSV round trip: {back.n_days} days, max abs diff "
          f"{np.max(np.abs(back.prices - ds.prices)):.2e}")

# daylight saving: a 25-reading day averages the duplicated hour,
# a 23-reading day interpolates the missing one
fall_back = normalize_calendar(list(range(24)) + [2], list(range(24)) + [10.0])
print(f"25-hour day, values (2.0, 10.0) at the duplicated hour -> {fall_back[2]}")
spring = normalize_calendar([h for h in range(24) if h != 2],
                            [float(h) for h in range(24) if h != 2])
print(f"23-hour day, neighbors (1.0, 3.0) -> interpolated {spring[2]}")

history, period = test_split(ds, date(2016, 12, 27))
print(f"test period: {period.start_date} .. {period.end_date} "
      f"({period.n_days} days = {period.n_days // 7} weeks)")

for window in (56, 84, 1092, 1456):
    cal = calibration_window_slice(ds, date(2017, 2, 15), window)
    print(f"window {window:5d}: {cal.dates[0]} .. {cal.dates[-1]}, "
          f"{cal.n_regression_rows} regression rows")
