"""The regularized linear model: solution path, weight selection, and a
daily-recalibrated backtest.

Uses a shortened synthetic market so the whole script runs in well under
a minute; the real protocol is identical with larger windows.
"""
import numpy as np

from epfbench.data import calibration_window_slice, test_split
from epfbench.lear import backtest_lear, fit_day, forecast_day
from epfbench.metrics import MetricContext, from_dataset, score
from epfbench.synthetic import make_synthetic_dataset

ds = make_synthetic_dataset(n_days=700, seed=1)

# one calibration: 24 per-hour models on a 56-day window
cal = calibration_window_slice(ds, 600, 56)
model = fit_day(cal)
active = [hm.n_active for hm in model.hour_models]
print(f"56-day window: {cal.n_regression_rows} rows x 247 columns per hour")
print(f"selected weights, hours 0/12/23: "
      f"{model.hour_models[0].lam:.2f} / {model.hour_models[12].lam:.2f} / "
      f"{model.hour_models[23].lam:.2f}; active coefficients {min(active)}..{max(active)}")

forecast = forecast_day(model, ds, 600)
print(f"day-600 forecast MAE vs actual: {np.mean(np.abs(forecast - ds.prices[600])):.3f}")

# the backtest recalibrates every day on the window ending the previous day
_, period = test_split(ds, ds.dates[660], min_history=600)
fm = backtest_lear(ds, period, 56, on_day=lambda d, row, s: None)
history = from_dataset(ds)
actual = history.window(fm.dates[0], fm.dates[-1])
ctx = MetricContext(naive_kind="lag7", history=history)
print(f"backtest over {fm.n_days} days: MAE {score('MAE', actual, fm, ctx):.3f}, "
      f"rMAE {score('rMAE', actual, fm, ctx):.3f} (naive-week = 1)")
