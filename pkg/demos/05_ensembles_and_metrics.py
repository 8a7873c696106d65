"""Calibration-window ensembles and the full accuracy-metric suite."""
import numpy as np

from epfbench.data import test_split
from epfbench.ensemble import run_lear_ensemble
from epfbench.metrics import MetricContext, evaluate_all, from_dataset, mae, naive_forecast
from epfbench.synthetic import make_synthetic_dataset

ds = make_synthetic_dataset(n_days=560, seed=4)
_, period = test_split(ds, ds.dates[540], min_history=500)

# the stock ensemble averages four window lengths; shortened here for speed
ens, members = run_lear_ensemble(ds, period, windows=(28, 56, 84, 112))
history = from_dataset(ds)
actual = history.window(ens.dates[0], ens.dates[-1])

print("per-window member MAE:")
for window, fm in members.items():
    print(f"  window {window:4d}: {mae(actual, fm):.3f}")
ens_mae = mae(actual, ens)
mean_mae = np.mean([mae(actual, fm) for fm in members.values()])
print(f"ensemble MAE {ens_mae:.3f} <= member mean {mean_mae:.3f} (always holds)")

insample = ds.prices[: ds.index_of(period.start_date)].ravel()
ctx = MetricContext(naive_kind="lag7", history=history, insample=insample)
print("\nfull metric suite for the ensemble:")
for kind, value in evaluate_all(actual, ens, ctx).items():
    print(f"  {kind:6s} {value:.4f}")

print("\nnaive benchmarks on the same window:")
for kind in ("lag1", "lag7", "calendar"):
    naive = naive_forecast(history, kind, start=period.start_date)
    naive = naive.window(actual.dates[0], actual.dates[-1])
    print(f"  {kind:9s} MAE {mae(actual, naive):.3f}")
