"""Unconditional and conditional significance tests, pairwise p-value
matrices, and the chessboard SVG.

Writes ``chessboard.svg`` and ``chessboard.csv`` into the working
directory.
"""
import numpy as np

from epfbench.data import test_split
from epfbench.lear import backtest_lear
from epfbench.metrics import from_dataset, naive_forecast
from epfbench.stattests import (
    dm_test,
    dm_univariate_suite,
    gw_test,
    loss_differential,
    pairwise_matrix,
    render_chessboard,
)
from epfbench.synthetic import make_synthetic_dataset

ds = make_synthetic_dataset(n_days=540, seed=6)
_, period = test_split(ds, ds.dates[500], min_history=450)
history = from_dataset(ds)
actual = history.window(period.start_date, period.end_date)

forecasts = {
    "linear_28": backtest_lear(ds, period, 28),
    "linear_56": backtest_lear(ds, period, 56),
    "naive_week": naive_forecast(history, "lag7", start=period.start_date).window(
        period.start_date, period.end_date
    ),
}

err = {name: actual.values - fm.values for name, fm in forecasts.items()}

# one pair in detail: daily L1 loss differential, then both tests
diff = loss_differential(err["naive_week"], err["linear_56"], norm=1)
dm = dm_test(diff)
gw = gw_test(diff, q=1)
print(f"naive vs linear_56: mean daily differential {np.mean(diff.values):+.2f}")
print(f"  unconditional: statistic {dm.statistic:+.2f}, one-sided p {dm.p_value:.4f}")
print(f"  conditional:   statistic {gw.statistic:+.2f}, directional p {gw.p_value:.4f}")

results, rejections = dm_univariate_suite(err["naive_week"], err["linear_56"])
print(f"  per-hour variant: {rejections}/24 hours reject at 5%")

matrix = pairwise_matrix(forecasts, actual, test="GW", norm=1, q=1)
print("\npairwise directional p-values (column model better):")
print("  " + "  ".join(f"{n:>10s}" for n in matrix.names))
for name, row in zip(matrix.names, matrix.values):
    cells = "  ".join("         -" if np.isnan(v) else f"{v:10.4f}" for v in row)
    print(f"  {name:>10s} {cells}")

out = render_chessboard(matrix, "chessboard.svg")
print(f"\nwrote {out} (+ chessboard.csv); black cells mean p >= 0.10")
