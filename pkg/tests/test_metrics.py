from datetime import date, timedelta

import numpy as np
import pytest

from epfbench.errors import MetricError, ShapeError
from epfbench.metrics import (
    ForecastMatrix,
    MetricContext,
    from_dataset,
    mape,
    naive_forecast,
    score,
)


def fm(values, start=date(2020, 1, 6)):
    values = np.asarray(values, dtype=float)
    dates = tuple(start + timedelta(days=i) for i in range(values.shape[0]))
    return ForecastMatrix(dates=dates, values=values)


def tiled(pair):
    """One day whose 24 cells repeat a 2-value pattern (cell means survive)."""
    return fm(np.tile(pair, 12)[None, :])


ACTUALS = tiled([2.0, 4.0])
FORECAST = tiled([3.0, 6.0])


class TestHandComputedOracles:
    def test_mae(self):
        assert score("MAE", ACTUALS, FORECAST) == pytest.approx(1.5, abs=1e-12)

    def test_rmse(self):
        assert score("RMSE", ACTUALS, FORECAST) == pytest.approx(np.sqrt(2.5), abs=1e-12)

    def test_mape(self):
        assert score("MAPE", ACTUALS, FORECAST) == pytest.approx(0.5, abs=1e-12)

    def test_smape(self):
        assert score("sMAPE", ACTUALS, FORECAST) == pytest.approx(0.4, abs=1e-12)

    def test_mase_hand_case(self):
        # in-sample [1,2,4]: one-step naive MAE = (1+2)/2 = 1.5; |error| = 3
        actual = tiled([10.0, 10.0])
        forecast = tiled([13.0, 7.0])
        ctx = MetricContext(insample=np.array([1.0, 2.0, 4.0]))
        assert score("MASE", actual, forecast, ctx) == pytest.approx(2.0, abs=1e-12)

    def test_perfect_forecast_zeroes(self, ds600):
        history = from_dataset(ds600)
        actual = history.window(ds600.dates[50], ds600.dates[80])
        ctx = MetricContext(history=history)
        for kind in ("MAE", "RMSE", "MAPE", "sMAPE", "rMAE"):
            assert score(kind, actual, actual, ctx) == 0.0


class TestNaiveForecasts:
    def test_lag7_on_constant_series_equals_actuals(self, const_ds):
        history = from_dataset(const_ds)
        naive = naive_forecast(history, "lag7")
        actual = history.window(naive.dates[0], naive.dates[-1])
        assert np.array_equal(naive.values, actual.values)

    def test_lag1_values(self, ds600):
        history = from_dataset(ds600)
        naive = naive_forecast(history, "lag1")
        i = 100
        idx = ds600.index_of(naive.dates[i])
        assert np.array_equal(naive.values[i], ds600.prices[idx - 1])

    def test_calendar_kind_tuesday_uses_lag1(self, ds600):
        history = from_dataset(ds600)
        naive = naive_forecast(history, "calendar")
        for i, day in enumerate(naive.dates):
            idx = ds600.index_of(day)
            lag = 1 if day.weekday() in (1, 2, 3, 4) else 7
            assert np.array_equal(naive.values[i], ds600.prices[idx - lag])
            if day.weekday() == 1:  # Tuesday
                assert np.array_equal(naive.values[i], ds600.prices[idx - 1])
            if day.weekday() == 6:  # Sunday
                assert np.array_equal(naive.values[i], ds600.prices[idx - 7])

    def test_insufficient_history(self, ds600):
        history = from_dataset(ds600)
        with pytest.raises(MetricError):
            naive_forecast(history, "lag7", start=ds600.dates[3])

    def test_unknown_kind(self, ds600):
        with pytest.raises(MetricError):
            naive_forecast(from_dataset(ds600), "lag2")


class TestRelativeMetrics:
    def test_lag7_naive_scores_one_exactly(self, ds600):
        history = from_dataset(ds600)
        naive = naive_forecast(history, "lag7", start=ds600.dates[60])
        actual = history.window(naive.dates[0], naive.dates[-1])
        ctx = MetricContext(naive_kind="lag7", history=history)
        assert score("rMAE", actual, naive, ctx) == 1.0
        assert score("rRMSE", actual, naive, ctx) == 1.0

    def test_each_naive_kind_self_normalizes(self, ds600):
        history = from_dataset(ds600)
        for kind in ("lag1", "lag7", "calendar"):
            naive = naive_forecast(history, kind, start=ds600.dates[60])
            actual = history.window(naive.dates[0], naive.dates[-1])
            ctx = MetricContext(naive_kind=kind, history=history)
            assert score("rMAE", actual, naive, ctx) == 1.0

    def test_rmae_requires_history(self):
        with pytest.raises(MetricError):
            score("rMAE", ACTUALS, FORECAST, MetricContext())

    def test_ranking_invariance_over_naive_kinds(self, ds600):
        rng = np.random.default_rng(42)
        history = from_dataset(ds600)
        actual = history.window(ds600.dates[100], ds600.dates[160])
        agreements = 0
        for _ in range(100):
            forecasts = [
                ForecastMatrix(
                    dates=actual.dates,
                    values=actual.values + rng.normal(0, rng.uniform(0.5, 5.0), actual.values.shape),
                )
                for _ in range(5)
            ]
            mae_order = np.argsort([score("MAE", actual, f) for f in forecasts])
            orders = []
            for kind in ("lag1", "lag7", "calendar"):
                ctx = MetricContext(naive_kind=kind, history=history)
                orders.append(np.argsort([score("rMAE", actual, f, ctx) for f in forecasts]))
            if all(np.array_equal(mae_order, o) for o in orders):
                agreements += 1
        assert agreements == 100


class TestMetricProperties:
    def test_mae_le_rmse(self, ds600):
        rng = np.random.default_rng(7)
        history = from_dataset(ds600)
        actual = history.window(ds600.dates[100], ds600.dates[130])
        for _ in range(20):
            f = ForecastMatrix(
                dates=actual.dates,
                values=actual.values + rng.normal(0, 3, actual.values.shape),
            )
            assert score("MAE", actual, f) <= score("RMSE", actual, f) + 1e-12

    def test_joint_permutation_invariance(self):
        rng = np.random.default_rng(8)
        a = rng.normal(30, 10, (10, 24))
        f = a + rng.normal(0, 2, a.shape)
        perm_days = rng.permutation(10)
        perm_hours = rng.permutation(24)
        a2 = a[perm_days][:, perm_hours]
        f2 = f[perm_days][:, perm_hours]
        for kind in ("MAE", "RMSE", "MAPE", "sMAPE"):
            assert score(kind, fm(a), fm(f)) == pytest.approx(score(kind, fm(a2), fm(f2)), rel=1e-12)

    def test_mape_zero_cells_excluded_and_counted(self):
        actual = fm(np.concatenate([[0.0, 2.0], np.full(22, 5.0)])[None, :])
        forecast = fm(np.concatenate([[1.0, 3.0], np.full(22, 5.0)])[None, :])
        with pytest.warns(UserWarning, match="excluded 1"):
            value, excluded = mape(actual, forecast)
        assert excluded == 1
        assert value == pytest.approx((0.5 + 0.0 * 22) / 23)

    def test_smape_both_zero_cell_contributes_zero(self):
        actual = fm(np.zeros((1, 24)))
        forecast = fm(np.zeros((1, 24)))
        assert score("sMAPE", actual, forecast) == 0.0

    def test_misaligned_dates_rejected(self):
        a = fm(np.ones((3, 24)))
        b = fm(np.ones((3, 24)), start=date(2020, 2, 1))
        with pytest.raises(ShapeError):
            score("MAE", a, b)

    def test_mase_requires_insample(self):
        with pytest.raises(MetricError):
            score("MASE", ACTUALS, FORECAST, MetricContext())

    def test_seasonal_mase_variant(self):
        insample = np.array([1.0, 5.0, 1.0, 5.0, 1.0, 5.0])
        actual = tiled([10.0, 10.0])
        forecast = tiled([12.0, 8.0])
        ctx = MetricContext(insample=insample, mase_seasonality=2)
        # seasonal lag-2 naive errors are all 0 -> undefined
        with pytest.raises(MetricError):
            score("MASE", actual, forecast, ctx)
        ctx1 = MetricContext(insample=insample, mase_seasonality=1)
        assert score("MASE", actual, forecast, ctx1) == pytest.approx(2.0 / 4.0)
