"""Accuracy metrics and naive benchmarks for day-ahead forecasts.

All metrics consume two date-aligned (days x 24) matrices.  Relative
metrics (rMAE, rRMSE) normalize by a naive benchmark built from actual
prices on the same out-of-sample window; MASE normalizes by the one-step
naive error of an in-sample series.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from datetime import date, timedelta

import numpy as np

from .errors import MetricError, ShapeError

METRIC_KINDS = ("MAE", "RMSE", "MAPE", "sMAPE", "rMAE", "rRMSE", "MASE")
NAIVE_KINDS = ("lag1", "lag7", "calendar")


@dataclass(frozen=True)
class ForecastMatrix:
    """Day-indexed matrix of 24 hourly values (forecasts or actuals)."""

    dates: tuple
    values: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[1] != 24:
            raise ShapeError(f"values must be (n_days, 24), got {vals.shape}")
        if vals.shape[0] != len(self.dates):
            raise ShapeError("value rows do not match the date index")
        if not np.all(np.isfinite(vals)):
            raise ShapeError("values contain non-finite entries")
        for a, b in zip(self.dates, self.dates[1:]):
            if b <= a:
                raise ShapeError("dates must be strictly increasing")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "dates", tuple(self.dates))

    @property
    def n_days(self) -> int:
        return len(self.dates)

    def index_of(self, day: date) -> int:
        lo, hi = 0, len(self.dates)
        while lo < hi:
            mid = (lo + hi) // 2
            if self.dates[mid] < day:
                lo = mid + 1
            else:
                hi = mid
        if lo == len(self.dates) or self.dates[lo] != day:
            raise KeyError(f"{day} not in the matrix")
        return lo

    def window(self, start: date, end: date) -> "ForecastMatrix":
        i, j = self.index_of(start), self.index_of(end)
        return ForecastMatrix(dates=self.dates[i : j + 1], values=self.values[i : j + 1])


def from_dataset(dataset, start: date | None = None, end: date | None = None) -> ForecastMatrix:
    """Actual prices of a dataset (optionally windowed) as a ForecastMatrix."""
    fm = ForecastMatrix(dates=dataset.dates, values=dataset.prices)
    if start is not None or end is not None:
        fm = fm.window(start or fm.dates[0], end or fm.dates[-1])
    return fm


@dataclass(frozen=True)
class MetricContext:
    """Extra inputs for relative and scaled metrics.

    ``history`` must be an actual-price matrix covering the forecast dates
    plus at least the 7 preceding days (used to build the naive benchmark
    for rMAE/rRMSE).  ``insample`` is the flat in-sample price series for
    MASE; ``mase_seasonality`` switches MASE to a seasonal naive.
    """

    naive_kind: str = "lag7"
    history: ForecastMatrix | None = None
    insample: np.ndarray | None = field(default=None)
    mase_seasonality: int = 1
    mape_zero_policy: str = "exclude"  # or "propagate"


def _check_aligned(actuals: ForecastMatrix, forecast: ForecastMatrix):
    if actuals.dates != forecast.dates:
        raise ShapeError("actuals and forecast are not date-aligned")


def naive_forecast(actuals: ForecastMatrix, kind: str, start: date | None = None) -> ForecastMatrix:
    """Naive day-ahead benchmark built from actual prices.

    lag1 repeats yesterday, lag7 repeats the same weekday last week, and
    the calendar kind uses lag1 on Tue-Fri and lag7 on Sat/Sun/Mon.
    ``actuals`` must extend 7 days before the first forecast date.
    """
    if kind not in NAIVE_KINDS:
        raise MetricError(f"unknown naive kind {kind!r}; expected one of {NAIVE_KINDS}")
    first = start if start is not None else actuals.dates[0] + timedelta(days=7)
    try:
        i0 = actuals.index_of(first)
    except KeyError as exc:
        raise MetricError(str(exc)) from None
    if i0 < 7:
        raise MetricError("naive benchmark needs 7 days of actuals before its first date")
    out = np.empty((actuals.n_days - i0, 24))
    for k, i in enumerate(range(i0, actuals.n_days)):
        if kind == "lag1":
            lag = 1
        elif kind == "lag7":
            lag = 7
        else:
            # Tue..Fri (weekday 1..4) use yesterday, Sat/Sun/Mon last week
            lag = 1 if actuals.dates[i].weekday() in (1, 2, 3, 4) else 7
        out[k] = actuals.values[i - lag]
    return ForecastMatrix(dates=actuals.dates[i0:], values=out)


def mae(actuals: ForecastMatrix, forecast: ForecastMatrix) -> float:
    _check_aligned(actuals, forecast)
    return float(np.mean(np.abs(actuals.values - forecast.values)))


def rmse(actuals: ForecastMatrix, forecast: ForecastMatrix) -> float:
    _check_aligned(actuals, forecast)
    return float(np.sqrt(np.mean((actuals.values - forecast.values) ** 2)))


def mape(actuals: ForecastMatrix, forecast: ForecastMatrix, zero_policy: str = "exclude"):
    """Mean |error| / |actual|; returns (value, number of excluded cells).

    Cells with a zero actual price are excluded by default (their ratio is
    undefined); ``zero_policy="propagate"`` keeps them as infinities.
    """
    _check_aligned(actuals, forecast)
    p = actuals.values
    err = np.abs(p - forecast.values)
    nonzero = p != 0.0
    n_excluded = int(np.size(p) - np.count_nonzero(nonzero))
    if zero_policy == "propagate":
        with np.errstate(divide="ignore"):
            return float(np.mean(err / np.abs(p))), n_excluded
    if n_excluded == np.size(p):
        raise MetricError("MAPE undefined: every actual price is zero")
    if n_excluded:
        warnings.warn(f"MAPE: excluded {n_excluded} zero-price cells", stacklevel=2)
    return float(np.mean(err[nonzero] / np.abs(p[nonzero]))), n_excluded


def smape(actuals: ForecastMatrix, forecast: ForecastMatrix) -> float:
    """Symmetric MAPE with a per-cell factor 2|e|/(|p|+|p_hat|).

    Cells where both the actual and the forecast are zero contribute 0.
    """
    _check_aligned(actuals, forecast)
    p, q = actuals.values, forecast.values
    denom = np.abs(p) + np.abs(q)
    num = 2.0 * np.abs(p - q)
    cells = np.where(denom == 0.0, 0.0, num / np.where(denom == 0.0, 1.0, denom))
    return float(np.mean(cells))


def mase(actuals: ForecastMatrix, forecast: ForecastMatrix, insample, seasonality: int = 1) -> float:
    """MAE scaled by the in-sample one-step (or seasonal) naive MAE.

    The in-sample series is the flat hourly price sequence of the training
    data; its naive error is mean |p_i - p_{i-m}| over i = m+1..n.
    """
    if insample is None:
        raise MetricError("MASE requires an in-sample series")
    x = np.asarray(insample, dtype=float).ravel()
    m = int(seasonality)
    if x.size <= m:
        raise MetricError("in-sample series shorter than the seasonal lag")
    denom = float(np.mean(np.abs(x[m:] - x[:-m])))
    if denom == 0.0:
        raise MetricError("in-sample naive MAE is zero; MASE undefined")
    return mae(actuals, forecast) / denom


def _naive_for(actuals: ForecastMatrix, context: MetricContext) -> ForecastMatrix:
    if context is None or context.history is None:
        raise MetricError(
            "relative metrics need context.history covering the forecast dates "
            "plus 7 prior days"
        )
    naive = naive_forecast(context.history, context.naive_kind, start=actuals.dates[0])
    return naive.window(actuals.dates[0], actuals.dates[-1])


def score(kind: str, actuals: ForecastMatrix, forecast: ForecastMatrix, context: MetricContext | None = None) -> float:
    """One accuracy metric; see module docstring for the conventions."""
    if kind == "MAE":
        return mae(actuals, forecast)
    if kind == "RMSE":
        return rmse(actuals, forecast)
    if kind == "MAPE":
        policy = context.mape_zero_policy if context else "exclude"
        return mape(actuals, forecast, zero_policy=policy)[0]
    if kind == "sMAPE":
        return smape(actuals, forecast)
    if kind == "rMAE":
        naive = _naive_for(actuals, context)
        denom = mae(actuals, naive)
        if denom == 0.0:
            raise MetricError("naive benchmark has zero MAE; rMAE undefined")
        return mae(actuals, forecast) / denom
    if kind == "rRMSE":
        naive = _naive_for(actuals, context)
        denom = rmse(actuals, naive)
        if denom == 0.0:
            raise MetricError("naive benchmark has zero RMSE; rRMSE undefined")
        return rmse(actuals, forecast) / denom
    if kind == "MASE":
        if context is None:
            raise MetricError("MASE requires a context with an in-sample series")
        return mase(actuals, forecast, context.insample, context.mase_seasonality)
    raise MetricError(f"unknown metric kind {kind!r}; expected one of {METRIC_KINDS}")


def evaluate_all(actuals: ForecastMatrix, forecast: ForecastMatrix, context: MetricContext | None = None) -> dict:
    """Every computable metric for one forecast; skips MASE without insample."""
    out = {}
    for kind in METRIC_KINDS:
        if kind == "MASE" and (context is None or context.insample is None):
            continue
        if kind in ("rMAE", "rRMSE") and (context is None or context.history is None):
            continue
        out[kind] = score(kind, actuals, forecast, context)
    return out
