"""Arithmetic-average forecast combinations.

Two stock ensembles: the linear model averaged over its four calibration
window lengths, and the network averaged over four configurations from
independent hyperparameter studies.  Member matrices are always returned
alongside the combination so significance tests can compare members
against the ensemble without rerunning backtests.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import MarketDataset, STANDARD_WINDOWS, TestPeriod
from .dnn import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_MAX_EPOCHS,
    DEFAULT_PATIENCE,
    VALIDATION_WEEKS,
    WINDOW_WEEKS,
    DnnHyperparams,
    backtest_dnn,
)
from .errors import CombineError
from .lear import backtest_lear
from .metrics import ForecastMatrix, from_dataset


@dataclass(frozen=True)
class EnsembleSpec:
    kind: str  # "lear_windows" or "dnn_runs"
    members: tuple

    def __post_init__(self):
        if self.kind not in ("lear_windows", "dnn_runs"):
            raise CombineError(f"unknown ensemble kind {self.kind!r}")
        if len(self.members) < 1:
            raise CombineError("an ensemble needs at least one member")


def combine_mean(forecasts) -> ForecastMatrix:
    """Elementwise mean of date-aligned forecast matrices."""
    forecasts = list(forecasts)
    if not forecasts:
        raise CombineError("no forecasts to combine")
    first = forecasts[0]
    for fm in forecasts[1:]:
        if fm.dates != first.dates:
            raise CombineError("ensemble members are not date-aligned")
        if fm.values.shape != first.values.shape:
            raise CombineError("ensemble members have mismatched shapes")
    stacked = np.stack([fm.values for fm in forecasts])
    return ForecastMatrix(dates=first.dates, values=stacked.mean(axis=0))


def _assert_convexity(dataset: MarketDataset, ensemble: ForecastMatrix, members):
    """|mean error| <= mean |error| pointwise, hence also for the MAE."""
    actuals = from_dataset(dataset, ensemble.dates[0], ensemble.dates[-1])
    ens_abs = np.abs(actuals.values - ensemble.values)
    mean_abs = np.mean(
        [np.abs(actuals.values - fm.values) for fm in members], axis=0
    )
    if not np.all(ens_abs <= mean_abs + 1e-9):
        raise AssertionError("ensemble error exceeded the member-average error")


def run_lear_ensemble(
    dataset: MarketDataset,
    test_period: TestPeriod,
    windows=STANDARD_WINDOWS,
    days=None,
    jobs: int = 1,
    on_member=None,
    **backtest_kwargs,
):
    """Backtest one linear model per window and average the forecasts.

    Returns (ensemble matrix, {window: member matrix}).
    """
    members = {}
    for window in windows:
        fm = backtest_lear(
            dataset, test_period, window, days=days, jobs=jobs, **backtest_kwargs
        )
        members[window] = fm
        if on_member is not None:
            on_member(window, fm)
    ensemble = combine_mean(members.values())
    _assert_convexity(dataset, ensemble, list(members.values()))
    return ensemble, members


def run_dnn_ensemble(
    dataset: MarketDataset,
    test_period: TestPeriod,
    hyperparams_list,
    seeds,
    days=None,
    jobs: int = 1,
    on_member=None,
    max_epochs: int = DEFAULT_MAX_EPOCHS,
    patience: int = DEFAULT_PATIENCE,
    batch_size: int = DEFAULT_BATCH_SIZE,
    window_days: int = WINDOW_WEEKS * 7,
    val_weeks: int = VALIDATION_WEEKS,
):
    """Backtest one network per configuration/seed pair and average.

    The four configurations normally come from four independent
    hyperparameter studies.  Returns (ensemble matrix, member list).
    """
    hyperparams_list = list(hyperparams_list)
    seeds = list(seeds)
    if len(hyperparams_list) != len(seeds):
        raise CombineError("one seed per ensemble member is required")
    members = []
    for k, (hp, seed) in enumerate(zip(hyperparams_list, seeds)):
        if not isinstance(hp, DnnHyperparams):
            raise CombineError("dnn ensemble members must be DnnHyperparams")
        fm = backtest_dnn(
            dataset, test_period, hp, seed, days=days, jobs=jobs,
            max_epochs=max_epochs, patience=patience, batch_size=batch_size,
            window_days=window_days, val_weeks=val_weeks,
        )
        members.append(fm)
        if on_member is not None:
            on_member(k, fm)
    ensemble = combine_mean(members)
    _assert_convexity(dataset, ensemble, members)
    return ensemble, members
