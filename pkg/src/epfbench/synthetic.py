"""Synthetic market data for tests and demos (no network required).

The generator mimics the qualitative features of day-ahead prices: daily
and weekly shape, an annual cycle, autocorrelated noise, occasional
spikes, and rare negative prices, plus two correlated exogenous series.
"""
from __future__ import annotations

from datetime import date, timedelta

import numpy as np

from .data import MarketDataset


def make_synthetic_dataset(
    n_days: int = 2184,
    start: date = date(2013, 1, 1),
    market_id: str = "SYN",
    seed: int = 0,
    spike_prob: float = 0.01,
) -> MarketDataset:
    rng = np.random.default_rng(seed)
    days = np.arange(n_days)
    hours = np.arange(24)

    daily = 8.0 * np.sin(2 * np.pi * (hours - 6) / 24.0)  # morning/evening shape
    weekly = np.where((days % 7) >= 5, -4.0, 0.0)  # weekend discount
    annual = 5.0 * np.sin(2 * np.pi * days / 364.0)

    # AR(1) day-level noise shared across hours plus hourly noise
    day_noise = np.empty(n_days)
    day_noise[0] = rng.normal(0, 2)
    for i in range(1, n_days):
        day_noise[i] = 0.7 * day_noise[i - 1] + rng.normal(0, 2)

    load = 1000.0 + 200.0 * np.sin(2 * np.pi * (hours - 8) / 24.0)[None, :]
    load = load + 50.0 * annual[:, None] / 5.0 + rng.normal(0, 20, (n_days, 24))
    wind = 300.0 + 150.0 * np.sin(2 * np.pi * days / 28.0)[:, None]
    wind = wind + rng.normal(0, 40, (n_days, 24))

    prices = (
        30.0
        + daily[None, :]
        + (weekly + annual + day_noise)[:, None]
        + 0.02 * (load - 1000.0)
        - 0.01 * (wind - 300.0)
        + rng.normal(0, 1.5, (n_days, 24))
    )
    spikes = rng.random((n_days, 24)) < spike_prob
    prices = np.where(spikes, prices + rng.exponential(40, (n_days, 24)), prices)
    dips = rng.random((n_days, 24)) < spike_prob / 4
    prices = np.where(dips, -np.abs(prices) * 0.2, prices)

    dates = tuple(start + timedelta(days=int(i)) for i in range(n_days))
    return MarketDataset(
        market_id=market_id, dates=dates, prices=prices, exog1=load, exog2=wind
    )
