"""Fixed feature maps for the linear model and the neural network.

The linear regression row has 247 entries in a frozen block order:

    [0:24)    prices day d-1          [120:144) exog2 day d
    [24:48)   prices day d-2          [144:168) exog1 day d-1
    [48:72)   prices day d-3          [168:192) exog2 day d-1
    [72:96)   prices day d-7          [192:216) exog1 day d-7
    [96:120)  exog1 day d             [216:240) exog2 day d-7
                                      [240:247) weekday one-hot (Mon first)

The network row concatenates any subset of the ten 24-value blocks (same
order) plus a single weekday scalar in 1..7, giving at most 241 entries.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from datetime import date

import numpy as np

from .data import CalibrationSlice, MarketDataset
from .errors import FeatureError

LEAR_N_FEATURES = 247
DNN_MAX_FEATURES = 241

# (attribute name, series, lag); series "p" = price, 1/2 = exogenous
BLOCK_LAYOUT = (
    ("use_price_lag1", "p", 1),
    ("use_price_lag2", "p", 2),
    ("use_price_lag3", "p", 3),
    ("use_price_lag7", "p", 7),
    ("use_exog1_day", 1, 0),
    ("use_exog2_day", 2, 0),
    ("use_exog1_lag1", 1, 1),
    ("use_exog2_lag1", 2, 1),
    ("use_exog1_lag7", 1, 7),
    ("use_exog2_lag7", 2, 7),
)

PRICE_BLOCK_SLICES = (slice(0, 24), slice(24, 48), slice(48, 72), slice(72, 96))
EXOG1_BLOCK_SLICES = (slice(96, 120), slice(144, 168), slice(192, 216))
EXOG2_BLOCK_SLICES = (slice(120, 144), slice(168, 192), slice(216, 240))
DUMMY_SLICE = slice(240, 247)


@dataclass(frozen=True)
class FeatureMask:
    """Eleven binary flags selecting day-blocks for the network input."""

    use_price_lag1: bool = True
    use_price_lag2: bool = True
    use_price_lag3: bool = True
    use_price_lag7: bool = True
    use_exog1_day: bool = True
    use_exog2_day: bool = True
    use_exog1_lag1: bool = True
    use_exog2_lag1: bool = True
    use_exog1_lag7: bool = True
    use_exog2_lag7: bool = True
    use_weekday: bool = True

    def __post_init__(self):
        if not any(getattr(self, f.name) for f in fields(self)):
            raise FeatureError("feature mask selects nothing")

    @property
    def n_features(self) -> int:
        blocks = sum(24 for name, _, _ in BLOCK_LAYOUT if getattr(self, name))
        return blocks + (1 if self.use_weekday else 0)

    @classmethod
    def full(cls) -> "FeatureMask":
        return cls()

    @classmethod
    def flag_names(cls) -> tuple:
        return tuple(f.name for f in fields(cls))


def weekday_encoding(day: date):
    """One-hot weekday vector (Monday at position 1) and scalar index 1..7."""
    idx = day.weekday()  # Monday == 0
    dummies = np.zeros(7)
    dummies[idx] = 1.0
    return dummies, idx + 1


def _day_index(dataset: MarketDataset, target_day) -> int:
    if isinstance(target_day, (int, np.integer)):
        return int(target_day)
    return dataset.index_of(target_day)


def build_lear_row(dataset: MarketDataset, target_day) -> np.ndarray:
    """247-entry raw regression row for one target day (untransformed)."""
    t = _day_index(dataset, target_day)
    if t < 7:
        raise FeatureError(f"day index {t}: need 7 days of history for lags")
    row = np.empty(LEAR_N_FEATURES)
    row[0:24] = dataset.price_day(t - 1)
    row[24:48] = dataset.price_day(t - 2)
    row[48:72] = dataset.price_day(t - 3)
    row[72:96] = dataset.price_day(t - 7)
    row[96:120] = dataset.exog_day(1, t)
    row[120:144] = dataset.exog_day(2, t)
    row[144:168] = dataset.exog_day(1, t - 1)
    row[168:192] = dataset.exog_day(2, t - 1)
    row[192:216] = dataset.exog_day(1, t - 7)
    row[216:240] = dataset.exog_day(2, t - 7)
    day = dataset.dates[t] if t < dataset.n_days else None
    if day is None:
        raise FeatureError(f"day index {t} outside the dataset")
    row[DUMMY_SLICE], _ = weekday_encoding(day)
    return row


def build_lear_design(cal_slice: CalibrationSlice):
    """Stacked design matrix and 24-column target matrix for a window.

    One row per window day 8..w (the first 7 days only provide lags),
    i.e. ``window_days - 7`` rows of 247 features.
    """
    ds = cal_slice.dataset
    lo, hi = cal_slice.start_idx, cal_slice.stop_idx
    n = cal_slice.n_regression_rows
    X = np.empty((n, LEAR_N_FEATURES))
    Y = np.empty((n, 24))
    for k, idx in enumerate(range(lo + 7, hi)):
        X[k] = build_lear_row(ds, idx)
        Y[k] = ds.price_day(idx)
    return X, Y


def build_dnn_row(dataset: MarketDataset, target_day, mask: FeatureMask) -> np.ndarray:
    """Network input row: active 24-blocks plus optional weekday scalar."""
    t = _day_index(dataset, target_day)
    needed = max(
        [lag for name, _, lag in BLOCK_LAYOUT if getattr(mask, name)], default=0
    )
    if t < needed:
        raise FeatureError(f"day index {t}: need {needed} days of history for lags")
    parts = []
    for name, series, lag in BLOCK_LAYOUT:
        if not getattr(mask, name):
            continue
        if series == "p":
            parts.append(dataset.price_day(t - lag))
        else:
            parts.append(dataset.exog_day(series, t - lag))
    if mask.use_weekday:
        _, scalar = weekday_encoding(dataset.dates[t])
        parts.append(np.array([float(scalar)]))
    return np.concatenate(parts)


def build_dnn_design(dataset: MarketDataset, day_indices, mask: FeatureMask):
    """Feature matrix and price targets for a list of day indices."""
    day_indices = list(day_indices)
    X = np.empty((len(day_indices), mask.n_features))
    Y = np.empty((len(day_indices), 24))
    for k, idx in enumerate(day_indices):
        X[k] = build_dnn_row(dataset, idx, mask)
        Y[k] = dataset.price_day(idx)
    return X, Y
