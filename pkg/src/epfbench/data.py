"""Market dataset loading, fetching, and calendar normalization.

A dataset is a panel of consecutive calendar days, each carrying 24 hourly
prices and 24 hourly values of two exogenous day-ahead forecast series.
Daylight-saving days are normalized to exactly 24 values: the duplicated
hour of a 25-hour day is averaged, the missing hour of a 23-hour day is
linearly interpolated from its neighbors.

Price reads go through accessor methods so backtests can be instrumented
to prove that forecasting day ``d`` never touches day-``d`` prices.
"""
from __future__ import annotations

import csv
import hashlib
import os
import shutil
import urllib.error
import urllib.request
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path

import numpy as np
from filelock import FileLock

from .errors import (
    CadenceError,
    CalendarError,
    ConfigurationError,
    ParseError,
    SchemaError,
    SliceError,
    SplitError,
    TransportError,
)

KNOWN_MARKETS = ("NP", "PJM", "BE", "FR", "DE")
STANDARD_WINDOWS = (56, 84, 1092, 1456)

# Header aliases accepted when parsing; canonical schema is
# timestamp,price,exog1,exog2.
_COLUMN_ALIASES = {
    "timestamp": ("timestamp", "date", "datetime", "time"),
    "price": ("price",),
    "exog1": ("exog1", "exogenous 1", "exogenous_1"),
    "exog2": ("exog2", "exogenous 2", "exogenous_2"),
}


@dataclass(frozen=True)
class MarketDataset:
    """Immutable panel of daily 24-hour price and exogenous series."""

    market_id: str
    dates: tuple
    prices: np.ndarray
    exog1: np.ndarray
    exog2: np.ndarray
    _price_observers: list = field(
        default_factory=list, repr=False, compare=False
    )

    def __post_init__(self):
        for name in ("prices", "exog1", "exog2"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            if arr.ndim != 2 or arr.shape[1] != 24:
                raise CalendarError(f"{name} must be (n_days, 24), got {arr.shape}")
            if arr.shape[0] != len(self.dates):
                raise CalendarError(f"{name} rows do not match the date index")
            if not np.all(np.isfinite(arr)):
                raise CalendarError(f"{name} contains non-finite values")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        for a, b in zip(self.dates, self.dates[1:]):
            if (b - a).days != 1:
                raise CalendarError(f"dates must be consecutive days; gap at {a} -> {b}")

    @property
    def n_days(self) -> int:
        return len(self.dates)

    def index_of(self, day: date) -> int:
        offset = (day - self.dates[0]).days
        if offset < 0 or offset >= self.n_days:
            raise KeyError(f"{day} outside the dataset span {self.dates[0]}..{self.dates[-1]}")
        return offset

    def _notify(self, start: int, stop: int):
        for cb in self._price_observers:
            cb(start, stop)

    def price_day(self, idx: int) -> np.ndarray:
        """24 hourly prices of one day (instrumented read)."""
        self._notify(idx, idx + 1)
        return self.prices[idx]

    def price_rows(self, start: int, stop: int) -> np.ndarray:
        self._notify(start, stop)
        return self.prices[start:stop]

    def exog_day(self, series: int, idx: int) -> np.ndarray:
        """24 hourly values of exogenous series 1 or 2 for one day.

        Exogenous values are day-ahead forecasts, known the day before
        delivery, so reading the target day's row is not lookahead.
        """
        if series == 1:
            return self.exog1[idx]
        if series == 2:
            return self.exog2[idx]
        raise ConfigurationError(f"exogenous series must be 1 or 2, got {series}")

    def exog_rows(self, series: int, start: int, stop: int) -> np.ndarray:
        return (self.exog1 if series == 1 else self.exog2)[start:stop]

    def slice_days(self, start: int, stop: int) -> "MarketDataset":
        """View of a contiguous day range as a new dataset (shared arrays)."""
        return MarketDataset(
            market_id=self.market_id,
            dates=tuple(self.dates[start:stop]),
            prices=self.prices[start:stop],
            exog1=self.exog1[start:stop],
            exog2=self.exog2[start:stop],
        )


@contextmanager
def record_price_reads(dataset: MarketDataset):
    """Collect the day indices of every price read made inside the block."""
    reads: set[int] = set()

    def cb(start, stop):
        reads.update(range(start, stop))

    dataset._price_observers.append(cb)
    try:
        yield reads
    finally:
        dataset._price_observers.remove(cb)


@dataclass(frozen=True)
class TestPeriod:
    """Out-of-sample span; 728 days (104 weeks) for the benchmark markets."""

    start_date: date
    end_date: date
    n_days: int

    def __post_init__(self):
        if self.n_days < 1:
            raise SplitError("test period must contain at least one day")
        if (self.end_date - self.start_date).days + 1 != self.n_days:
            raise SplitError("test period day count does not match its date span")


@dataclass(frozen=True)
class CalibrationSlice:
    """The ``window_days`` days immediately preceding a target day.

    The first 7 days only provide lags, so the slice yields
    ``window_days - 7`` usable regression rows.
    """

    dataset: MarketDataset
    start_idx: int
    stop_idx: int  # exclusive; equals the target day's index
    window_days: int

    @property
    def n_regression_rows(self) -> int:
        return self.window_days - 7

    @property
    def dates(self):
        return self.dataset.dates[self.start_idx : self.stop_idx]

    @property
    def prices(self) -> np.ndarray:
        return self.dataset.price_rows(self.start_idx, self.stop_idx)

    @property
    def exog1(self) -> np.ndarray:
        return self.dataset.exog_rows(1, self.start_idx, self.stop_idx)

    @property
    def exog2(self) -> np.ndarray:
        return self.dataset.exog_rows(2, self.start_idx, self.stop_idx)


def normalize_calendar(hours, values) -> np.ndarray:
    """Collapse one local day's raw hourly readings onto a 24-value grid.

    25 readings (fall-back day): the hour observed twice is replaced by the
    arithmetic mean of its two values.  23 readings (spring-forward day):
    the skipped hour is linearly interpolated from its neighbors (nearest
    value at the day boundary).  24 readings pass through unchanged.
    """
    hours = list(hours)
    vals = np.asarray(values, dtype=float)
    if len(hours) != vals.shape[0]:
        raise CalendarError("hour labels and values have different lengths")
    if len(hours) not in (23, 24, 25):
        raise CalendarError(f"a day must have 23, 24, or 25 readings, got {len(hours)}")
    out = np.full(24, np.nan)
    counts = np.zeros(24, dtype=int)
    for h, v in zip(hours, vals):
        if not 0 <= h <= 23:
            raise CalendarError(f"hour {h} outside 0..23")
        counts[h] += 1
        out[h] = v if counts[h] == 1 else (out[h] + v) / 2.0
    if np.any(counts > 2) or np.sum(counts == 2) > 1:
        raise CalendarError("more than one duplicated hour in a day")
    missing = np.flatnonzero(counts == 0)
    if missing.size > 1:
        raise CalendarError("more than one missing hour in a day")
    if missing.size == 1:
        h = int(missing[0])
        left = out[h - 1] if h > 0 else out[h + 1]
        right = out[h + 1] if h < 23 else out[h - 1]
        out[h] = (left + right) / 2.0
    return out


def _match_header(header) -> None:
    cols = [c.strip().lower() for c in header]
    if len(cols) != 4:
        raise SchemaError(f"expected 4 columns (timestamp,price,exog1,exog2), got {len(cols)}")
    for want, got in zip(("timestamp", "price", "exog1", "exog2"), cols):
        if got not in _COLUMN_ALIASES[want]:
            raise SchemaError(f"column {got!r} does not match required column {want!r}")


def parse_dataset_csv(path, market_id: str | None = None) -> MarketDataset:
    """Parse a ``timestamp,price,exog1,exog2`` hourly CSV into a dataset.

    Rows are grouped by local calendar date; each day must have 23-25
    hourly readings and is calendar-normalized to 24 columns.
    """
    path = Path(path)
    by_day: dict[date, list] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path} is empty") from None
        _match_header(header)
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", line=lineno)
            try:
                ts = datetime.fromisoformat(row[0].strip())
            except ValueError:
                raise ParseError(f"bad timestamp {row[0]!r}", line=lineno) from None
            if ts.minute or ts.second or ts.microsecond:
                raise CadenceError(f"line {lineno}: timestamp {row[0]!r} is not on the hour")
            try:
                vals = [float(cell) for cell in row[1:]]
            except ValueError:
                raise ParseError(f"non-numeric value in {row[1:]!r}", line=lineno) from None
            if not all(np.isfinite(vals)):
                raise ParseError("missing or non-finite value", line=lineno)
            by_day.setdefault(ts.date(), []).append((ts.hour, *vals))
    if not by_day:
        raise SchemaError(f"{path} has a header but no data rows")

    days = sorted(by_day)
    n = len(days)
    prices = np.empty((n, 24))
    exog1 = np.empty((n, 24))
    exog2 = np.empty((n, 24))
    for i, day in enumerate(days):
        rows = by_day[day]
        hours = [r[0] for r in rows]
        try:
            prices[i] = normalize_calendar(hours, [r[1] for r in rows])
            exog1[i] = normalize_calendar(hours, [r[2] for r in rows])
            exog2[i] = normalize_calendar(hours, [r[3] for r in rows])
        except CalendarError as exc:
            raise CalendarError(f"{day}: {exc}") from None
    return MarketDataset(
        market_id=market_id or path.stem,
        dates=tuple(days),
        prices=prices,
        exog1=exog1,
        exog2=exog2,
    )


def write_dataset_csv(dataset: MarketDataset, path) -> Path:
    """Write a dataset back to the canonical CSV schema."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "price", "exog1", "exog2"])
        for i, day in enumerate(dataset.dates):
            for h in range(24):
                ts = datetime(day.year, day.month, day.day, h)
                writer.writerow(
                    [
                        ts.isoformat(sep=" "),
                        repr(float(dataset.prices[i, h])),
                        repr(float(dataset.exog1[i, h])),
                        repr(float(dataset.exog2[i, h])),
                    ]
                )
    return path


# ---------------------------------------------------------------------------
# dataset fetching


def default_cache_dir() -> Path:
    env = os.environ.get("EPF_CACHE_DIR")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "epfbench"


def _default_manifest_path() -> Path:
    return Path(__file__).with_name("manifest.txt")


def read_manifest(path=None) -> dict:
    """Parse the ``MARKET.url=... / MARKET.sha256=...`` manifest file."""
    path = Path(path) if path is not None else _default_manifest_path()
    entries: dict[str, dict] = {}
    for raw in path.read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"manifest line without '=': {raw!r}")
        key, value = line.split("=", 1)
        market, _, attr = key.strip().partition(".")
        if attr not in ("url", "sha256"):
            raise ConfigurationError(f"manifest key must be <market>.url or <market>.sha256: {raw!r}")
        entries.setdefault(market.strip(), {})[attr] = value.strip()
    return entries


def _urlopen_bytes(url: str) -> bytes:
    try:
        with urllib.request.urlopen(url) as resp:
            return resp.read()
    except urllib.error.HTTPError as exc:
        raise TransportError(f"download failed: {url} (HTTP {exc.code})") from exc
    except urllib.error.URLError as exc:
        raise TransportError(f"download failed: {url} ({exc.reason})") from exc


def sha256_of(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def fetch_dataset(market_id: str, cache_dir=None, manifest_path=None, opener=None) -> Path:
    """Return the local path of a market's dataset file, downloading once.

    A second call finds the cached copy and performs no network request.
    ``opener`` may inject a ``url -> bytes`` callable (used by tests).
    """
    if market_id not in KNOWN_MARKETS:
        raise ConfigurationError(
            f"unknown market {market_id!r}; expected one of {KNOWN_MARKETS}"
        )
    manifest = read_manifest(manifest_path)
    if market_id not in manifest or "url" not in manifest[market_id]:
        raise ConfigurationError(f"manifest has no URL for market {market_id!r}")
    entry = manifest[market_id]
    url = entry["url"]
    want_sha = entry.get("sha256", "-")

    cache = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    cache.mkdir(parents=True, exist_ok=True)
    target = cache / f"{market_id}.csv"
    lock = FileLock(str(target) + ".lock")
    with lock:
        if target.exists():
            if want_sha not in ("", "-") and sha256_of(target) != want_sha:
                target.unlink()  # corrupt cache entry; re-download below
            else:
                return target
        if url.startswith("file://"):
            data = Path(url[len("file://") :]).read_bytes()
        else:
            data = (opener or _urlopen_bytes)(url)
        if want_sha not in ("", "-"):
            got = hashlib.sha256(data).hexdigest()
            if got != want_sha:
                raise TransportError(
                    f"checksum mismatch for {url}: expected {want_sha}, got {got}"
                )
        tmp = target.with_suffix(".tmp")
        tmp.write_bytes(data)
        shutil.move(str(tmp), str(target))
    return target


# ---------------------------------------------------------------------------
# splits and calibration windows


def test_split(dataset: MarketDataset, test_start: date, min_history: int = 1456):
    """Split a dataset into (history view, TestPeriod starting at test_start).

    The default minimum history of 1456 days guarantees that every
    standard calibration window fits before the first test day.
    """
    try:
        idx = dataset.index_of(test_start)
    except KeyError as exc:
        raise SplitError(str(exc)) from None
    if idx < min_history:
        raise SplitError(
            f"only {idx} days precede {test_start}; at least {min_history} required"
        )
    history = dataset.slice_days(0, idx)
    period = TestPeriod(
        start_date=test_start,
        end_date=dataset.dates[-1],
        n_days=dataset.n_days - idx,
    )
    return history, period


def calibration_window_slice(
    dataset: MarketDataset, target_day, window_days: int
) -> CalibrationSlice:
    """The ``window_days`` days ending the day before ``target_day``.

    ``target_day`` may be a date inside the dataset or the index just past
    the last day (recalibrating for the first out-of-file day).
    """
    if window_days < 8:
        raise SliceError("calibration windows shorter than 8 days have no regression rows")
    if isinstance(target_day, (int, np.integer)):
        idx = int(target_day)
        if not 0 <= idx <= dataset.n_days:
            raise SliceError(f"target index {idx} outside the dataset")
    else:
        if target_day == dataset.dates[-1] + timedelta(days=1):
            idx = dataset.n_days
        else:
            try:
                idx = dataset.index_of(target_day)
            except KeyError as exc:
                raise SliceError(str(exc)) from None
    if idx < window_days:
        raise SliceError(
            f"need {window_days} days before the target, only {idx} available"
        )
    return CalibrationSlice(
        dataset=dataset,
        start_idx=idx - window_days,
        stop_idx=idx,
        window_days=window_days,
    )
