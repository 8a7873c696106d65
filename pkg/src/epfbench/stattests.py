"""Significance tests for pairwise forecast comparisons.

Both tests operate on a loss differential series between two forecasts A
and B.  Positive mean differential means A incurs larger losses, so small
one-sided p-values read "B significantly more accurate than A".

The unconditional test statistic is ``sqrt(N) * mean / std`` with a
standard-normal reference.  The conditional test regresses the
differential on lagged information (a constant plus q lags), giving the
Wald statistic ``n * zbar' Omega^{-1} zbar`` with a chi-squared(q+1)
reference; with q = 0 it degenerates to the unconditional mean-zero test.

Pairwise results are arranged as a "chessboard": cell (row i, column j)
holds the p-value of the test whose rejection means model j beats model
i.  The SVG renderer colors cells from dark green (p near 0) and paints
p-values at or above 0.10 black.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import (
    ConditioningError,
    DegenerateDifferentialError,
    MetricError,
    ShapeError,
)
from .metrics import ForecastMatrix

P_VALUE_BLACK_LIMIT = 0.10
_DARKEST_GREEN = (0, 68, 27)
_LIGHTEST_GREEN = (199, 233, 192)


@dataclass(frozen=True)
class LossDifferential:
    """Per-day loss differences between two forecasts."""

    values: np.ndarray
    norm: int
    variant: str  # "multivariate" or "univariate"
    hour: int | None = None

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class TestResult:
    """``p_value`` is the directional (one-sided) probability used in the
    chessboards; ``p_two_sided`` is the plain two-sided test probability."""

    statistic: float
    p_value: float
    variant: str
    p_two_sided: float = float("nan")
    note: str = ""

    @property
    def degenerate(self) -> bool:
        return not np.isfinite(self.statistic)


def loss_differential(err_a, err_b, norm: int = 1, variant: str = "multivariate", hour: int | None = None) -> LossDifferential:
    """Daily loss differential from two (days x 24) error matrices.

    Multivariate: the difference of daily error-vector p-norms.
    Univariate: the difference of |error|^p at one fixed hour.
    """
    a = np.asarray(err_a, dtype=float)
    b = np.asarray(err_b, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[1] != 24:
        raise ShapeError(f"error matrices must share a (days, 24) shape, got {a.shape} and {b.shape}")
    if norm not in (1, 2):
        raise MetricError(f"norm must be 1 or 2, got {norm}")
    if variant == "multivariate":
        na = np.sum(np.abs(a) ** norm, axis=1) ** (1.0 / norm)
        nb = np.sum(np.abs(b) ** norm, axis=1) ** (1.0 / norm)
        values = na - nb
    elif variant == "univariate":
        if hour is None or not 0 <= hour < 24:
            raise MetricError("univariate differential needs an hour in 0..23")
        values = np.abs(a[:, hour]) ** norm - np.abs(b[:, hour]) ** norm
    else:
        raise MetricError(f"unknown variant {variant!r}")
    return LossDifferential(values=values, norm=norm, variant=variant, hour=hour)


def dm_test(diff: LossDifferential) -> TestResult:
    """Unconditional (z) test; one-sided p against "B more accurate than A"."""
    d = diff.values
    if d.shape[0] < 2:
        raise MetricError("differential needs at least 2 observations")
    mu = float(np.mean(d))
    sigma = float(np.std(d, ddof=1))
    if sigma == 0.0:
        raise DegenerateDifferentialError(
            "loss differential has zero variance (identical forecasts?)"
        )
    statistic = np.sqrt(d.shape[0]) * mu / sigma
    p = float(1.0 - stats.norm.cdf(statistic))
    return TestResult(
        statistic=float(statistic),
        p_value=p,
        p_two_sided=float(2.0 * (1.0 - stats.norm.cdf(abs(statistic)))),
        variant=f"DM-{diff.variant}",
        note="B better than A at p" if p < 0.05 else "",
    )


def dm_univariate_suite(err_a, err_b, norm: int = 1, level: float = 0.05):
    """One unconditional test per delivery hour.

    Returns 24 results (degenerate hours carry NaN statistics) and the
    number of hours rejected at the given level.
    """
    results = []
    rejections = 0
    for h in range(24):
        diff = loss_differential(err_a, err_b, norm=norm, variant="univariate", hour=h)
        try:
            res = dm_test(diff)
        except DegenerateDifferentialError:
            res = TestResult(
                statistic=float("nan"), p_value=float("nan"),
                variant="DM-univariate", note="degenerate",
            )
        results.append(res)
        if np.isfinite(res.p_value) and res.p_value < level:
            rejections += 1
    return results, rejections


def gw_test(diff: LossDifferential, q: int = 1) -> TestResult:
    """Conditional predictive-ability test with q lags of the differential.

    Directional one-sided p-value: the chi-squared tail probability when
    the mean differential is positive (evidence that B is better), else 1.
    """
    if q < 0:
        raise MetricError("lag order must be nonnegative")
    d = diff.values
    if d.shape[0] <= q + 10:
        raise MetricError(f"differential too short for lag order {q}: {d.shape[0]} <= {q + 10}")
    if float(np.std(d)) == 0.0:
        raise DegenerateDifferentialError(
            "loss differential has zero variance (identical forecasts?)"
        )
    n = d.shape[0] - q
    k = q + 1
    Z = np.empty((n, k))
    Z[:, 0] = d[q:]
    for lag in range(1, k):
        Z[:, lag] = d[q - lag : d.shape[0] - lag] * d[q:]
    zbar = Z.mean(axis=0)
    omega = (Z.T @ Z) / n
    try:
        sol = np.linalg.solve(omega, zbar)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(f"instrument covariance is singular: {exc}") from None
    statistic = float(n * zbar @ sol)
    p_two = float(1.0 - stats.chi2.cdf(statistic, df=k))
    directional = p_two if float(np.mean(d[q:])) > 0.0 else 1.0
    return TestResult(
        statistic=statistic,
        p_value=directional,
        p_two_sided=p_two,
        variant=f"GW-{diff.variant}(q={q})",
        note="B better than A at p" if directional < 0.05 else "",
    )


@dataclass(frozen=True)
class PValueMatrix:
    """k x k directional p-values; NaN marks the diagonal and degenerate pairs."""

    names: tuple
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        k = len(self.names)
        if vals.shape != (k, k):
            raise ShapeError(f"matrix must be ({k}, {k}), got {vals.shape}")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "names", tuple(self.names))


def pairwise_matrix(
    forecasts: dict,
    actuals: ForecastMatrix,
    test: str = "GW",
    norm: int = 1,
    q: int = 1,
) -> PValueMatrix:
    """Directional p-values for every ordered model pair.

    Cell (i, j) tests "column model j more accurate than row model i".
    Degenerate pairs (identical forecasts) are left blank.
    """
    if test not in ("DM", "GW"):
        raise MetricError(f"test must be DM or GW, got {test!r}")
    names = tuple(forecasts)
    errors = {}
    for name, fm in forecasts.items():
        if fm.dates != actuals.dates:
            raise ShapeError(f"forecast {name!r} is not date-aligned with the actuals")
        errors[name] = actuals.values - fm.values
    k = len(names)
    out = np.full((k, k), np.nan)
    for i, row_name in enumerate(names):
        for j, col_name in enumerate(names):
            if i == j:
                continue
            diff = loss_differential(errors[row_name], errors[col_name], norm=norm)
            try:
                if test == "DM":
                    out[i, j] = dm_test(diff).p_value
                else:
                    out[i, j] = gw_test(diff, q=q).p_value
            except DegenerateDifferentialError:
                out[i, j] = np.nan
    return PValueMatrix(names=names, values=out)


def write_pvalue_csv(matrix: PValueMatrix, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", *matrix.names])
        for name, row in zip(matrix.names, matrix.values):
            writer.writerow([name] + ["" if np.isnan(v) else repr(float(v)) for v in row])
    return path


def read_pvalue_csv(path) -> PValueMatrix:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    names = tuple(rows[0][1:])
    values = np.full((len(names), len(names)), np.nan)
    for i, row in enumerate(rows[1:]):
        for j, cell in enumerate(row[1:]):
            if cell.strip():
                values[i, j] = float(cell)
    return PValueMatrix(names=names, values=values)


def cell_color(p: float) -> str:
    """Fig-style color convention: green ramp below the 0.10 limit, black at
    or above it, light gray for blank cells."""
    if np.isnan(p):
        return "#d9d9d9"
    if p >= P_VALUE_BLACK_LIMIT:
        return "#000000"
    t = min(max(p / P_VALUE_BLACK_LIMIT, 0.0), 1.0)
    rgb = tuple(
        int(round(a + (b - a) * t)) for a, b in zip(_DARKEST_GREEN, _LIGHTEST_GREEN)
    )
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def render_chessboard(matrix: PValueMatrix, out_path, cell: int = 36) -> Path:
    """Write the p-value grid as an SVG heatmap plus a CSV of raw values.

    X-axis models are the "better" side of each test; the CSV lands next
    to the SVG with the same stem.
    """
    out_path = Path(out_path)
    k = len(matrix.names)
    left = 10 + 7 * max(len(n) for n in matrix.names)
    top = left
    width = left + k * cell + 10
    height = top + k * cell + 10
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    for i in range(k):
        for j in range(k):
            x = left + j * cell
            y = top + i * cell
            color = cell_color(matrix.values[i, j]) if i != j else "#ffffff"
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="{color}" stroke="#888" stroke-width="0.5"/>'
            )
    for j, name in enumerate(matrix.names):
        x = left + j * cell + cell // 2
        parts.append(
            f'<text x="{x}" y="{top - 6}" font-size="11" text-anchor="start" '
            f'transform="rotate(-60 {x} {top - 6})" font-family="sans-serif">{name}</text>'
        )
    for i, name in enumerate(matrix.names):
        y = top + i * cell + cell // 2 + 4
        parts.append(
            f'<text x="{left - 6}" y="{y}" font-size="11" text-anchor="end" '
            f'font-family="sans-serif">{name}</text>'
        )
    parts.append("</svg>")
    out_path.write_text("\n".join(parts))
    write_pvalue_csv(matrix, out_path.with_suffix(".csv"))
    return out_path


def render_metric_bars(title: str, labels, values, out_path) -> Path:
    """Horizontal bar chart of one metric across models, as a small SVG."""
    out_path = Path(out_path)
    labels = list(labels)
    values = [float(v) for v in values]
    if len(labels) != len(values) or not labels:
        raise ShapeError("one value per label required")
    left = 12 + 7 * max(len(str(l)) for l in labels)
    bar_h, gap, width = 18, 8, 560
    vmax = max(max(values), 1e-12)
    height = 34 + len(labels) * (bar_h + gap)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{left}" y="18" font-size="13" font-family="sans-serif" '
        f'font-weight="bold">{title}</text>',
    ]
    for i, (label, value) in enumerate(zip(labels, values)):
        y = 30 + i * (bar_h + gap)
        w = max((width - left - 80) * value / vmax, 0.0)
        parts.append(
            f'<text x="{left - 6}" y="{y + 13}" font-size="11" text-anchor="end" '
            f'font-family="sans-serif">{label}</text>'
        )
        parts.append(
            f'<rect x="{left}" y="{y}" width="{w:.1f}" height="{bar_h}" '
            'fill="#2b8cbe" stroke="#555" stroke-width="0.5"/>'
        )
        parts.append(
            f'<text x="{left + w + 5:.1f}" y="{y + 13}" font-size="11" '
            f'font-family="sans-serif">{value:.4g}</text>'
        )
    parts.append("</svg>")
    out_path.write_text("\n".join(parts))
    return out_path
