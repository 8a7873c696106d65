"""Regularized per-hour linear model with daily recalibration.

For each delivery hour a 247-regressor linear model is estimated by
minimizing ``RSS + lam * sum(|theta|)`` (no 1/n factor).  The weight
``lam`` is chosen per hour by computing the full solution path with least
angle regression and minimizing the in-sample AIC, after which the final
coefficients are re-estimated with cyclic coordinate descent at the
selected weight.

The path and the descent share one parameterization: at a path breakpoint
the maximum absolute residual correlation C satisfies ``lam = 2 C``, the
subgradient bound of the objective above, so ``lasso_cd`` at a breakpoint
weight reproduces the breakpoint coefficients.

Prices enter in asinh-transformed space, exogenous regressors are
robustly scaled, weekday dummies pass through untouched.  The design is
column-standardized for the solve; because every row's dummy block sums
to one, the centering intercept folds back exactly into the seven dummy
coefficients, so reported models are plain 247-vectors.
"""
from __future__ import annotations

import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import CalibrationSlice, MarketDataset, TestPeriod, calibration_window_slice
from .errors import ConvergenceWarning, NumericError
from .features import (
    DUMMY_SLICE,
    EXOG1_BLOCK_SLICES,
    EXOG2_BLOCK_SLICES,
    LEAR_N_FEATURES,
    PRICE_BLOCK_SLICES,
    build_lear_design,
    build_lear_row,
)
from .metrics import ForecastMatrix
from .transform import (
    AsinhParams,
    apply_asinh,
    apply_scale,
    fit_asinh,
    fit_robust_scale,
    invert_asinh,
)

DEFAULT_CD_TOL = 1e-4
DEFAULT_MAX_SWEEPS = 1000


def soft_threshold(z, threshold):
    return np.sign(z) * np.maximum(np.abs(z) - threshold, 0.0)


def _validate_finite(X, y):
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise NumericError("design matrix or target contains non-finite values")


def lasso_objective(X, y, theta, lam) -> float:
    r = y - X @ theta
    return float(r @ r + lam * np.sum(np.abs(theta)))


def lasso_cd(
    X,
    y,
    lam: float,
    tol: float = DEFAULT_CD_TOL,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
    theta0=None,
    gram=None,
    xty=None,
):
    """Minimize ``||y - X theta||^2 + lam * ||theta||_1`` by coordinate descent.

    Columns are scaled to unit norm internally (zero-norm columns are
    dropped and reported as 0) and coefficients un-scaled on return, so the
    result is the minimizer for the data exactly as given.  ``tol`` bounds
    the max coefficient change per sweep in the scaled space.  Hitting
    ``max_sweeps`` emits a ConvergenceWarning and returns the last iterate.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    _validate_finite(X, y)
    if lam < 0:
        raise NumericError(f"lam must be nonnegative, got {lam}")
    n, p = X.shape
    G = np.asarray(gram, dtype=float) if gram is not None else X.T @ X
    b = np.asarray(xty, dtype=float) if xty is not None else X.T @ y
    yty = float(y @ y)

    norms = np.sqrt(np.diag(G).clip(min=0.0))
    alive = norms > 0.0
    idx_alive = np.flatnonzero(alive)
    if idx_alive.size == 0:
        return np.zeros(p)
    na = norms[alive]
    Gs = G[np.ix_(alive, alive)] / np.outer(na, na)
    bs = b[alive] / na
    thr = lam / (2.0 * na)  # per-coordinate soft threshold in scaled space
    pen_w = lam / na

    if theta0 is not None:
        ts = np.asarray(theta0, dtype=float)[alive] * na
    else:
        ts = np.zeros(idx_alive.size)
    q = Gs @ ts  # running Gs @ ts

    def objective():
        return yty - 2.0 * float(ts @ bs) + float(ts @ q) + float(pen_w @ np.abs(ts))

    prev_obj = objective()
    order_all = np.arange(idx_alive.size)
    work = order_all  # active-set cycling: shrink to nonzeros between full sweeps
    full_sweep = True
    converged = False
    sweep = -1
    for sweep in range(max_sweeps):
        if sweep and sweep % 100 == 0:
            q = Gs @ ts  # refresh against drift
        max_delta = 0.0
        for j in work:
            rho = bs[j] - q[j] + ts[j]
            new = soft_threshold(rho, thr[j])
            delta = new - ts[j]
            if delta != 0.0:
                q += delta * Gs[:, j]
                ts[j] = new
                max_delta = max(max_delta, abs(delta))
        obj = objective()
        # descent property of exact coordinate minimization
        assert obj <= prev_obj + 1e-9 * (1.0 + abs(prev_obj)), (
            f"objective increased in sweep {sweep}: {prev_obj} -> {obj}"
        )
        prev_obj = obj
        if max_delta < tol:
            if full_sweep:
                converged = True
                break
            work = order_all
            full_sweep = True
        else:
            nz = np.flatnonzero(ts)
            work = nz if nz.size else order_all
            full_sweep = work.size == order_all.size
    if not converged and max_sweeps > 0 and sweep == max_sweeps - 1:
        warnings.warn(
            f"coordinate descent hit the {max_sweeps}-sweep budget "
            f"(last max change {max_delta:.3g})",
            ConvergenceWarning,
            stacklevel=2,
        )
    theta = np.zeros(p)
    theta[idx_alive] = ts / na
    return theta


@dataclass(frozen=True)
class LarsPath:
    """Solution-path breakpoints with weights in the ``lam = 2C`` scale."""

    lambdas: np.ndarray  # strictly decreasing
    thetas: np.ndarray  # (n_breakpoints, p)
    n_active: np.ndarray
    rss: np.ndarray

    @property
    def n_breakpoints(self) -> int:
        return self.lambdas.shape[0]


def lars_path(X, y, gram=None, xty=None, max_steps=None) -> LarsPath:
    """Full LASSO path by least angle regression with drop steps.

    The path starts at the all-zero solution and ends when the residual
    correlations vanish or the active set reaches ``min(p, n - 1)``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    _validate_finite(X, y)
    n, p = X.shape
    G = np.asarray(gram, dtype=float) if gram is not None else X.T @ X
    b = np.asarray(xty, dtype=float) if xty is not None else X.T @ y
    yty = float(y @ y)

    norms2 = np.diag(G).clip(min=0.0)
    dead = norms2 <= 0.0
    max_active = min(int(np.sum(~dead)), max(n - 1, 0))
    if max_steps is None:
        max_steps = 8 * max(max_active, 1) + 8

    tiny = 1e-12 * max(1.0, float(np.max(np.abs(b))) if b.size else 1.0)
    theta = np.zeros(p)
    active: list[int] = []
    lambdas, thetas, n_act, rss = [], [], [], []
    just_dropped = False

    while True:
        Gt = G @ theta
        c = b - Gt
        c[dead] = 0.0
        C = float(np.max(np.abs(c))) if p else 0.0
        lambdas.append(2.0 * C)
        thetas.append(theta.copy())
        n_act.append(len(active))
        rss.append(max(yty - 2.0 * float(theta @ b) + float(theta @ Gt), 0.0))
        if C <= tiny or len(lambdas) > max_steps:
            if len(lambdas) > max_steps:
                warnings.warn("LARS hit its step budget", ConvergenceWarning, stacklevel=2)
            break
        if not just_dropped:
            if len(active) < max_active:
                mask = np.ones(p, dtype=bool)
                mask[active] = False
                mask[dead] = False
                cand = np.flatnonzero(mask)
                if cand.size:
                    active.append(int(cand[np.argmax(np.abs(c[cand]))]))
            elif not active or np.max(np.abs(c[active])) <= tiny:
                break  # saturated and stationary on the active set
        just_dropped = False

        s = np.sign(c[active])
        G_aa = G[np.ix_(active, active)]
        try:
            w = np.linalg.solve(G_aa, s)
        except np.linalg.LinAlgError:
            w, *_ = np.linalg.lstsq(G_aa, s, rcond=None)
        if not np.all(np.isfinite(w)) or np.max(np.abs(w)) <= 0.0:
            warnings.warn("LARS direction degenerate; path truncated", ConvergenceWarning, stacklevel=2)
            break
        a = G[:, active] @ w

        gamma_max = C
        gamma_enter = np.inf
        if len(active) < max_active:
            mask = np.ones(p, dtype=bool)
            mask[active] = False
            mask[dead] = False
            for j in np.flatnonzero(mask):
                for g in ((C - c[j]) / (1.0 - a[j]) if abs(1.0 - a[j]) > 1e-15 else np.inf,
                          (C + c[j]) / (1.0 + a[j]) if abs(1.0 + a[j]) > 1e-15 else np.inf):
                    if 1e-15 < g < gamma_enter:
                        gamma_enter = g
        gamma_drop = np.inf
        drop_j = None
        for pos, j in enumerate(active):
            if w[pos] != 0.0:
                g = -theta[j] / w[pos]
                if 1e-15 < g < gamma_drop:
                    gamma_drop = g
                    drop_j = j
        gamma = min(gamma_max, gamma_enter, gamma_drop)
        theta[active] += gamma * w
        if drop_j is not None and gamma_drop < gamma_enter and gamma_drop < gamma_max:
            theta[drop_j] = 0.0
            active.remove(drop_j)
            just_dropped = True

    return LarsPath(
        lambdas=np.asarray(lambdas),
        thetas=np.asarray(thetas),
        n_active=np.asarray(n_act, dtype=int),
        rss=np.asarray(rss),
    )


def select_lambda_aic(path: LarsPath, n: int) -> float:
    """Path weight minimizing the small-sample-corrected AIC.

    The criterion is ``n*ln(RSS/n) + 2*k + 2*k*(k+1)/(n-k-1)`` with
    ``k = n_active``; the correction term vanishes for n >> k, recovering
    the plain information criterion, and diverges as the active set
    approaches the sample size.  Without it the criterion degenerates in
    the p > n regime (short calibration windows): ``ln(RSS/n)`` tends to
    minus infinity along the path, so the saturated interpolating
    breakpoint always wins, which is statistically meaningless.

    Ties go to the larger weight (the sparser model).  If every breakpoint
    interpolates (RSS = 0), the smallest such weight is returned.
    """
    if path.n_breakpoints == 0:
        raise NumericError("empty solution path")
    rss = path.rss
    zeroish = rss <= 0.0
    if np.all(zeroish):
        return float(path.lambdas[np.flatnonzero(zeroish)[-1]])
    k = path.n_active.astype(float)
    saturated = k >= n - 1  # capacity interpolation: not a valid candidate
    with np.errstate(divide="ignore"):
        correction = 2.0 * k * (k + 1.0) / np.maximum(n - k - 1.0, 1e-300)
        aic = n * np.log(np.maximum(rss, 1e-300) / n) + 2.0 * k + correction
    aic = np.where(zeroish & ~saturated, -np.inf, aic)  # sparse perfect fit wins
    aic = np.where(saturated, np.inf, aic)
    if not np.any(aic < np.inf):
        # every breakpoint saturated: keep the sparsest one past the null model
        best = min(1, path.n_breakpoints - 1)
        return float(path.lambdas[best])
    best = 0
    for i in range(1, path.n_breakpoints):
        if aic[i] < aic[best]:
            best = i
    return float(path.lambdas[best])


@dataclass(frozen=True)
class HourModel:
    """One hour's coefficients in transformed-feature units."""

    theta: np.ndarray  # length 247
    lam: float
    n_active: int


@dataclass(frozen=True)
class LearModel:
    hour_models: tuple
    price_params: AsinhParams
    exog1_params: AsinhParams
    exog2_params: AsinhParams
    window_days: int
    exog_asinh: bool = False
    # standardized-space coefficients, kept only to warm-start the next day
    warm_state: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def theta_matrix(self) -> np.ndarray:
        return np.stack([hm.theta for hm in self.hour_models])


def transform_design(X, price_params, exog1_params, exog2_params, exog_asinh=False):
    """Apply the per-series transforms to raw feature columns (copy).

    Prices always go through asinh; exogenous regressors get plain robust
    scaling by default, or the same asinh map when ``exog_asinh`` is set.
    """
    Z = np.array(X, dtype=float)
    exog_map = apply_asinh if exog_asinh else apply_scale
    for sl in PRICE_BLOCK_SLICES:
        Z[..., sl] = apply_asinh(Z[..., sl], price_params)
    for sl in EXOG1_BLOCK_SLICES:
        Z[..., sl] = exog_map(Z[..., sl], exog1_params)
    for sl in EXOG2_BLOCK_SLICES:
        Z[..., sl] = exog_map(Z[..., sl], exog2_params)
    return Z


def fit_day(
    cal_slice: CalibrationSlice,
    warm_state=None,
    tol: float = DEFAULT_CD_TOL,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
    exog_asinh: bool = False,
) -> LearModel:
    """Fit the 24 per-hour models on one calibration window."""
    price_params = fit_asinh(cal_slice.prices)
    exog1_params = fit_robust_scale(cal_slice.exog1)
    exog2_params = fit_robust_scale(cal_slice.exog2)

    X_raw, Y_raw = build_lear_design(cal_slice)
    X = transform_design(X_raw, price_params, exog1_params, exog2_params, exog_asinh)
    Y = apply_asinh(Y_raw, price_params)

    n = X.shape[0]
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    alive = sd > 0.0
    Xs = np.zeros_like(X)
    Xs[:, alive] = (X[:, alive] - mu[alive]) / sd[alive]
    G = Xs.T @ Xs

    hour_models = []
    warm_out = np.zeros((24, LEAR_N_FEATURES))
    for h in range(24):
        y = Y[:, h]
        ym = float(y.mean())
        yc = y - ym
        xty = Xs.T @ yc
        path = lars_path(Xs, yc, gram=G, xty=xty)
        lam = select_lambda_aic(path, n)
        theta0 = warm_state[h] if warm_state is not None else None
        theta_std = lasso_cd(
            Xs, yc, lam, tol=tol, max_sweeps=max_sweeps, theta0=theta0, gram=G, xty=xty
        )
        warm_out[h] = theta_std
        theta = np.zeros(LEAR_N_FEATURES)
        theta[alive] = theta_std[alive] / sd[alive]
        intercept = ym - float(theta @ mu)
        theta[DUMMY_SLICE] += intercept  # exact: the dummy block sums to 1
        hour_models.append(
            HourModel(theta=theta, lam=lam, n_active=int(np.count_nonzero(theta_std)))
        )
    return LearModel(
        hour_models=tuple(hour_models),
        price_params=price_params,
        exog1_params=exog1_params,
        exog2_params=exog2_params,
        window_days=cal_slice.window_days,
        exog_asinh=exog_asinh,
        warm_state=warm_out,
    )


def forecast_day(model: LearModel, dataset: MarketDataset, target_day) -> np.ndarray:
    """24 price forecasts for one day, back in price units."""
    raw = build_lear_row(dataset, target_day)
    row = transform_design(
        raw, model.price_params, model.exog1_params, model.exog2_params,
        model.exog_asinh,
    )
    z = model.theta_matrix @ row
    return invert_asinh(z, model.price_params)


def _backtest_day_indices(dataset: MarketDataset, test_period: TestPeriod, days):
    if days is None:
        start = dataset.index_of(test_period.start_date)
        stop = dataset.index_of(test_period.end_date)
        return list(range(start, stop + 1))
    return [dataset.index_of(d) for d in days]


def _lear_block(args):
    dataset, indices, window_days, tol, max_sweeps, warm_start = args
    rows = []
    warm = None
    for idx in indices:
        cal = calibration_window_slice(dataset, idx, window_days)
        model = fit_day(cal, warm_state=warm, tol=tol, max_sweeps=max_sweeps)
        warm = model.warm_state if warm_start else None
        rows.append(forecast_day(model, dataset, idx))
    return rows


def backtest_lear(
    dataset: MarketDataset,
    test_period: TestPeriod,
    window_days: int,
    days=None,
    warm_start: bool = True,
    jobs: int = 1,
    on_day=None,
    tol: float = DEFAULT_CD_TOL,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
) -> ForecastMatrix:
    """Daily-recalibrated forecasts over a test period.

    Each test day is forecast by a model fitted on the ``window_days``
    window ending the previous day.  ``days`` restricts computation to a
    subset of dates (resume support).  ``jobs > 1`` splits days across
    processes (warm starts are then disabled); ``on_day(date, row,
    seconds)`` is invoked after every recalibration in the serial path.
    """
    indices = _backtest_day_indices(dataset, test_period, days)
    if jobs > 1:
        chunks = np.array_split(np.asarray(indices), jobs)
        tasks = [
            (dataset, [int(i) for i in chunk], window_days, tol, max_sweeps, False)
            for chunk in chunks
            if len(chunk)
        ]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            blocks = list(pool.map(_lear_block, tasks))
        rows = [row for block in blocks for row in block]
    else:
        rows = []
        warm = None
        for idx in indices:
            t0 = time.perf_counter()
            cal = calibration_window_slice(dataset, idx, window_days)
            model = fit_day(cal, warm_state=warm, tol=tol, max_sweeps=max_sweeps)
            warm = model.warm_state if warm_start else None
            row = forecast_day(model, dataset, idx)
            rows.append(row)
            if on_day is not None:
                on_day(dataset.dates[idx], row, time.perf_counter() - t0)
    return ForecastMatrix(
        dates=tuple(dataset.dates[i] for i in indices), values=np.asarray(rows)
    )
