"""Feedforward network with two hidden layers and 24 outputs.

Implemented directly on numpy: explicit forward pass, analytic
backpropagation (checked against finite differences in the tests), Adam
updates, optional batch normalization before each hidden activation, and
inverted dropout after it.  The training loss is the mean absolute error
plus an L1 penalty on the kernel matrices; early stopping tracks the
validation MAE in price units and the best-epoch weights are restored.

Daily recalibration retrains from scratch on the 208-week window ending
the day before the target, with 42 randomly chosen full weeks held out
for early stopping.
"""
from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .data import MarketDataset, TestPeriod
from .errors import ConfigurationError, DivergenceError, ShapeError, SliceError
from .features import FeatureMask, build_dnn_design, build_dnn_row
from .metrics import ForecastMatrix
from .transform import (
    SCALER_KINDS,
    DnnScaler,
    apply_dnn_scaler,
    fit_dnn_scaler,
    invert_dnn_scaler,
)

ACTIVATION_KINDS = ("relu", "tanh", "sigmoid", "softplus", "leaky_relu")
INIT_KINDS = ("glorot_uniform", "he_uniform", "lecun_uniform")
LEAKY_SLOPE = 0.01
BN_EPS = 1e-5
BN_MOMENTUM = 0.9

DEFAULT_BATCH_SIZE = 192
DEFAULT_MAX_EPOCHS = 1000
DEFAULT_PATIENCE = 20

WINDOW_WEEKS = 208
VALIDATION_WEEKS = 42


@dataclass(frozen=True)
class DnnHyperparams:
    n1: int = 64
    n2: int = 32
    activation: str = "relu"
    dropout_rate: float = 0.0
    learning_rate: float = 1e-3
    use_batch_norm: bool = False
    scaler_kind: str = "standardize"
    weight_init: str = "glorot_uniform"
    l1_coefficient: float = 0.0
    mask: FeatureMask = field(default_factory=FeatureMask)

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise ConfigurationError("hidden layers need at least one neuron")
        if self.activation not in ACTIVATION_KINDS + ("linear",):
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout_rate <= 0.5:
            raise ConfigurationError("dropout rate must lie in [0, 0.5]")
        if not 1e-5 <= self.learning_rate <= 1e-1:
            raise ConfigurationError("learning rate must lie in [1e-5, 1e-1]")
        if self.scaler_kind not in SCALER_KINDS:
            raise ConfigurationError(f"unknown scaler kind {self.scaler_kind!r}")
        if self.weight_init not in INIT_KINDS + ("zeros",):
            raise ConfigurationError(f"unknown weight init {self.weight_init!r}")
        if self.l1_coefficient < 0.0:
            raise ConfigurationError("L1 coefficient must be nonnegative")


def _activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "sigmoid":
        return expit(z)
    if kind == "softplus":
        return np.logaddexp(0.0, z)
    if kind == "leaky_relu":
        return np.where(z > 0.0, z, LEAKY_SLOPE * z)
    if kind == "linear":
        return z
    raise ConfigurationError(f"unknown activation {kind!r}")


def _activate_grad(z, kind):
    if kind == "relu":
        return (z > 0.0).astype(float)
    if kind == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    if kind == "sigmoid":
        s = expit(z)
        return s * (1.0 - s)
    if kind == "softplus":
        return expit(z)
    if kind == "leaky_relu":
        return np.where(z > 0.0, 1.0, LEAKY_SLOPE)
    if kind == "linear":
        return np.ones_like(z)
    raise ConfigurationError(f"unknown activation {kind!r}")


def _init_matrix(rng, fan_in, fan_out, kind):
    if kind == "zeros":
        return np.zeros((fan_in, fan_out))
    if kind == "glorot_uniform":
        limit = np.sqrt(6.0 / (fan_in + fan_out))
    elif kind == "he_uniform":
        limit = np.sqrt(6.0 / fan_in)
    elif kind == "lecun_uniform":
        limit = np.sqrt(3.0 / fan_in)
    else:
        raise ConfigurationError(f"unknown weight init {kind!r}")
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class DnnModel:
    hyperparams: DnnHyperparams
    input_dim: int
    seed: int
    params: dict
    running: dict
    input_scaler: DnnScaler | None = None
    target_scaler: DnnScaler | None = None
    history: list = field(default_factory=list)
    best_val_mae: float | None = None


def build_network(hyperparams: DnnHyperparams, input_dim: int, seed: int) -> DnnModel:
    """Fresh network with seed-deterministic weights."""
    if input_dim != hyperparams.mask.n_features:
        raise ConfigurationError(
            f"input_dim {input_dim} does not match the mask row length "
            f"{hyperparams.mask.n_features}"
        )
    rng = np.random.default_rng(seed)
    hp = hyperparams
    params = {
        "W1": _init_matrix(rng, input_dim, hp.n1, hp.weight_init),
        "b1": np.zeros(hp.n1),
        "W2": _init_matrix(rng, hp.n1, hp.n2, hp.weight_init),
        "b2": np.zeros(hp.n2),
        "W3": _init_matrix(rng, hp.n2, 24, hp.weight_init),
        "b3": np.zeros(24),
    }
    running = {}
    if hp.use_batch_norm:
        for layer, width in ((1, hp.n1), (2, hp.n2)):
            params[f"g{layer}"] = np.ones(width)
            params[f"be{layer}"] = np.zeros(width)
            running[f"mean{layer}"] = np.zeros(width)
            running[f"var{layer}"] = np.ones(width)
    return DnnModel(
        hyperparams=hp, input_dim=input_dim, seed=seed, params=params, running=running
    )


def _hidden_forward(params, running, hp, X, training, masks, caches):
    """Shared two-hidden-layer forward; fills caches when training."""
    a = X
    for layer in (1, 2):
        z = a @ params[f"W{layer}"] + params[f"b{layer}"]
        if hp.use_batch_norm:
            if training:
                mu = z.mean(axis=0)
                var = z.var(axis=0)
                running[f"mean{layer}"] = (
                    BN_MOMENTUM * running[f"mean{layer}"] + (1 - BN_MOMENTUM) * mu
                )
                running[f"var{layer}"] = (
                    BN_MOMENTUM * running[f"var{layer}"] + (1 - BN_MOMENTUM) * var
                )
            else:
                mu = running[f"mean{layer}"]
                var = running[f"var{layer}"]
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            zhat = (z - mu) * inv_std
            zb = params[f"g{layer}"] * zhat + params[f"be{layer}"]
        else:
            zhat, inv_std, zb = None, None, z
        act = _activate(zb, hp.activation)
        mask = masks.get(layer) if masks else None
        out = act * mask if mask is not None else act
        if caches is not None:
            caches[layer] = {
                "a_in": a, "z": z, "zhat": zhat, "inv_std": inv_std,
                "zb": zb, "act": act, "mask": mask,
            }
        a = out
    return a @ params["W3"] + params["b3"], a


def _loss_and_grads(params, running, hp, X, Y, masks=None):
    """Training-mode loss (MAE + L1 kernel penalty) and analytic gradients."""
    caches: dict = {}
    pred, a2 = _hidden_forward(params, running, hp, X, True, masks or {}, caches)
    B = X.shape[0]
    resid = Y - pred
    loss = float(np.mean(np.abs(resid)))
    l1 = hp.l1_coefficient
    if l1:
        loss += l1 * sum(float(np.sum(np.abs(params[k]))) for k in ("W1", "W2", "W3"))

    grads = {}
    dpred = -np.sign(resid) / resid.size
    grads["W3"] = a2.T @ dpred
    grads["b3"] = dpred.sum(axis=0)
    dout = dpred @ params["W3"].T
    for layer in (2, 1):
        c = caches[layer]
        dact = dout * c["mask"] if c["mask"] is not None else dout
        dzb = dact * _activate_grad(c["zb"], hp.activation)
        if hp.use_batch_norm:
            grads[f"g{layer}"] = (dzb * c["zhat"]).sum(axis=0)
            grads[f"be{layer}"] = dzb.sum(axis=0)
            dzhat = dzb * params[f"g{layer}"]
            m = dzhat.shape[0]
            dz = (c["inv_std"] / m) * (
                m * dzhat
                - dzhat.sum(axis=0)
                - c["zhat"] * (dzhat * c["zhat"]).sum(axis=0)
            )
        else:
            dz = dzb
        grads[f"W{layer}"] = c["a_in"].T @ dz
        grads[f"b{layer}"] = dz.sum(axis=0)
        if layer == 2:
            dout = dz @ params["W2"].T
    if l1:
        for k in ("W1", "W2", "W3"):
            grads[k] = grads[k] + l1 * np.sign(params[k])
    return loss, grads


def forward(model: DnnModel, rows, price_space: bool = False, training: bool = False, rng=None) -> np.ndarray:
    """Network outputs for raw (unscaled) feature rows.

    Dropout is applied only in training mode; with ``price_space`` the
    outputs are mapped back through the target scaler.
    """
    X = np.asarray(rows, dtype=float)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.shape[1] != model.input_dim:
        raise ShapeError(f"expected rows of length {model.input_dim}, got {X.shape[1]}")
    if model.input_scaler is not None:
        X = apply_dnn_scaler(X, model.input_scaler)
    masks = {}
    if training and model.hyperparams.dropout_rate > 0.0:
        if rng is None:
            raise ConfigurationError("training-mode forward with dropout needs an rng")
        masks = _dropout_masks(model.hyperparams, X.shape[0], rng)
    pred, _ = _hidden_forward(
        model.params, model.running, model.hyperparams, X, training, masks, None
    )
    if price_space and model.target_scaler is not None:
        pred = invert_dnn_scaler(pred, model.target_scaler)
    return pred[0] if single else pred


def _dropout_masks(hp, batch, rng):
    keep = 1.0 - hp.dropout_rate
    return {
        layer: (rng.random((batch, width)) < keep) / keep
        for layer, width in ((1, hp.n1), (2, hp.n2))
    }


class _Adam:
    def __init__(self, param_names, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = {k: 0.0 for k in param_names}
        self.v = {k: 0.0 for k in param_names}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            mhat = self.m[k] / (1 - self.b1**self.t)
            vhat = self.v[k] / (1 - self.b2**self.t)
            params[k] = params[k] - self.lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass(frozen=True)
class TrainSplit:
    """Materialized training/validation rows for one fit.

    Targets are raw prices; scaling happens inside ``train`` against the
    model's frozen scalers.  ``mode`` records how the weeks were chosen.
    """

    X_train: np.ndarray
    Y_train: np.ndarray
    X_val: np.ndarray
    Y_val: np.ndarray
    mode: str  # "chronological-tail" or "random-weeks"
    n_weeks: int = WINDOW_WEEKS
    val_week_ids: tuple = ()

    def __post_init__(self):
        if self.X_train.shape[0] != self.Y_train.shape[0]:
            raise ShapeError("training features and targets disagree")
        if self.X_val.shape[0] != self.Y_val.shape[0]:
            raise ShapeError("validation features and targets disagree")


def _window_week_days(start_idx: int, n_weeks: int):
    """Day indices of each week in a window; week w covers days 7w..7w+6."""
    return [
        list(range(start_idx + 7 * w, start_idx + 7 * w + 7)) for w in range(n_weeks)
    ]


def _usable(days, start_idx):
    return [d for d in days if d - start_idx >= 7]  # first week only provides lags


def make_random_week_split(
    dataset: MarketDataset,
    target_idx: int,
    mask: FeatureMask,
    rng,
    window_days: int = WINDOW_WEEKS * 7,
    val_weeks: int = VALIDATION_WEEKS,
) -> TrainSplit:
    """Random full-week holdout on the window ending the day before target.

    Validation weeks are drawn from weeks 1.. so every validation week
    contributes 7 usable rows (the window's first week only provides lags).
    """
    start = target_idx - window_days
    if start < 0:
        raise SliceError(
            f"need {window_days} days before the target, only {target_idx} available"
        )
    n_weeks = window_days // 7
    if not 1 <= val_weeks <= n_weeks - 1:
        raise SliceError(
            f"cannot hold out {val_weeks} validation weeks from a {n_weeks}-week window"
        )
    weeks = _window_week_days(start, n_weeks)
    chosen = rng.choice(np.arange(1, n_weeks), size=val_weeks, replace=False)
    chosen_set = set(int(w) for w in chosen)
    train_days, val_days = [], []
    for w, days in enumerate(weeks):
        (val_days if w in chosen_set else train_days).extend(_usable(days, start))
    X_tr, Y_tr = build_dnn_design(dataset, train_days, mask)
    X_va, Y_va = build_dnn_design(dataset, val_days, mask)
    return TrainSplit(
        X_train=X_tr, Y_train=Y_tr, X_val=X_va, Y_val=Y_va,
        mode="random-weeks", n_weeks=n_weeks, val_week_ids=tuple(sorted(chosen_set)),
    )


def make_chronological_split(
    dataset: MarketDataset,
    test_start_idx: int,
    mask: FeatureMask,
    window_days: int = WINDOW_WEEKS * 7,
    val_weeks: int = VALIDATION_WEEKS,
) -> TrainSplit:
    """Fixed split for hyperparameter search: validation is the last
    ``val_weeks`` weeks before the test period."""
    start = test_start_idx - window_days
    if start < 0:
        raise SliceError(
            f"need {window_days} days before the test period, only {test_start_idx} available"
        )
    n_weeks = window_days // 7
    weeks = _window_week_days(start, n_weeks)
    split_at = n_weeks - val_weeks
    train_days, val_days = [], []
    for w, days in enumerate(weeks):
        (train_days if w < split_at else val_days).extend(_usable(days, start))
    X_tr, Y_tr = build_dnn_design(dataset, train_days, mask)
    X_va, Y_va = build_dnn_design(dataset, val_days, mask)
    return TrainSplit(
        X_train=X_tr, Y_train=Y_tr, X_val=X_va, Y_val=Y_va,
        mode="chronological-tail", n_weeks=n_weeks,
        val_week_ids=tuple(range(split_at, n_weeks)),
    )


def fit_scalers(model: DnnModel, split: TrainSplit) -> DnnModel:
    """Freeze input/target scalers on the training rows only."""
    kind = model.hyperparams.scaler_kind
    model.input_scaler = fit_dnn_scaler(kind, split.X_train)
    model.target_scaler = fit_dnn_scaler(kind, split.Y_train)
    return model


def train(
    model: DnnModel,
    split: TrainSplit,
    max_epochs: int = DEFAULT_MAX_EPOCHS,
    patience: int = DEFAULT_PATIENCE,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> DnnModel:
    """Adam on MAE + L1 with early stopping on validation MAE (price units).

    The returned model carries the weights of the best validation epoch
    and an epoch history of (train loss, validation MAE).
    """
    if model.input_scaler is None or model.target_scaler is None:
        raise ConfigurationError("scalers must be fitted (on training rows) before train()")
    hp = model.hyperparams
    rng = np.random.default_rng([model.seed, 0xE90C])
    Xt = apply_dnn_scaler(split.X_train, model.input_scaler)
    Yt = apply_dnn_scaler(split.Y_train, model.target_scaler)
    Xv = apply_dnn_scaler(split.X_val, model.input_scaler)

    params = model.params
    opt = _Adam(list(params), lr=hp.learning_rate)
    n = Xt.shape[0]
    best_val = np.inf
    best_params = {k: v.copy() for k, v in params.items()}
    best_running = {k: v.copy() for k, v in model.running.items()}
    since_best = 0
    for epoch in range(1, max_epochs + 1):
        order = rng.permutation(n)
        batch_losses = []
        for lo in range(0, n, batch_size):
            sel = order[lo : lo + batch_size]
            masks = (
                _dropout_masks(hp, sel.size, rng) if hp.dropout_rate > 0.0 else None
            )
            loss, grads = _loss_and_grads(
                params, model.running, hp, Xt[sel], Yt[sel], masks
            )
            if not np.isfinite(loss):
                raise DivergenceError(f"training loss became non-finite at epoch {epoch}", epoch=epoch)
            opt.step(params, grads)
            batch_losses.append(loss)
        val_pred, _ = _hidden_forward(params, model.running, hp, Xv, False, {}, None)
        val_prices = invert_dnn_scaler(val_pred, model.target_scaler)
        val_mae = float(np.mean(np.abs(split.Y_val - val_prices)))
        if not np.isfinite(val_mae):
            raise DivergenceError(f"validation error became non-finite at epoch {epoch}", epoch=epoch)
        model.history.append((epoch, float(np.mean(batch_losses)), val_mae))
        if val_mae < best_val:
            best_val = val_mae
            best_params = {k: v.copy() for k, v in params.items()}
            best_running = {k: v.copy() for k, v in model.running.items()}
            since_best = 0
        else:
            since_best += 1
            if since_best > patience:
                break
    model.params = best_params
    model.running = best_running
    model.best_val_mae = float(best_val)
    return model


def recalibrate_forecast_day(
    dataset: MarketDataset,
    target_day,
    hyperparams: DnnHyperparams,
    seed: int,
    max_epochs: int = DEFAULT_MAX_EPOCHS,
    patience: int = DEFAULT_PATIENCE,
    batch_size: int = DEFAULT_BATCH_SIZE,
    window_days: int = WINDOW_WEEKS * 7,
    val_weeks: int = VALIDATION_WEEKS,
) -> np.ndarray:
    """Retrain from scratch on the window before the target day and forecast it."""
    target_idx = (
        int(target_day)
        if isinstance(target_day, (int, np.integer))
        else dataset.index_of(target_day)
    )
    split_rng = np.random.default_rng([seed, target_idx, 0x5EED])
    split = make_random_week_split(
        dataset, target_idx, hyperparams.mask, split_rng,
        window_days=window_days, val_weeks=val_weeks,
    )
    model = build_network(hyperparams, hyperparams.mask.n_features, seed=seed + target_idx)
    fit_scalers(model, split)
    train(model, split, max_epochs=max_epochs, patience=patience, batch_size=batch_size)
    row = build_dnn_row(dataset, target_idx, hyperparams.mask)
    return forward(model, row, price_space=True)


def _dnn_block(args):
    (dataset, indices, hyperparams, seed, max_epochs, patience, batch_size,
     window_days, val_weeks) = args
    return [
        recalibrate_forecast_day(
            dataset, idx, hyperparams, seed,
            max_epochs=max_epochs, patience=patience, batch_size=batch_size,
            window_days=window_days, val_weeks=val_weeks,
        )
        for idx in indices
    ]


def backtest_dnn(
    dataset: MarketDataset,
    test_period: TestPeriod,
    hyperparams: DnnHyperparams,
    seed: int,
    days=None,
    jobs: int = 1,
    on_day=None,
    max_epochs: int = DEFAULT_MAX_EPOCHS,
    patience: int = DEFAULT_PATIENCE,
    batch_size: int = DEFAULT_BATCH_SIZE,
    window_days: int = WINDOW_WEEKS * 7,
    val_weeks: int = VALIDATION_WEEKS,
) -> ForecastMatrix:
    """Daily-recalibrated network forecasts over a test period.

    Each day retrains from scratch with a day-specific deterministic seed
    derived from ``seed``, so repeated runs reproduce the same matrix.
    """
    if days is None:
        start = dataset.index_of(test_period.start_date)
        stop = dataset.index_of(test_period.end_date)
        indices = list(range(start, stop + 1))
    else:
        indices = [dataset.index_of(d) for d in days]
    if jobs > 1:
        chunks = [c for c in np.array_split(np.asarray(indices), jobs) if len(c)]
        tasks = [
            (dataset, [int(i) for i in c], hyperparams, seed, max_epochs, patience,
             batch_size, window_days, val_weeks)
            for c in chunks
        ]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            blocks = list(pool.map(_dnn_block, tasks))
        rows = [row for block in blocks for row in block]
    else:
        rows = []
        for idx in indices:
            t0 = time.perf_counter()
            row = recalibrate_forecast_day(
                dataset, idx, hyperparams, seed,
                max_epochs=max_epochs, patience=patience, batch_size=batch_size,
                window_days=window_days, val_weeks=val_weeks,
            )
            rows.append(row)
            if on_day is not None:
                on_day(dataset.dates[idx], row, time.perf_counter() - t0)
    return ForecastMatrix(
        dates=tuple(dataset.dates[i] for i in indices), values=np.asarray(rows)
    )


# ---------------------------------------------------------------------------
# checkpoint serialization

CHECKPOINT_FORMAT = "epfbench-dnn-1"


def save_checkpoint(model: DnnModel, path) -> Path:
    """Versioned JSON checkpoint: shapes, hyperparams, scalers, flat weights."""
    hp = model.hyperparams
    payload = {
        "format": CHECKPOINT_FORMAT,
        "input_dim": model.input_dim,
        "seed": model.seed,
        "best_val_mae": model.best_val_mae,
        "hyperparams": {
            "n1": hp.n1, "n2": hp.n2, "activation": hp.activation,
            "dropout_rate": hp.dropout_rate, "learning_rate": hp.learning_rate,
            "use_batch_norm": hp.use_batch_norm, "scaler_kind": hp.scaler_kind,
            "weight_init": hp.weight_init, "l1_coefficient": hp.l1_coefficient,
            "mask": {name: getattr(hp.mask, name) for name in FeatureMask.flag_names()},
        },
        "params": {
            k: {"shape": list(v.shape), "data": np.asarray(v).ravel().tolist()}
            for k, v in model.params.items()
        },
        "running": {
            k: {"shape": list(v.shape), "data": np.asarray(v).ravel().tolist()}
            for k, v in model.running.items()
        },
        "scalers": {
            name: (
                None
                if scaler is None
                else {
                    "kind": scaler.kind,
                    "center": scaler.center.tolist(),
                    "scale": scaler.scale.tolist(),
                }
            )
            for name, scaler in (
                ("input", model.input_scaler), ("target", model.target_scaler)
            )
        },
    }
    path = Path(path)
    path.write_text(json.dumps(payload))
    return path


def load_checkpoint(path) -> DnnModel:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ConfigurationError(f"unsupported checkpoint format {payload.get('format')!r}")
    hp_raw = dict(payload["hyperparams"])
    mask = FeatureMask(**hp_raw.pop("mask"))
    hp = DnnHyperparams(mask=mask, **hp_raw)
    model = DnnModel(
        hyperparams=hp,
        input_dim=int(payload["input_dim"]),
        seed=int(payload["seed"]),
        params={
            k: np.asarray(v["data"], dtype=float).reshape(v["shape"])
            for k, v in payload["params"].items()
        },
        running={
            k: np.asarray(v["data"], dtype=float).reshape(v["shape"])
            for k, v in payload["running"].items()
        },
        best_val_mae=payload.get("best_val_mae"),
    )
    for name in ("input", "target"):
        raw = payload["scalers"][name]
        if raw is not None:
            scaler = DnnScaler(
                kind=raw["kind"],
                center=np.asarray(raw["center"], dtype=float),
                scale=np.asarray(raw["scale"], dtype=float),
            )
            setattr(model, f"{name}_scaler", scaler)
    return model
