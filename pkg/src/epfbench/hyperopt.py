"""Joint feature and hyperparameter search with a tree-structured Parzen
estimator.

The search space mixes 11 binary feature flags with 8 model dimensions
(integer, categorical, and continuous, some on a log scale).  After a
random startup phase the completed trials are split at the gamma-quantile
of the objective into a good and a bad set; per-dimension adaptive Parzen
densities l(x) and g(x) are fitted to the two sets, a batch of candidates
is drawn from l, and the candidate maximizing l(x)/g(x) is evaluated
next.  The objective is the validation MAE (price units) of one network
trained on the fixed chronological split whose validation block is the
last 42 weeks before the test period.

Every trial is appended to a JSON-lines log, so interrupted studies
resume exactly where they stopped.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr, ndtri

from .data import MarketDataset
from .dnn import (
    ACTIVATION_KINDS,
    DEFAULT_BATCH_SIZE,
    INIT_KINDS,
    VALIDATION_WEEKS,
    WINDOW_WEEKS,
    DnnHyperparams,
    build_network,
    fit_scalers,
    make_chronological_split,
    train,
)
from .errors import ConfigurationError, DivergenceError, EpfError
from .features import FeatureMask
from .transform import SCALER_KINDS

TPE_GAMMA = 0.25
TPE_N_STARTUP = 20
TPE_N_CANDIDATES = 24


@dataclass(frozen=True)
class FloatDim:
    name: str
    low: float
    high: float
    log: bool = False

    def to_internal(self, x):
        return math.log(x) if self.log else float(x)

    def from_internal(self, u):
        x = math.exp(u) if self.log else float(u)
        return min(max(x, self.low), self.high)

    def bounds_internal(self):
        if self.log:
            return math.log(self.low), math.log(self.high)
        return self.low, self.high

    def sample_prior(self, rng):
        lo, hi = self.bounds_internal()
        return self.from_internal(rng.uniform(lo, hi))


@dataclass(frozen=True)
class IntDim:
    name: str
    low: int
    high: int
    log: bool = False

    def to_internal(self, x):
        return math.log(x) if self.log else float(x)

    def from_internal(self, u):
        x = math.exp(u) if self.log else u
        return int(min(max(round(x), self.low), self.high))

    def bounds_internal(self):
        if self.log:
            return math.log(self.low), math.log(self.high)
        return float(self.low), float(self.high)

    def sample_prior(self, rng):
        lo, hi = self.bounds_internal()
        return self.from_internal(rng.uniform(lo, hi))


@dataclass(frozen=True)
class CatDim:
    name: str
    choices: tuple

    def sample_prior(self, rng):
        return self.choices[int(rng.integers(len(self.choices)))]


@dataclass(frozen=True)
class SearchSpace:
    dims: tuple

    def sample_prior(self, rng) -> dict:
        return {d.name: d.sample_prior(rng) for d in self.dims}

    def validate(self, config: dict):
        for d in self.dims:
            v = config[d.name]
            if isinstance(d, CatDim):
                if v not in d.choices:
                    raise ConfigurationError(f"{d.name}={v!r} not in {d.choices}")
            elif not d.low <= v <= d.high:
                raise ConfigurationError(f"{d.name}={v!r} outside [{d.low}, {d.high}]")


def dnn_search_space() -> SearchSpace:
    """11 feature flags plus the 8 network dimensions."""
    dims = [CatDim(name, (False, True)) for name in FeatureMask.flag_names()]
    dims += [
        IntDim("n1", 8, 256, log=True),
        IntDim("n2", 8, 256, log=True),
        CatDim("activation", ACTIVATION_KINDS),
        FloatDim("dropout_rate", 0.0, 0.5),
        FloatDim("learning_rate", 1e-5, 1e-1, log=True),
        CatDim("use_batch_norm", (False, True)),
        CatDim("scaler_kind", SCALER_KINDS),
        CatDim("weight_init", INIT_KINDS),
        FloatDim("l1_coefficient", 1e-8, 1e-1, log=True),
    ]
    return SearchSpace(dims=tuple(dims))


def config_to_hyperparams(config: dict) -> DnnHyperparams:
    mask = FeatureMask(**{k: bool(config[k]) for k in FeatureMask.flag_names()})
    return DnnHyperparams(
        n1=int(config["n1"]),
        n2=int(config["n2"]),
        activation=config["activation"],
        dropout_rate=float(config["dropout_rate"]),
        learning_rate=float(config["learning_rate"]),
        use_batch_norm=bool(config["use_batch_norm"]),
        scaler_kind=config["scaler_kind"],
        weight_init=config["weight_init"],
        l1_coefficient=float(config["l1_coefficient"]),
        mask=mask,
    )


# ---------------------------------------------------------------------------
# adaptive Parzen machinery


def _parzen(values, low, high):
    """Component means and adaptive bandwidths, including a wide prior
    component at the midrange."""
    prior_mu = 0.5 * (low + high)
    span = max(high - low, 1e-12)
    mus = np.asarray(sorted([*values, prior_mu]), dtype=float)
    k = mus.shape[0]
    left = np.diff(mus, prepend=low)  # distance to the left neighbor/bound
    right = np.diff(mus, append=high)
    sigmas = np.maximum(left, right)
    sigma_max = span
    sigma_min = span / min(100.0, 1.0 + k)
    sigmas = np.clip(sigmas, sigma_min, sigma_max)
    return mus, sigmas


_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _parzen_sample(mus, sigmas, low, high, rng):
    """Inverse-CDF draw from one mixture component truncated to [low, high]."""
    i = int(rng.integers(mus.shape[0]))
    a = ndtr((low - mus[i]) / sigmas[i])
    b = ndtr((high - mus[i]) / sigmas[i])
    u = rng.uniform(a, b)
    return float(mus[i] + sigmas[i] * ndtri(min(max(u, 1e-15), 1.0 - 1e-15)))


def _parzen_logpdf(x, mus, sigmas, low, high):
    z = (x - mus) / sigmas
    mass = ndtr((high - mus) / sigmas) - ndtr((low - mus) / sigmas)
    logs = -0.5 * z * z - np.log(sigmas) - _LOG_SQRT_2PI - np.log(np.maximum(mass, 1e-300))
    return _logsumexp(logs) - math.log(mus.shape[0])


def _logsumexp(v):
    m = np.max(v)
    if not np.isfinite(m):
        return float(m)
    return float(m + math.log(np.sum(np.exp(v - m))))


def _smoothed_probs(values, choices):
    counts = np.array([sum(1 for v in values if v == c) for c in choices], dtype=float)
    counts += 1.0  # add-one smoothing
    return counts / counts.sum()


def tpe_suggest(
    history,
    space: SearchSpace,
    rng,
    gamma: float = TPE_GAMMA,
    n_startup: int = TPE_N_STARTUP,
    n_candidates: int = TPE_N_CANDIDATES,
) -> dict:
    """Next configuration to evaluate given (config, objective) history."""
    completed = [(cfg, obj) for cfg, obj in history if obj is not None]
    if len(completed) < n_startup:
        return space.sample_prior(rng)
    completed.sort(key=lambda t: t[1])
    n_good = max(1, int(math.ceil(gamma * len(completed))))
    good = [cfg for cfg, _ in completed[:n_good]]
    bad = [cfg for cfg, _ in completed[n_good:]] or good

    best_score = -np.inf
    best_cfg = None
    per_dim = {}
    for d in space.dims:
        if isinstance(d, CatDim):
            per_dim[d.name] = (
                _smoothed_probs([c[d.name] for c in good], d.choices),
                _smoothed_probs([c[d.name] for c in bad], d.choices),
            )
        else:
            lo, hi = d.bounds_internal()
            lmus, lsig = _parzen([d.to_internal(c[d.name]) for c in good], lo, hi)
            gmus, gsig = _parzen([d.to_internal(c[d.name]) for c in bad], lo, hi)
            per_dim[d.name] = (lmus, lsig, gmus, gsig, lo, hi)
    for _ in range(n_candidates):
        cfg = {}
        score = 0.0
        for d in space.dims:
            if isinstance(d, CatDim):
                pl, pg = per_dim[d.name]
                idx = int(rng.choice(len(d.choices), p=pl))
                cfg[d.name] = d.choices[idx]
                score += math.log(pl[idx]) - math.log(pg[idx])
            else:
                lmus, lsig, gmus, gsig, lo, hi = per_dim[d.name]
                u = _parzen_sample(lmus, lsig, lo, hi, rng)
                value = d.from_internal(u)
                cfg[d.name] = value
                ui = d.to_internal(value)
                score += _parzen_logpdf(ui, lmus, lsig, lo, hi)
                score -= _parzen_logpdf(ui, gmus, gsig, lo, hi)
        if score > best_score:
            best_score = score
            best_cfg = cfg
    return best_cfg


# ---------------------------------------------------------------------------
# trials and studies


@dataclass(frozen=True)
class Trial:
    index: int
    config: dict
    objective: float
    status: str  # "ok" or "failed"
    seed: int


@dataclass
class Study:
    budget: int
    trials: list = field(default_factory=list)

    @property
    def best(self) -> Trial | None:
        done = [t for t in self.trials if t.status == "ok"]
        return min(done, key=lambda t: t.objective) if done else None


def evaluate_trial(
    config: dict,
    dataset: MarketDataset,
    split_at: int,
    seed: int,
    window_days: int = WINDOW_WEEKS * 7,
    val_weeks: int = VALIDATION_WEEKS,
    max_epochs: int = 200,
    patience: int = 10,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> float:
    """Validation MAE (price units) of one configuration.

    ``split_at`` is the day index where the out-of-sample period begins;
    training uses the window before it with the last ``val_weeks`` weeks
    held out (chronological-tail mode).
    """
    hp = config_to_hyperparams(config)
    split = make_chronological_split(
        dataset, split_at, hp.mask, window_days=window_days, val_weeks=val_weeks
    )
    model = build_network(hp, hp.mask.n_features, seed=seed)
    fit_scalers(model, split)
    train(model, split, max_epochs=max_epochs, patience=patience, batch_size=batch_size)
    return float(model.best_val_mae)


def _trial_to_json(trial: Trial) -> str:
    return json.dumps(
        {
            "index": trial.index,
            "config": trial.config,
            "objective": None if not np.isfinite(trial.objective) else trial.objective,
            "status": trial.status,
            "seed": trial.seed,
        }
    )


def read_trial_log(path) -> list:
    trials = []
    path = Path(path)
    if not path.exists():
        return trials
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        raw = json.loads(line)
        trials.append(
            Trial(
                index=raw["index"],
                config=raw["config"],
                objective=float("inf") if raw["objective"] is None else raw["objective"],
                status=raw["status"],
                seed=raw["seed"],
            )
        )
    return trials


def run_study(
    dataset: MarketDataset,
    budget: int,
    seed: int,
    log_path,
    split_at: int | None = None,
    space: SearchSpace | None = None,
    window_days: int = WINDOW_WEEKS * 7,
    val_weeks: int = VALIDATION_WEEKS,
    max_epochs: int = 200,
    patience: int = 10,
    batch_size: int = DEFAULT_BATCH_SIZE,
    on_trial=None,
) -> Study:
    """Run (or resume) a sequential study of ``budget`` trials.

    Completed trials are replayed from the JSON-lines log, so a study
    interrupted at trial k finishes with exactly ``budget`` evaluations
    in total.  Per-trial randomness derives from (seed, trial index),
    which keeps resumed studies identical to uninterrupted ones.
    """
    if budget < 1:
        raise ConfigurationError("study budget must be at least 1")
    space = space or dnn_search_space()
    if split_at is None:
        split_at = dataset.n_days
    log_path = Path(log_path)
    log_path.parent.mkdir(parents=True, exist_ok=True)
    study = Study(budget=budget, trials=read_trial_log(log_path))
    with open(log_path, "a") as log:
        for index in range(len(study.trials), budget):
            rng = np.random.default_rng([seed, index])
            history = [(t.config, None if t.status != "ok" else t.objective) for t in study.trials]
            config = tpe_suggest(history, space, rng)
            space.validate(config)
            trial_seed = int(np.random.default_rng([seed, index, 1]).integers(2**31))
            try:
                objective = evaluate_trial(
                    config, dataset, split_at, trial_seed,
                    window_days=window_days, val_weeks=val_weeks,
                    max_epochs=max_epochs, patience=patience, batch_size=batch_size,
                )
                trial = Trial(index=index, config=config, objective=objective, status="ok", seed=trial_seed)
            except (DivergenceError, EpfError):
                trial = Trial(index=index, config=config, objective=float("inf"), status="failed", seed=trial_seed)
            study.trials.append(trial)
            log.write(_trial_to_json(trial) + "\n")
            log.flush()
            if on_trial is not None:
                on_trial(trial)
    return study


def export_best_config(study: Study, path) -> Path:
    """Write the best trial's configuration for the backtest/ensemble stage."""
    best = study.best
    if best is None:
        raise ConfigurationError("study has no completed trials")
    payload = {"config": best.config, "objective": best.objective, "seed": best.seed}
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2))
    return path


def load_best_config(path) -> dict:
    return json.loads(Path(path).read_text())["config"]
