"""The feedforward network: construction, training with early stopping,
daily recalibration, and checkpointing.
"""
import tempfile
from pathlib import Path

import numpy as np

from epfbench.dnn import (
    DnnHyperparams,
    build_network,
    fit_scalers,
    forward,
    load_checkpoint,
    make_random_week_split,
    recalibrate_forecast_day,
    save_checkpoint,
    train,
)
from epfbench.features import FeatureMask
from epfbench.synthetic import make_synthetic_dataset

ds = make_synthetic_dataset(n_days=500, seed=2)

hp = DnnHyperparams(
    n1=48, n2=24, activation="relu", learning_rate=3e-3,
    scaler_kind="standardize", mask=FeatureMask.full(),
)
print(f"network: 241 -> {hp.n1} -> {hp.n2} -> 24, activation {hp.activation}")

rng = np.random.default_rng(0)
split = make_random_week_split(ds, 490, hp.mask, rng, window_days=280, val_weeks=8)
print(f"training rows {split.X_train.shape[0]}, validation rows {split.X_val.shape[0]} "
      f"({len(split.val_week_ids)} held-out weeks)")

model = build_network(hp, hp.mask.n_features, seed=7)
fit_scalers(model, split)
train(model, split, max_epochs=80, patience=10)
print(f"stopped after {len(model.history)} epochs; "
      f"best validation MAE {model.best_val_mae:.3f} (price units)")
epoch, _, _ = min(model.history, key=lambda h: h[2])
print(f"best epoch: {epoch} (weights restored from that checkpoint)")

# daily recalibration retrains from scratch with a day-specific seed
fc = recalibrate_forecast_day(ds, 495, hp, seed=11, max_epochs=40, patience=6,
                              window_days=280, val_weeks=8)
print(f"day-495 forecast MAE vs actual: {np.mean(np.abs(fc - ds.prices[495])):.3f}")

with tempfile.TemporaryDirectory() as tmp:
    path = save_checkpoint(model, Path(tmp) / "model.json")
    clone = load_checkpoint(path)
    x = split.X_val[0]
    assert np.array_equal(forward(clone, x), forward(model, x))
    print(f"checkpoint round trip OK ({path.stat().st_size} bytes)")
