"""Variance-stabilizing preprocessing and invertible feature scaling.

Price series are mapped through ``asinh((x - center) / scale)`` with a
median center and a MAD-based scale, which stays defined for zero and
negative prices.  Neural-network inputs/targets use one of five
selectable per-feature scalers, each with an exact inverse.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, TransformError

# MAD -> standard-deviation consistency factor for the normal distribution.
MAD_CONSISTENCY = 1.4826

SCALER_KINDS = ("none", "standardize", "minmax", "median-mad", "asinh-median-mad")


@dataclass(frozen=True)
class AsinhParams:
    """Robust location/scale pair; ``scale`` is strictly positive."""

    center: float
    scale: float


def fit_robust_scale(series) -> AsinhParams:
    """Median center and 1.4826-rescaled MAD; scale falls back to 1 when the
    series has no dispersion."""
    x = np.asarray(series, dtype=float).ravel()
    if x.size == 0:
        raise TransformError("cannot fit transform on an empty series")
    center = float(np.median(x))
    mad = float(np.median(np.abs(x - center)))
    scale = MAD_CONSISTENCY * mad
    if scale == 0.0:
        scale = 1.0
    return AsinhParams(center=center, scale=scale)


def fit_asinh(series) -> AsinhParams:
    """Parameters for the asinh variance-stabilizing transform."""
    return fit_robust_scale(series)


def apply_asinh(x, params: AsinhParams):
    return np.arcsinh((np.asarray(x, dtype=float) - params.center) / params.scale)


def invert_asinh(y, params: AsinhParams):
    return params.center + params.scale * np.sinh(np.asarray(y, dtype=float))


def apply_scale(x, params: AsinhParams):
    """Plain robust standardization (no asinh), used for exogenous series."""
    return (np.asarray(x, dtype=float) - params.center) / params.scale


def invert_scale(y, params: AsinhParams):
    return params.center + params.scale * np.asarray(y, dtype=float)


@dataclass(frozen=True)
class DnnScaler:
    """Per-feature invertible transform fitted on training rows only.

    ``center`` and ``scale`` have one entry per feature column.  For the
    asinh kind the affine step is followed by ``arcsinh``.
    """

    kind: str
    center: np.ndarray
    scale: np.ndarray

    @property
    def n_features(self) -> int:
        return self.center.shape[0]


def fit_dnn_scaler(kind: str, training: np.ndarray) -> DnnScaler:
    """Fit a scaler of the given kind on a (rows, features) training matrix."""
    if kind not in SCALER_KINDS:
        raise ConfigurationError(f"unknown scaler kind {kind!r}; expected one of {SCALER_KINDS}")
    m = np.asarray(training, dtype=float)
    if m.ndim == 1:
        m = m[:, None]
    if m.size == 0:
        raise TransformError("cannot fit scaler on an empty matrix")
    p = m.shape[1]
    if kind == "none":
        center = np.zeros(p)
        scale = np.ones(p)
    elif kind == "standardize":
        center = m.mean(axis=0)
        scale = m.std(axis=0)
    elif kind == "minmax":
        lo, hi = m.min(axis=0), m.max(axis=0)
        center = (hi + lo) / 2.0
        scale = (hi - lo) / 2.0
    else:  # median-mad, asinh-median-mad
        center = np.median(m, axis=0)
        scale = MAD_CONSISTENCY * np.median(np.abs(m - center), axis=0)
    scale = np.where(scale == 0.0, 1.0, scale)
    return DnnScaler(kind=kind, center=np.asarray(center, float), scale=np.asarray(scale, float))


def apply_dnn_scaler(x, scaler: DnnScaler):
    x = np.asarray(x, dtype=float)
    z = (x - scaler.center) / scaler.scale
    if scaler.kind == "asinh-median-mad":
        z = np.arcsinh(z)
    return z


def invert_dnn_scaler(z, scaler: DnnScaler):
    z = np.asarray(z, dtype=float)
    if scaler.kind == "asinh-median-mad":
        z = np.sinh(z)
    return z * scaler.scale + scaler.center
