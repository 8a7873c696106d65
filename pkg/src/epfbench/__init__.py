"""Day-ahead electricity price forecasting benchmark toolbox.

A library (plus ``epfbench`` CLI) for the two reference model families --
a LASSO-estimated autoregressive linear model and a feedforward network
with automated feature/hyperparameter search -- their arithmetic-average
ensembles, daily-recalibration backtesting, the standard accuracy-metric
suite, and unconditional/conditional significance tests with chessboard
heatmaps.
"""

from .data import (
    CalibrationSlice,
    MarketDataset,
    TestPeriod,
    calibration_window_slice,
    fetch_dataset,
    normalize_calendar,
    parse_dataset_csv,
    test_split,
)
from .dnn import DnnHyperparams, DnnModel, backtest_dnn, build_network, forward, train
from .ensemble import combine_mean, run_dnn_ensemble, run_lear_ensemble
from .features import FeatureMask, build_dnn_row, build_lear_design, build_lear_row, weekday_encoding
from .hyperopt import SearchSpace, Study, Trial, dnn_search_space, run_study, tpe_suggest
from .lear import (
    HourModel,
    LarsPath,
    LearModel,
    backtest_lear,
    fit_day,
    forecast_day,
    lars_path,
    lasso_cd,
    select_lambda_aic,
)
from .metrics import ForecastMatrix, MetricContext, naive_forecast, score
from .stattests import (
    LossDifferential,
    PValueMatrix,
    TestResult,
    dm_test,
    dm_univariate_suite,
    gw_test,
    loss_differential,
    pairwise_matrix,
    render_chessboard,
)
from .synthetic import make_synthetic_dataset
from .transform import AsinhParams, DnnScaler, apply_asinh, fit_asinh, fit_dnn_scaler, invert_asinh

__version__ = "0.1.0"
