"""Batch command-line surface.

Subcommands: ``fetch``, ``backtest``, ``hyperopt``, ``evaluate``,
``test``, ``report``.  Every option can also be supplied through a
``key=value`` config file (``--config``); explicit flags win over file
entries.  Run directories receive the fully resolved configuration, the
SHA-256 of the input dataset, and all seeds, so runs can be reproduced.

Exit codes: 0 success, 1 usage/configuration error, 2 data error,
3 numeric or convergence error.  Diagnostics go to standard error.
"""
from __future__ import annotations

import argparse
import json
import sys
from datetime import date
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import runio
from .data import (
    KNOWN_MARKETS,
    STANDARD_WINDOWS,
    MarketDataset,
    fetch_dataset,
    parse_dataset_csv,
    sha256_of,
    test_split,
)
from .dnn import DnnHyperparams, backtest_dnn
from .ensemble import combine_mean
from .errors import ConfigurationError, EpfError, NumericError
from .hyperopt import config_to_hyperparams, export_best_config, load_best_config, run_study
from .lear import backtest_lear
from .metrics import (
    ForecastMatrix,
    MetricContext,
    from_dataset,
    mape,
    naive_forecast,
    score,
)
from .stattests import pairwise_matrix, render_chessboard, render_metric_bars

MODEL_KINDS = ("lear", "dnn", "lear_ensemble", "dnn_ensemble", "naive")
REPORT_METRICS = ("MAE", "RMSE", "MAPE", "sMAPE", "rMAE", "rRMSE", "MASE")


def _eprint(*args):
    print(*args, file=sys.stderr)


def _load_dataset(resolved) -> MarketDataset:
    if resolved.get("data"):
        return parse_dataset_csv(resolved["data"], market_id=resolved.get("market"))
    if resolved.get("market"):
        path = fetch_dataset(
            resolved["market"],
            cache_dir=resolved.get("cache_dir"),
            manifest_path=resolved.get("manifest"),
        )
        return parse_dataset_csv(path, market_id=resolved["market"])
    raise ConfigurationError("either a dataset file (--data) or --market is required")


def _resolve(args, parser_defaults: dict) -> dict:
    """defaults < config file < explicit command-line flags.

    Every flag's argparse default is None, so any non-None parsed value
    was given explicitly and wins over the config file.
    """
    resolved = dict(parser_defaults)
    if getattr(args, "config", None):
        for key, value in runio.parse_config_file(args.config).items():
            key = key.replace("-", "_")
            if key not in parser_defaults:
                raise ConfigurationError(f"unknown config key {key!r}")
            resolved[key] = value
    for key, value in vars(args).items():
        if key in ("func", "command", "config"):
            continue
        if value is not None:
            resolved[key] = value
    return resolved


def _as_int(resolved, key):
    if resolved.get(key) is not None:
        resolved[key] = int(resolved[key])


def _as_date(resolved, key):
    v = resolved.get(key)
    if v is not None and not isinstance(v, date):
        resolved[key] = date.fromisoformat(v)


def _parse_windows(value) -> list:
    if value is None:
        return [56]
    if isinstance(value, str):
        return [int(tok) for tok in value.replace(",", " ").split()]
    return [int(value)]


# ---------------------------------------------------------------------------
# subcommands


def cmd_fetch(args, defaults):
    resolved = _resolve(args, defaults)
    if resolved.get("market") not in KNOWN_MARKETS:
        raise ConfigurationError(
            f"--market must be one of {KNOWN_MARKETS}, got {resolved.get('market')!r}"
        )
    path = fetch_dataset(
        resolved["market"],
        cache_dir=resolved.get("cache_dir"),
        manifest_path=resolved.get("manifest"),
    )
    print(path)
    return 0


def _write_run_metadata(out_dir: Path, resolved: dict, dataset_path=None):
    """Resolved config + dataset hash; the file is reusable as --config."""
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    if dataset_path:
        lines.append(f"# dataset_sha256={sha256_of(dataset_path)}")
    for key in ("command", "forecasts"):
        if resolved.get(key) is not None:
            lines.append(f"# {key}={resolved[key]}")
    for key, value in sorted(resolved.items()):
        if value is None or key in ("command", "forecasts"):
            continue
        lines.append(f"{key}={value}")
    (out_dir / "config.resolved.txt").write_text("\n".join(lines) + "\n")


def _backtest_with_resume(out_csv: Path, timing_csv: Path, dataset, period, runner):
    """Run a per-day backtest, appending rows so interrupts resume.

    The serial path appends (and times) day by day through ``on_day``;
    process-parallel runners return the whole block instead, which is
    appended afterwards.
    """
    done = runio.completed_dates(out_csv)
    start = dataset.index_of(period.start_date)
    stop = dataset.index_of(period.end_date)
    remaining = [dataset.dates[i] for i in range(start, stop + 1) if dataset.dates[i] not in done]
    timings = list(runio.read_timing_log(timing_csv)) if timing_csv.exists() else []
    appended = set()

    def on_day(day, row, seconds):
        runio.append_forecast_row(out_csv, day, row)
        appended.add(day)
        timings.append((day, seconds))

    if remaining:
        result = runner(remaining, on_day)
        if result is not None:
            for day, row in zip(result.dates, result.values):
                if day not in appended and day not in done:
                    runio.append_forecast_row(out_csv, day, row)
    runio.write_timing_log(sorted(timings), timing_csv)
    fm = runio.read_forecast_csv(out_csv)
    order = np.argsort([d.toordinal() for d in fm.dates])
    fm = ForecastMatrix(
        dates=tuple(fm.dates[i] for i in order), values=fm.values[order]
    )
    runio.write_forecast_csv(fm, out_csv)
    return fm


def cmd_backtest(args, defaults):
    resolved = _resolve(args, defaults)
    for key in ("seed", "jobs", "max_epochs", "patience", "batch_size",
                "dnn_window_days", "val_weeks", "min_history", "trials"):
        _as_int(resolved, key)
    _as_date(resolved, "test_start")
    _as_date(resolved, "test_end")
    model = resolved.get("model")
    if model not in MODEL_KINDS:
        raise ConfigurationError(f"--model must be one of {MODEL_KINDS}, got {model!r}")
    dataset = _load_dataset(resolved)
    market = dataset.market_id
    out_dir = Path(resolved.get("out_dir") or ".")
    _write_run_metadata(out_dir, resolved, dataset_path=resolved.get("data"))

    if resolved.get("test_start") is None:
        raise ConfigurationError("--test-start is required")
    _, period = test_split(
        dataset, resolved["test_start"], min_history=resolved.get("min_history") or 1456
    )
    if resolved.get("test_end"):
        try:
            dataset.index_of(resolved["test_end"])
        except KeyError as exc:
            raise data_mod.SplitError(str(exc)) from None
        period = data_mod.TestPeriod(
            start_date=period.start_date,
            end_date=resolved["test_end"],
            n_days=(resolved["test_end"] - period.start_date).days + 1,
        )
    jobs = resolved.get("jobs") or 1
    seed = resolved.get("seed") or 0
    windows = _parse_windows(resolved.get("window"))
    if model in ("lear", "lear_ensemble") and not resolved.get("allow_any_window"):
        bad = [w for w in windows if w not in STANDARD_WINDOWS]
        if bad and resolved.get("window") is not None:
            raise ConfigurationError(
                f"calibration window(s) {bad} outside the standard set "
                f"{STANDARD_WINDOWS}; pass --allow-any-window to override"
            )

    def lear_runner(window):
        def run(days, on_day):
            return backtest_lear(
                dataset, period, window, days=days, jobs=jobs, on_day=on_day
            )
        return run

    written = []
    if model == "naive":
        kind = resolved.get("naive_kind") or "lag7"
        history = from_dataset(dataset)
        fm = naive_forecast(history, kind, start=period.start_date)
        fm = fm.window(period.start_date, period.end_date)
        out_csv = out_dir / f"{market}_naive_{kind}.csv"
        runio.write_forecast_csv(fm, out_csv)
        written.append(out_csv)
    elif model == "lear":
        for window in windows:
            out_csv = out_dir / f"{market}_lear_{window}.csv"
            _backtest_with_resume(
                out_csv, out_dir / f"{market}_lear_{window}_timing.csv",
                dataset, period, lear_runner(window),
            )
            written.append(out_csv)
    elif model == "lear_ensemble":
        members = {}
        for window in (STANDARD_WINDOWS if resolved.get("window") is None else windows):
            out_csv = out_dir / f"{market}_lear_{window}.csv"
            members[window] = _backtest_with_resume(
                out_csv, out_dir / f"{market}_lear_{window}_timing.csv",
                dataset, period, lear_runner(window),
            )
            written.append(out_csv)
        ens = combine_mean(members.values())
        out_csv = out_dir / f"{market}_lear_ensemble.csv"
        runio.write_forecast_csv(ens, out_csv)
        written.append(out_csv)
    elif model in ("dnn", "dnn_ensemble"):
        config_paths = resolved.get("dnn_config")
        if isinstance(config_paths, str):
            config_paths = config_paths.split(",")
        if model == "dnn":
            config_paths = config_paths[:1] if config_paths else [None]
        elif not config_paths:
            raise ConfigurationError("dnn_ensemble needs --dnn-config files (one per member)")
        members = []
        train_kwargs = dict(
            max_epochs=resolved.get("max_epochs") or 1000,
            patience=resolved.get("patience") or 20,
            batch_size=resolved.get("batch_size") or 192,
            window_days=resolved.get("dnn_window_days") or 1456,
            val_weeks=resolved.get("val_weeks") or 42,
        )
        for k, cfg_path in enumerate(config_paths):
            hp = (
                config_to_hyperparams(load_best_config(cfg_path))
                if cfg_path
                else DnnHyperparams()
            )
            member_seed = seed + k
            tag = f"dnn_{member_seed}"
            out_csv = out_dir / f"{market}_{tag}.csv"

            def run(days, on_day, hp=hp, member_seed=member_seed):
                return backtest_dnn(
                    dataset, period, hp, member_seed, days=days, jobs=jobs,
                    on_day=on_day, **train_kwargs,
                )

            members.append(
                _backtest_with_resume(
                    out_csv, out_dir / f"{market}_{tag}_timing.csv", dataset, period, run
                )
            )
            written.append(out_csv)
        if model == "dnn_ensemble":
            ens = combine_mean(members)
            out_csv = out_dir / f"{market}_dnn_ensemble.csv"
            runio.write_forecast_csv(ens, out_csv)
            written.append(out_csv)
    for path in written:
        print(path)
    return 0


def cmd_hyperopt(args, defaults):
    resolved = _resolve(args, defaults)
    for key in ("trials", "seed", "max_epochs", "patience", "batch_size",
                "dnn_window_days", "val_weeks"):
        _as_int(resolved, key)
    _as_date(resolved, "test_start")
    dataset = _load_dataset(resolved)
    out_dir = Path(resolved.get("out_dir") or ".")
    _write_run_metadata(out_dir, resolved, dataset_path=resolved.get("data"))
    split_at = (
        dataset.index_of(resolved["test_start"])
        if resolved.get("test_start")
        else dataset.n_days
    )
    study = run_study(
        dataset,
        budget=resolved.get("trials") or 10,
        seed=resolved.get("seed") or 0,
        log_path=out_dir / "trials.jsonl",
        split_at=split_at,
        window_days=resolved.get("dnn_window_days") or 1456,
        val_weeks=resolved.get("val_weeks") or 42,
        max_epochs=resolved.get("max_epochs") or 200,
        patience=resolved.get("patience") or 10,
        batch_size=resolved.get("batch_size") or 192,
        on_trial=lambda t: _eprint(
            f"trial {t.index}: {t.status} objective={t.objective:.4f}"
        ),
    )
    best_path = export_best_config(study, out_dir / "best_config.json")
    print(best_path)
    return 0


def _context_for(dataset: MarketDataset, forecast: ForecastMatrix, naive_kind: str):
    history = from_dataset(dataset)
    first_idx = dataset.index_of(forecast.dates[0])
    insample = dataset.prices[:first_idx].ravel() if first_idx > 0 else None
    return MetricContext(naive_kind=naive_kind, history=history, insample=insample)


def cmd_evaluate(args, defaults):
    resolved = _resolve(args, defaults)
    dataset = _load_dataset(resolved | {"data": resolved.get("actuals")})
    naive_kind = resolved.get("naive_kind") or "lag7"
    rows = []
    payload = {}
    for fpath in args.forecasts:
        fm = runio.read_forecast_csv(fpath)
        actual = from_dataset(dataset, fm.dates[0], fm.dates[-1])
        context = _context_for(dataset, fm, naive_kind)
        name = Path(fpath).stem
        payload[name] = {}
        for kind in REPORT_METRICS:
            if kind == "MASE" and (context.insample is None or context.insample.size == 0):
                continue
            value = score(kind, actual, fm, context)
            rows.append((name, kind, value))
            payload[name][kind] = value
        _, excluded = mape(actual, fm)
        if excluded:
            rows.append((name, "MAPE_excluded_cells", float(excluded)))
            payload[name]["MAPE_excluded_cells"] = excluded
    out = Path(resolved.get("out") or "report.csv")
    runio.write_metric_report(rows, out)
    out.with_suffix(".json").write_text(json.dumps(payload, indent=2))
    for model, metric, value in rows:
        print(f"{model},{metric},{value:.6g}")
    return 0


def cmd_test(args, defaults):
    resolved = _resolve(args, defaults)
    test_kind = (resolved.get("test") or "GW").upper()
    if test_kind not in ("DM", "GW"):
        raise ConfigurationError(f"--test must be DM or GW, got {test_kind!r}")
    dataset = _load_dataset(resolved | {"data": resolved.get("actuals")})
    forecasts = {}
    for fpath in args.forecasts:
        fm = runio.read_forecast_csv(fpath)
        forecasts[Path(fpath).stem] = fm
    start = max(fm.dates[0] for fm in forecasts.values())
    end = min(fm.dates[-1] for fm in forecasts.values())
    if start > end:
        raise ConfigurationError("forecast files have no common date range")
    forecasts = {name: fm.window(start, end) for name, fm in forecasts.items()}
    actual = from_dataset(dataset, start, end)
    matrix = pairwise_matrix(
        forecasts,
        actual,
        test=test_kind,
        norm=int(resolved.get("norm") or 1),
        q=int(resolved.get("lags") or 1),
    )
    blanks = int(np.sum(np.isnan(matrix.values))) - len(matrix.names)
    if blanks > 0:
        _eprint(f"warning: {blanks} degenerate pair(s) left blank (identical forecasts)")
    out = Path(resolved.get("out") or f"{test_kind.lower()}_chessboard.svg")
    render_chessboard(matrix, out)
    print(out)
    print(out.with_suffix(".csv"))
    return 0


def cmd_report(args, defaults):
    resolved = _resolve(args, defaults)
    run_dir = Path(resolved.get("run_dir") or ".")
    if not run_dir.is_dir():
        raise ConfigurationError(f"{run_dir} is not a directory")
    dataset = _load_dataset(resolved | {"data": resolved.get("actuals")})
    naive_kind = resolved.get("naive_kind") or "lag7"
    rows = []
    for fpath in sorted(run_dir.glob("*.csv")):
        if fpath.name.endswith("_timing.csv") or fpath.name in ("report.csv", "summary.csv"):
            continue
        try:
            fm = runio.read_forecast_csv(fpath)
        except EpfError:
            continue
        actual = from_dataset(dataset, fm.dates[0], fm.dates[-1])
        context = _context_for(dataset, fm, naive_kind)
        entry = {"model": fpath.stem}
        for kind in ("MAE", "rMAE", "sMAPE", "RMSE"):
            entry[kind] = score(kind, actual, fm, context)
        timing = fpath.with_name(fpath.stem + "_timing.csv")
        if timing.exists():
            times = [s for _, s in runio.read_timing_log(timing)]
            if times:
                entry["mean_seconds_per_day"] = float(np.mean(times))
        rows.append(entry)
    if not rows:
        raise ConfigurationError(f"no forecast files found in {run_dir}")
    keys = ["model", "MAE", "rMAE", "sMAPE", "RMSE", "mean_seconds_per_day"]
    out = run_dir / "summary.csv"
    with open(out, "w") as fh:
        fh.write(",".join(keys) + "\n")
        for entry in rows:
            fh.write(
                ",".join(
                    ""
                    if key not in entry
                    else (entry[key] if key == "model" else f"{entry[key]:.6g}")
                    for key in keys
                )
                + "\n"
            )
    render_metric_bars(
        "rMAE (lower is better)",
        [e["model"] for e in rows],
        [e["rMAE"] for e in rows],
        run_dir / "summary_rmae.svg",
    )
    header = f"{'model':28s} {'MAE':>8s} {'rMAE':>8s} {'sMAPE':>8s} {'RMSE':>8s} {'s/day':>8s}"
    print(header)
    for entry in rows:
        print(
            f"{entry['model']:28s} {entry['MAE']:8.3f} {entry['rMAE']:8.3f} "
            f"{entry['sMAPE']:8.4f} {entry['RMSE']:8.3f} "
            + (f"{entry['mean_seconds_per_day']:8.3f}" if "mean_seconds_per_day" in entry else "       -")
        )
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epfbench",
        description="Day-ahead electricity price forecasting benchmark toolbox",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="key=value config file; flags override it")
        p.add_argument("--data", help="dataset CSV (timestamp,price,exog1,exog2)")
        p.add_argument("--market", help=f"market id, one of {KNOWN_MARKETS}")
        p.add_argument("--cache-dir", dest="cache_dir", help="dataset cache directory")
        p.add_argument("--manifest", help="dataset manifest file")

    p = sub.add_parser("fetch", help="download (or find cached) dataset file")
    add_common(p)
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("backtest", help="daily-recalibration backtest")
    add_common(p)
    p.add_argument("--model", choices=MODEL_KINDS)
    p.add_argument("--window", help="calibration window days (comma list for lear)")
    p.add_argument(
        "--allow-any-window", dest="allow_any_window", action="store_const",
        const="1", help="permit windows outside the standard 56/84/1092/1456 set",
    )
    p.add_argument("--test-start", dest="test_start", help="first out-of-sample day (ISO)")
    p.add_argument("--test-end", dest="test_end", help="last out-of-sample day (ISO)")
    p.add_argument("--seed", help="base random seed")
    p.add_argument("--jobs", help="worker processes across test days")
    p.add_argument("--out-dir", dest="out_dir", help="run directory")
    p.add_argument("--naive-kind", dest="naive_kind", choices=("lag1", "lag7", "calendar"))
    p.add_argument("--dnn-config", dest="dnn_config", nargs="*", help="best-config JSON file(s)")
    p.add_argument("--max-epochs", dest="max_epochs")
    p.add_argument("--patience")
    p.add_argument("--batch-size", dest="batch_size")
    p.add_argument("--dnn-window-days", dest="dnn_window_days")
    p.add_argument("--val-weeks", dest="val_weeks")
    p.add_argument("--min-history", dest="min_history", help="history required before the test period")
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("hyperopt", help="feature/hyperparameter search")
    add_common(p)
    p.add_argument("--trials", help="number of trials (budget T)")
    p.add_argument("--seed")
    p.add_argument("--test-start", dest="test_start", help="search uses data before this day")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--max-epochs", dest="max_epochs")
    p.add_argument("--patience")
    p.add_argument("--batch-size", dest="batch_size")
    p.add_argument("--dnn-window-days", dest="dnn_window_days")
    p.add_argument("--val-weeks", dest="val_weeks")
    p.set_defaults(func=cmd_hyperopt)

    p = sub.add_parser("evaluate", help="accuracy metrics for forecast files")
    add_common(p)
    p.add_argument("--actuals", help="dataset CSV with the actual prices")
    p.add_argument("--out", help="metric report CSV path")
    p.add_argument("--naive-kind", dest="naive_kind", choices=("lag1", "lag7", "calendar"))
    p.add_argument("forecasts", nargs="+", help="forecast CSV files")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("test", help="DM/GW significance chessboard")
    add_common(p)
    p.add_argument("--actuals", help="dataset CSV with the actual prices")
    p.add_argument("--test", choices=("DM", "GW", "dm", "gw"))
    p.add_argument("--norm", help="loss differential norm (1 or 2)")
    p.add_argument("--lags", help="conditional-test lag order q")
    p.add_argument("--out", help="output SVG path (CSV lands alongside)")
    p.add_argument("forecasts", nargs="+", help="forecast CSV files")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("report", help="summarize a run directory")
    add_common(p)
    p.add_argument("--actuals", help="dataset CSV with the actual prices")
    p.add_argument("--run-dir", dest="run_dir")
    p.add_argument("--naive-kind", dest="naive_kind", choices=("lag1", "lag7", "calendar"))
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    defaults = {
        k: None for k in vars(args) if k not in ("func", "command", "config")
    }
    try:
        return args.func(args, defaults)
    except ConfigurationError as exc:
        _eprint(f"error: {exc}")
        return 1
    except NumericError as exc:
        _eprint(f"numeric error: {exc}")
        return 3
    except EpfError as exc:
        _eprint(f"data error: {exc}")
        return 2
    except FileNotFoundError as exc:
        _eprint(f"data error: {exc}")
        return 2


def entrypoint():
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
