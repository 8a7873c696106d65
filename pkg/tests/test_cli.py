import json
from datetime import date

import numpy as np
import pytest

from epfbench import runio
from epfbench.cli import main
from epfbench.data import write_dataset_csv
from epfbench.runio import parse_config_file, read_forecast_csv, read_metric_report
from epfbench.stattests import read_pvalue_csv
from epfbench.synthetic import make_synthetic_dataset


@pytest.fixture(scope="module")
def data_csv(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    ds = make_synthetic_dataset(n_days=260, seed=40, market_id="SYN")
    path = write_dataset_csv(ds, root / "syn.csv")
    return path, ds


def run_cli(*argv):
    return main([str(a) for a in argv])


class TestBacktestCommand:
    def test_lear_backtest_file_naming_and_format(self, data_csv, tmp_path):
        path, ds = data_csv
        code = run_cli(
            "backtest", "--data", path, "--model", "lear", "--window", "28", "--allow-any-window",
            "--test-start", "2013-08-01", "--test-end", "2013-08-12",
            "--min-history", "100", "--out-dir", tmp_path,
        )
        assert code == 0
        out = tmp_path / "syn_lear_28.csv"
        assert out.exists()
        fm = read_forecast_csv(out)
        assert fm.values.shape == (12, 24)
        header = out.read_text().splitlines()[0].split(",")
        assert header == ["date", *[f"h{i}" for i in range(1, 25)]]
        assert (tmp_path / "syn_lear_28_timing.csv").exists()
        resolved = parse_config_file(tmp_path / "config.resolved.txt")
        assert resolved["model"] == "lear"
        raw = (tmp_path / "config.resolved.txt").read_text()
        assert "# dataset_sha256=" in raw

    def test_resume_appends_only_missing_days(self, data_csv, tmp_path):
        path, ds = data_csv
        args = (
            "backtest", "--data", path, "--model", "lear", "--window", "28", "--allow-any-window",
            "--test-start", "2013-08-01", "--test-end", "2013-08-08",
            "--min-history", "100", "--out-dir", tmp_path,
        )
        assert run_cli(*args) == 0
        out = tmp_path / "syn_lear_28.csv"
        first = out.read_text()
        lines = first.splitlines()
        out.write_text("\n".join(lines[:4]) + "\n")
        assert run_cli(*args) == 0
        resumed = read_forecast_csv(out)
        assert len(resumed.dates) == 8
        orig = read_forecast_csv.__wrapped__(out) if hasattr(read_forecast_csv, "__wrapped__") else resumed
        assert [d.isoformat() for d in resumed.dates] == sorted(d.isoformat() for d in resumed.dates)

    def test_parallel_jobs_writes_complete_file(self, data_csv, tmp_path):
        path, _ = data_csv
        code = run_cli(
            "backtest", "--data", path, "--model", "lear", "--window", "28",
            "--allow-any-window", "--jobs", "2",
            "--test-start", "2013-08-01", "--test-end", "2013-08-08",
            "--min-history", "100", "--out-dir", tmp_path,
        )
        assert code == 0
        fm = read_forecast_csv(tmp_path / "syn_lear_28.csv")
        assert len(fm.dates) == 8

    def test_rerun_from_run_directory_reproduces_bytes(self, data_csv, tmp_path):
        path, _ = data_csv
        args = (
            "backtest", "--data", path, "--model", "lear", "--window", "28",
            "--allow-any-window", "--test-start", "2013-08-01",
            "--test-end", "2013-08-08", "--min-history", "100",
        )
        assert run_cli(*args, "--out-dir", tmp_path / "a") == 0
        resolved = tmp_path / "a" / "config.resolved.txt"
        assert run_cli("backtest", "--config", resolved, "--out-dir", tmp_path / "b") == 0
        first = (tmp_path / "a" / "syn_lear_28.csv").read_bytes()
        second = (tmp_path / "b" / "syn_lear_28.csv").read_bytes()
        assert first == second

    def test_naive_backtest(self, data_csv, tmp_path):
        path, ds = data_csv
        code = run_cli(
            "backtest", "--data", path, "--model", "naive",
            "--test-start", "2013-08-01", "--min-history", "100",
            "--out-dir", tmp_path,
        )
        assert code == 0
        fm = read_forecast_csv(tmp_path / "syn_naive_lag7.csv")
        i0 = ds.index_of(date(2013, 8, 1))
        assert np.allclose(fm.values[0], ds.prices[i0 - 7])

    def test_dnn_backtest_small(self, data_csv, tmp_path):
        path, _ = data_csv
        code = run_cli(
            "backtest", "--data", path, "--model", "dnn",
            "--test-start", "2013-09-01", "--test-end", "2013-09-03",
            "--min-history", "200", "--out-dir", tmp_path, "--seed", "3",
            "--max-epochs", "6", "--patience", "2",
            "--dnn-window-days", "210", "--val-weeks", "6",
        )
        assert code == 0
        fm = read_forecast_csv(tmp_path / "syn_dnn_3.csv")
        assert fm.values.shape == (3, 24)

    def test_config_file_with_flag_override(self, data_csv, tmp_path):
        path, _ = data_csv
        cfg = tmp_path / "exp.conf"
        cfg.write_text(
            f"data={path}\nmodel=lear\nwindow=28\nallow_any_window=1\ntest_start=2013-08-01\n"
            "test_end=2013-08-20\nmin_history=100\n"
            f"out_dir={tmp_path / 'should_not_exist'}\n"
        )
        code = run_cli(
            "backtest", "--config", cfg, "--out-dir", tmp_path / "cfg_run",
            "--test-end", "2013-08-05",
        )
        assert code == 0
        fm = read_forecast_csv(tmp_path / "cfg_run" / "syn_lear_28.csv")
        assert len(fm.dates) == 5  # flag won over the config file
        assert not (tmp_path / "should_not_exist").exists()

    def test_unknown_config_key_exits_1(self, data_csv, tmp_path):
        path, _ = data_csv
        cfg = tmp_path / "bad.conf"
        cfg.write_text("frobnicate=1\n")
        assert run_cli("backtest", "--config", cfg, "--data", path) == 1

    def test_usage_errors_exit_1(self, data_csv, tmp_path):
        path, _ = data_csv
        assert run_cli("backtest", "--data", path, "--model", "nope") == 1
        assert run_cli("backtest", "--model", "lear") == 1  # no data source
        assert (
            run_cli("backtest", "--data", path, "--model", "lear",
                    "--out-dir", tmp_path)
            == 1
        )  # missing test-start

    def test_out_of_span_dates_exit_2(self, data_csv, tmp_path):
        path, _ = data_csv
        base = (
            "backtest", "--data", path, "--model", "naive",
            "--min-history", "100", "--out-dir", tmp_path,
        )
        assert run_cli(*base, "--test-start", "2099-01-01") == 2
        assert run_cli(*base, "--test-start", "2013-08-01",
                       "--test-end", "2099-01-01") == 2
        assert run_cli(*base, "--test-start", "2013-08-05",
                       "--test-end", "2013-08-01") == 2  # empty period

    def test_data_errors_exit_2(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("timestamp,price,exog1,exog2\n2013-01-01 00:30,1,2,3\n")
        assert (
            run_cli("backtest", "--data", bad, "--model", "lear",
                    "--test-start", "2013-08-01", "--out-dir", tmp_path)
            == 2
        )


class TestEvaluateCommand:
    def test_self_evaluation_all_zero(self, data_csv, tmp_path, capsys):
        path, ds = data_csv
        run_cli(
            "backtest", "--data", path, "--model", "naive",
            "--test-start", "2013-08-01", "--min-history", "100",
            "--out-dir", tmp_path,
        )
        naive_csv = tmp_path / "syn_naive_lag7.csv"
        # craft a perfect forecast: copy the actual prices over the period
        fm = read_forecast_csv(naive_csv)
        from epfbench.metrics import from_dataset
        perfect = from_dataset(ds, fm.dates[0], fm.dates[-1])
        runio.write_forecast_csv(perfect, tmp_path / "perfect.csv")
        code = run_cli(
            "evaluate", "--actuals", path, "--out", tmp_path / "report.csv",
            tmp_path / "perfect.csv",
        )
        assert code == 0
        report = {(m, k): v for m, k, v in read_metric_report(tmp_path / "report.csv")}
        for kind in ("MAE", "RMSE", "MAPE", "sMAPE", "rMAE", "rRMSE", "MASE"):
            assert report[("perfect", kind)] == 0.0
        assert (tmp_path / "report.json").exists()

    def test_report_rows_and_naive_rmae_one(self, data_csv, tmp_path):
        path, _ = data_csv
        run_cli(
            "backtest", "--data", path, "--model", "naive",
            "--test-start", "2013-08-01", "--min-history", "100",
            "--out-dir", tmp_path,
        )
        code = run_cli(
            "evaluate", "--actuals", path, "--out", tmp_path / "report.csv",
            tmp_path / "syn_naive_lag7.csv",
        )
        assert code == 0
        report = {(m, k): v for m, k, v in read_metric_report(tmp_path / "report.csv")}
        assert report[("syn_naive_lag7", "rMAE")] == 1.0


class TestTestCommand:
    def _two_forecasts(self, data_csv, tmp_path):
        path, _ = data_csv
        run_cli(
            "backtest", "--data", path, "--model", "lear", "--window", "28,35", "--allow-any-window",
            "--test-start", "2013-08-01", "--test-end", "2013-08-20",
            "--min-history", "100", "--out-dir", tmp_path,
        )
        return tmp_path / "syn_lear_28.csv", tmp_path / "syn_lear_35.csv"

    def test_chessboard_outputs(self, data_csv, tmp_path):
        path, _ = data_csv
        a, b = self._two_forecasts(data_csv, tmp_path)
        code = run_cli(
            "test", "--actuals", path, "--test", "GW", "--lags", "1",
            "--out", tmp_path / "gw.svg", a, b,
        )
        assert code == 0
        assert (tmp_path / "gw.svg").read_text().startswith("<svg")
        matrix = read_pvalue_csv(tmp_path / "gw.csv")
        assert matrix.names == ("syn_lear_28", "syn_lear_35")

    def test_identical_files_blank_exit_zero(self, data_csv, tmp_path, capsys):
        path, _ = data_csv
        a, _ = self._two_forecasts(data_csv, tmp_path)
        import shutil

        shutil.copy(a, tmp_path / "copy.csv")
        code = run_cli(
            "test", "--actuals", path, "--test", "DM",
            "--out", tmp_path / "dm.svg", a, tmp_path / "copy.csv",
        )
        assert code == 0
        err = capsys.readouterr().err
        assert "degenerate" in err
        matrix = read_pvalue_csv(tmp_path / "dm.csv")
        assert np.all(np.isnan(matrix.values))


class TestHyperoptCommand:
    def test_smoke_study(self, data_csv, tmp_path):
        path, _ = data_csv
        code = run_cli(
            "hyperopt", "--data", path, "--trials", "2", "--seed", "1",
            "--test-start", "2013-09-01", "--out-dir", tmp_path,
            "--dnn-window-days", "210", "--val-weeks", "6",
            "--max-epochs", "4", "--patience", "2",
        )
        assert code == 0
        best = json.loads((tmp_path / "best_config.json").read_text())
        assert "config" in best
        assert (tmp_path / "trials.jsonl").exists()


class TestReportCommand:
    def test_summary(self, data_csv, tmp_path, capsys):
        path, _ = data_csv
        run_cli(
            "backtest", "--data", path, "--model", "lear", "--window", "28", "--allow-any-window",
            "--test-start", "2013-08-01", "--test-end", "2013-08-14",
            "--min-history", "100", "--out-dir", tmp_path,
        )
        code = run_cli("report", "--actuals", path, "--run-dir", tmp_path)
        assert code == 0
        out = capsys.readouterr().out
        assert "syn_lear_28" in out
        assert (tmp_path / "summary.csv").exists()


class TestFetchCommand:
    def test_fetch_via_manifest(self, data_csv, tmp_path, capsys):
        path, _ = data_csv
        manifest = tmp_path / "manifest.txt"
        manifest.write_text(f"NP.url=file://{path}\nNP.sha256=-\n")
        code = run_cli(
            "fetch", "--market", "NP", "--cache-dir", tmp_path / "cache",
            "--manifest", manifest,
        )
        assert code == 0
        printed = capsys.readouterr().out.strip()
        assert printed.endswith("NP.csv")

    def test_unknown_market_exit_1(self, tmp_path):
        assert run_cli("fetch", "--market", "XX", "--cache-dir", tmp_path) == 1
