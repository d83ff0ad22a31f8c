import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from solarpp.cli import EXIT_CONFIG, EXIT_DATA, main
from solarpp.data import EnsembleSeries
from solarpp.emos import EmosRegressor
from solarpp.pipeline import (
    ConfigError,
    RunConfig,
    StrategyRunner,
    derive_seed,
    emos_features,
    ghi_pp_to_ensemble,
    nn_features,
    prepare_data,
    run_all,
)
from solarpp.synthetic import generate_benchmark


@pytest.fixture(scope="module")
def small_benchmark(tmp_path_factory):
    """A short synthetic dataset plus a config tuned for fast tests."""
    root = tmp_path_factory.mktemp("small")
    generate_benchmark(root, seed=1, start="2019-03-01", end="2020-12-31", n_members=8)
    cfg_path = root / "config.json"
    payload = json.loads(cfg_path.read_text())
    payload["train_start"] = "2019-03-01"
    payload["methods"] = ["emos", "nn"]
    payload["nn_options"] = {
        "repeats": 1, "hidden": 8, "max_epochs": 2, "batch_size": 512,
    }
    cfg_path.write_text(json.dumps(payload))
    return cfg_path


class TestRunConfig:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            RunConfig.from_json(tmp_path / "nope.json")

    def test_unknown_key_rejected(self, tmp_path, small_benchmark):
        payload = json.loads(Path(small_benchmark).read_text())
        payload["tpyo"] = 1
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(payload))
        with pytest.raises(ConfigError):
            RunConfig.from_json(bad)

    def test_missing_required_key(self, tmp_path, small_benchmark):
        payload = json.loads(Path(small_benchmark).read_text())
        del payload["site"]
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(payload))
        with pytest.raises(ConfigError):
            RunConfig.from_json(bad)

    def test_unknown_method_rejected(self, tmp_path, small_benchmark):
        payload = json.loads(Path(small_benchmark).read_text())
        payload["methods"] = ["emos", "gbm"]
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(payload))
        with pytest.raises(ConfigError):
            RunConfig.from_json(bad)

    def test_nonexistent_data_path(self, tmp_path, small_benchmark):
        payload = json.loads(Path(small_benchmark).read_text())
        payload["pv_obs_csv"] = str(tmp_path / "missing.csv")
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(payload))
        with pytest.raises(ConfigError):
            RunConfig.from_json(bad)

    def test_plant_tilt_defaults_to_latitude(self, small_benchmark):
        cfg = RunConfig.from_json(small_benchmark)
        site = dict(cfg.site)
        site.pop("tilt_deg", None)
        cfg.site = site
        assert cfg.plant.tilt_deg == pytest.approx(abs(site["latitude"]))


class TestDeriveSeed:
    def test_deterministic_and_tag_sensitive(self):
        assert derive_seed(1, "a", "b") == derive_seed(1, "a", "b")
        assert derive_seed(1, "a", "b") != derive_seed(1, "a", "c")
        assert derive_seed(1, "a", "b") != derive_seed(2, "a", "b")

    def test_none_tag_distinct_from_string(self):
        # methods may legitimately be None; must not collide with "None"-free tags
        assert derive_seed(1, "x", None) != derive_seed(1, "x")


class TestFeatures:
    def _series(self, n=30, m=4):
        rng = np.random.default_rng(0)
        times = pd.date_range("2020-01-01 01:00", periods=n, freq="1h")
        return EnsembleSeries(
            "ghi", times, rng.uniform(0, 500, size=(n, m)),
            covariates={"t2m": rng.uniform(0, 30, n), "wind10m": rng.uniform(0, 8, n)},
        )

    def test_emos_features_columns(self):
        ens = self._series()
        X = emos_features(ens, -8)
        assert X.shape == (30, 3)
        np.testing.assert_allclose(X[:, 0], ens.members.mean(axis=1))
        np.testing.assert_allclose(X[:, 1], ens.members.var(axis=1, ddof=1))
        assert set(np.unique(X[:, 2])) <= set(range(24))

    def test_nn_features_columns(self):
        ens = self._series()
        X = nn_features(ens, -8)
        assert X.shape == (30, 5)
        np.testing.assert_allclose(X[:, 1], ens.members.std(axis=1, ddof=1))
        np.testing.assert_allclose(X[:, 2], ens.covariates["t2m"])
        np.testing.assert_allclose(X[:, 3], ens.covariates["wind10m"])


class TestGhiPpToEnsemble:
    def test_quantile_members_sorted_and_count_preserved(self):
        ens = TestFeatures()._series(n=200, m=6)
        y = np.clip(ens.members.mean(axis=1) + np.random.default_rng(1).normal(0, 30, 200), 0, None)
        model = EmosRegressor(mode="global", seed=0).fit(emos_features(ens, -8), y)
        out = ghi_pp_to_ensemble(model, ens, -8)
        assert out.n_members == 6
        assert out.times.equals(ens.times)
        # equidistant quantiles of one distribution are non-decreasing
        assert np.all(np.diff(out.members, axis=1) >= 0)
        assert np.all(out.members >= 0.0)

    def test_members_are_the_documented_quantile_levels(self):
        ens = TestFeatures()._series(n=50, m=4)
        y = np.clip(ens.members.mean(axis=1), 0, None)
        model = EmosRegressor(mode="global", seed=0).fit(emos_features(ens, -8), y)
        out = ghi_pp_to_ensemble(model, ens, -8)
        dist = model.predict(emos_features(ens, -8))
        for j, level in enumerate((np.arange(1, 5) - 0.5) / 4):
            np.testing.assert_allclose(out.members[:, j], dist.quantile(level), rtol=1e-12)


@pytest.fixture(scope="module")
def small_run(small_benchmark, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = RunConfig.from_json(small_benchmark)
    table = run_all(cfg, out)
    return cfg, out, table


class TestRunAll:
    def test_report_combinatorics(self, small_run):
        cfg, out, table = small_run
        # 2 methods: ghi raw + 2, pv raw_raw + 3 strategies x 2 + direct nn
        assert len(table[table["level"] == "ghi"]) == 3
        assert len(table[table["level"] == "pv"]) == 8
        for sub in ("ghi/raw", "ghi/emos", "ghi/nn", "raw_raw/raw",
                    "pp_raw/emos", "raw_pp/nn", "pp_pp/emos", "direct/nn"):
            assert (out / sub / "report.json").exists(), sub
            assert (out / sub / "per_hour.csv").exists(), sub
            assert (out / sub / "histogram.csv").exists(), sub

    def test_comparison_table_contents(self, small_run):
        _, out, table = small_run
        written = pd.read_csv(out / "comparison.csv")
        assert len(written) == len(table)
        assert {"level", "strategy", "method", "crps", "coverage_daytime"} <= set(written.columns)
        # sorted by crps within each level
        for level in ("ghi", "pv"):
            crps = written[written["level"] == level]["crps"].to_numpy()
            assert np.all(np.diff(crps) >= 0)

    def test_manifest(self, small_run):
        cfg, out, _ = small_run
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["master_seed"] == cfg.master_seed
        assert set(manifest["data_fingerprints"]) == {
            "ensemble_csv", "ghi_obs_csv", "pv_obs_csv",
        }
        assert manifest["train_rows"] > 0 and manifest["test_rows"] > 0

    def test_member_count_preserved_through_chain(self, small_benchmark):
        cfg = RunConfig.from_json(small_benchmark)
        train, test, _ = prepare_data(cfg)
        runner = StrategyRunner(cfg, train, test)
        assert runner.raw_chain("test").n_members == cfg.n_members
        assert runner.pp_chain("emos", "test").n_members == cfg.n_members

    def test_direct_requires_nn_method(self, small_benchmark):
        cfg = RunConfig.from_json(small_benchmark)
        train, test, _ = prepare_data(cfg)
        runner = StrategyRunner(cfg, train, test)
        with pytest.raises(ConfigError):
            runner.run("direct", "emos")

    def test_run_all_is_deterministic(self, small_benchmark, small_run, tmp_path):
        cfg, _, table = small_run
        cfg2 = RunConfig.from_json(small_benchmark)
        table2 = run_all(cfg2, tmp_path / "again")
        pd.testing.assert_frame_equal(table, table2)


class TestCli:
    def test_evaluate_requires_method(self, small_benchmark, tmp_path):
        runner = CliRunner()
        result = runner.invoke(main, [
            "evaluate", "--config", str(small_benchmark),
            "--out", str(tmp_path / "e"), "--strategy", "raw_pp",
        ])
        assert result.exit_code == EXIT_CONFIG

    def test_bad_config_exit_code(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        result = CliRunner().invoke(main, [
            "ingest", "--config", str(bad), "--out", str(tmp_path / "o"),
        ])
        assert result.exit_code == EXIT_CONFIG

    def test_ingest(self, small_benchmark, tmp_path):
        result = CliRunner().invoke(main, [
            "ingest", "--config", str(small_benchmark), "--out", str(tmp_path / "i"),
        ])
        assert result.exit_code == 0, result.output
        summary = json.loads((tmp_path / "i" / "ingest.json").read_text())
        assert summary["train_rows"] > 0
        assert (tmp_path / "i" / "test_ensemble.csv").exists()

    def test_chain(self, small_benchmark, tmp_path):
        result = CliRunner().invoke(main, [
            "chain", "--config", str(small_benchmark), "--out", str(tmp_path / "c"),
        ])
        assert result.exit_code == 0, result.output
        df = pd.read_csv(tmp_path / "c" / "test_pv_ensemble.csv")
        assert "member_08" in df.columns

    def test_fit_ghi_and_evaluate(self, small_benchmark, tmp_path):
        runner = CliRunner()
        result = runner.invoke(main, [
            "fit-ghi", "--config", str(small_benchmark),
            "--out", str(tmp_path / "m"), "--method", "emos",
        ])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "m" / "ghi_emos.emos.json").exists()
        result = runner.invoke(main, [
            "evaluate", "--config", str(small_benchmark),
            "--out", str(tmp_path / "ev"), "--strategy", "ghi", "--method", "emos",
        ])
        assert result.exit_code == 0, result.output
        payload = json.loads((tmp_path / "ev" / "report.json").read_text())
        assert payload["aggregate"]["crps"] > 0

    def test_fit_pv_and_direct(self, small_benchmark, tmp_path):
        runner = CliRunner()
        result = runner.invoke(main, [
            "fit-pv", "--config", str(small_benchmark),
            "--out", str(tmp_path / "m"), "--method", "emos", "--chain-input", "raw",
        ])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "m" / "pv_raw_emos.emos.json").exists()
        result = runner.invoke(main, [
            "fit-direct", "--config", str(small_benchmark),
            "--out", str(tmp_path / "m"), "--method", "nn",
        ])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "m" / "direct_nn.nn.npz").exists()

    def test_make_synthetic(self, tmp_path):
        result = CliRunner().invoke(main, [
            "make-synthetic", "--out", str(tmp_path / "s"),
            "--seed", "3", "--start", "2020-06-01", "--end", "2020-08-01",
        ])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "s" / "ensemble.csv").exists()
        assert (tmp_path / "s" / "config.json").exists()
