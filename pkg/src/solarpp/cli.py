"""Command line interface.

Every subcommand reads a RunConfig JSON and writes into a run directory.
Exit codes: 0 success, 2 config error, 3 data error, 4 fit error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from solarpp.data import DataError, write_ensemble_csv, write_observation_csv
from solarpp.emos import EmosRegressor, InsufficientHourDataError
from solarpp.pipeline import (
    ConfigError,
    METHODS,
    RunConfig,
    StrategyRunner,
    derive_seed,
    prepare_data,
    run_all,
)

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_FIT = 4


def _load_config(path) -> RunConfig:
    try:
        return RunConfig.from_json(path)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)


def _prepare(cfg):
    try:
        return prepare_data(cfg)
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        sys.exit(EXIT_DATA)


def _runner(config_path) -> StrategyRunner:
    cfg = _load_config(config_path)
    train, test, _ = _prepare(cfg)
    return StrategyRunner(cfg, train, test)


config_option = click.option(
    "--config", "config_path", required=True, type=click.Path(exists=True)
)
out_option = click.option("--out", "out_dir", required=True, type=click.Path())


@click.group()
def main():
    """Probabilistic solar power forecasting pipeline."""


@main.command()
@config_option
@out_option
def ingest(config_path, out_dir):
    """Load, align and split the data; write the joined splits as CSV."""
    cfg = _load_config(config_path)
    train, test, dropped = _prepare(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, split in (("train", train), ("test", test)):
        write_ensemble_csv(split.ghi_forecast, out / f"{name}_ensemble.csv")
        write_observation_csv(split.ghi_obs, out / f"{name}_ghi_obs.csv")
        write_observation_csv(split.pv_obs, out / f"{name}_pv_obs.csv")
    summary = {"train_rows": len(train), "test_rows": len(test), "dropped_rows": dropped}
    (out / "ingest.json").write_text(json.dumps(summary, indent=2))
    click.echo(json.dumps(summary))


@main.command()
@config_option
@out_option
def chain(config_path, out_dir):
    """Run the model chain on the raw ensemble; write PV ensembles."""
    runner = _runner(config_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_ensemble_csv(runner.raw_chain("train"), out / "train_pv_ensemble.csv")
    write_ensemble_csv(runner.raw_chain("test"), out / "test_pv_ensemble.csv")
    click.echo(f"wrote PV ensembles to {out}")


def _fit_errors(fn):
    try:
        return fn()
    except (InsufficientHourDataError, ValueError) as exc:
        click.echo(f"fit error: {exc}", err=True)
        sys.exit(EXIT_FIT)


def _save_model(model, out: Path, tag: str):
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(model, EmosRegressor):
        path = out / f"{tag}.emos.json"
        path.write_text(model.to_json())
    else:
        path = out / f"{tag}.nn.npz"
        model.save(path)
    return path


@main.command("fit-ghi")
@config_option
@out_option
@click.option("--method", type=click.Choice(METHODS), required=True)
def fit_ghi(config_path, out_dir, method):
    """Fit a GHI post-processing model and save it."""
    runner = _runner(config_path)
    model = _fit_errors(lambda: runner.ghi_model(method))
    path = _save_model(model, Path(out_dir), f"ghi_{method}")
    click.echo(f"saved {path}")


@main.command("fit-pv")
@config_option
@out_option
@click.option("--method", type=click.Choice(METHODS), required=True)
@click.option(
    "--chain-input",
    type=click.Choice(["raw", "pp"]),
    default="raw",
    help="train on raw-chain output or on post-processed-GHI chain output",
)
def fit_pv(config_path, out_dir, method, chain_input):
    """Fit a PV post-processing model on training-period chain output."""
    runner = _runner(config_path)
    model = _fit_errors(
        lambda: runner.pv_model(method, chain_input, method if chain_input == "pp" else None)
    )
    path = _save_model(model, Path(out_dir), f"pv_{chain_input}_{method}")
    click.echo(f"saved {path}")


@main.command("fit-direct")
@config_option
@out_option
@click.option("--method", type=click.Choice(["nn", "nn_hourly"]), default="nn")
def fit_direct(config_path, out_dir, method):
    """Fit the direct PV forecaster (no model chain)."""
    runner = _runner(config_path)
    from solarpp.pipeline import fit_direct_model

    seed = derive_seed(runner.cfg.master_seed, "direct", method, "fit")
    model = _fit_errors(
        lambda: fit_direct_model(method, runner.train, runner.cfg, seed)
    )
    path = _save_model(model, Path(out_dir), f"direct_{method}")
    click.echo(f"saved {path}")


@main.command()
@config_option
@out_option
@click.option("--strategy", type=click.Choice(["raw_raw", "pp_raw", "raw_pp", "pp_pp", "direct", "ghi"]), required=True)
@click.option("--method", type=click.Choice(METHODS), default=None)
def evaluate(config_path, out_dir, strategy, method):
    """Run one strategy/method end to end and write its report."""
    runner = _runner(config_path)
    if strategy != "raw_raw" and strategy != "ghi" and method is None:
        click.echo("config error: --method required for this strategy", err=True)
        sys.exit(EXIT_CONFIG)
    report = _fit_errors(
        lambda: runner.run_ghi(method) if strategy == "ghi" else runner.run(strategy, method)
    )
    report.write(Path(out_dir))
    click.echo(json.dumps(report.aggregate))


@main.command("run-all")
@config_option
@out_option
def run_all_cmd(config_path, out_dir):
    """Run every configured strategy/method combination."""
    cfg = _load_config(config_path)
    try:
        table = run_all(cfg, out_dir)
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        sys.exit(EXIT_DATA)
    except (InsufficientHourDataError, ValueError) as exc:
        click.echo(f"fit error: {exc}", err=True)
        sys.exit(EXIT_FIT)
    with np.printoptions(precision=4):
        click.echo(table.to_string(index=False))


@main.command("make-synthetic")
@out_option
@click.option("--seed", type=int, default=0)
@click.option("--start", default="2017-07-30")
@click.option("--end", default="2020-12-31")
def make_synthetic(out_dir, seed, start, end):
    """Generate a synthetic benchmark dataset in the documented layout."""
    from solarpp.synthetic import generate_benchmark

    path = generate_benchmark(out_dir, seed=seed, start=start, end=end)
    click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
