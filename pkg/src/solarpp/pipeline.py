"""End-to-end orchestration of the post-processing strategies.

Five strategies are supported, each producing a PV-power evaluation on the
test period:

* ``raw_raw``  – raw GHI ensemble through the model chain, no correction
* ``pp_raw``   – post-process GHI, convert the corrected ensemble
* ``raw_pp``   – convert the raw ensemble, post-process the PV output
* ``pp_pp``    – post-process at both stages (same method family)
* ``direct``   – NN predicts PV power from weather inputs, no model chain

Post-processing models are fitted on training-period rows only; the model
chain is deterministic, so its training-period outputs are available
without lookahead. All randomness is derived from the master seed, the
strategy tag, the method name and the purpose, making full runs
reproducible byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from solarpp import __version__
from solarpp.data import (
    Dataset,
    EnsembleSeries,
    join_series,
    join_and_split,
    load_ensemble_csv,
    load_observation_csv,
    local_hour,
    shift_stamp_to_hour_end,
)
from solarpp.distributions import ensemble_stats
from solarpp.emos import EmosRegressor
from solarpp.evaluation import EvaluationReport, score_distribution_forecasts, score_ensemble_forecasts
from solarpp.modelchain import PlantSpec, run_chain
from solarpp.nn import DistributionalNetRegressor

STRATEGIES = ("raw_raw", "pp_raw", "raw_pp", "pp_pp", "direct")
METHODS = ("emos", "emos_hourly", "nn", "nn_hourly")
DIRECT_METHODS = ("nn", "nn_hourly")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Parsed run configuration; see README for the JSON schema."""

    ensemble_csv: str
    ghi_obs_csv: str
    pv_obs_csv: str
    site: dict
    train_start: str = "2017-07-30"
    train_end: str = "2019-12-31"
    test_year: int = 2020
    ghi_obs_convention: str = "mid-hour"
    pv_obs_convention: str = "hour-start"
    methods: tuple = METHODS
    include_direct: bool = True
    master_seed: int = 20200101
    n_members: int = 50
    nn_options: dict = field(default_factory=dict)
    emos_options: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        try:
            payload = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        known = set(cls.__dataclass_fields__)
        unknown = set(payload) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("ensemble_csv", "ghi_obs_csv", "pv_obs_csv", "site"):
            if key not in payload:
                raise ConfigError(f"missing config key: {key}")
        cfg = cls(**payload)
        cfg.methods = tuple(cfg.methods)
        for method in cfg.methods:
            if method not in METHODS:
                raise ConfigError(f"unknown method: {method}")
        for key in ("ensemble_csv", "ghi_obs_csv", "pv_obs_csv"):
            if not Path(getattr(cfg, key)).exists():
                raise ConfigError(f"{key} does not exist: {getattr(cfg, key)}")
        return cfg

    @property
    def plant(self) -> PlantSpec:
        site = dict(self.site)
        site.setdefault("tilt_deg", abs(site["latitude"]))
        return PlantSpec.from_dict(site)


def derive_seed(master_seed: int, *tags) -> int:
    """Deterministic child seed from the master seed and context tags."""
    text = ":".join([str(master_seed)] + [str(t) for t in tags])
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "little")


def file_fingerprint(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def prepare_data(cfg: RunConfig) -> tuple[Dataset, Dataset, int]:
    """Load, shift, join and split the three series per the configuration."""
    forecast = load_ensemble_csv(cfg.ensemble_csv, n_members=cfg.n_members)
    ghi_obs = shift_stamp_to_hour_end(
        load_observation_csv(cfg.ghi_obs_csv, "ghi"), cfg.ghi_obs_convention
    )
    pv_obs = shift_stamp_to_hour_end(
        load_observation_csv(cfg.pv_obs_csv, "pv_power"), cfg.pv_obs_convention
    )
    joined, dropped = join_series(forecast, ghi_obs, pv_obs)
    train, test = join_and_split(joined, cfg.train_start, cfg.train_end, cfg.test_year)
    return train, test, dropped


# -- feature construction ------------------------------------------------------

def emos_features(ens: EnsembleSeries, utc_offset: float) -> np.ndarray:
    mean, var = ensemble_stats(ens.members)
    hours = local_hour(ens.times, utc_offset)
    return np.column_stack([mean, var, hours])


def nn_features(ens: EnsembleSeries, utc_offset: float) -> np.ndarray:
    """(ensemble mean, ensemble sd, t2m, wind, local hour) per row."""
    mean, var = ensemble_stats(ens.members)
    hours = local_hour(ens.times, utc_offset)
    return np.column_stack(
        [mean, np.sqrt(var), ens.covariates["t2m"], ens.covariates["wind10m"], hours]
    )


def ghi_pp_to_ensemble(model, ens: EnsembleSeries, utc_offset: float) -> EnsembleSeries:
    """Sample the post-processed GHI distribution back into m members.

    Uses equidistant quantiles at levels (i - 0.5)/m, a deterministic and
    CRPS-optimal m-point representation, clamped to the censoring bounds by
    the quantile function itself.
    """
    if isinstance(model, EmosRegressor):
        dist = model.predict(emos_features(ens, utc_offset))
    else:
        dist = model.predict(nn_features(ens, utc_offset))
    m = ens.n_members
    levels = (np.arange(1, m + 1) - 0.5) / m
    members = dist.quantile(levels[:, None]).T  # (n, m)
    return EnsembleSeries(
        variable=ens.variable,
        times=ens.times,
        members=members,
        covariates=dict(ens.covariates),
    )


# -- model fitting ---------------------------------------------------------------

def _emos_kwargs(cfg: RunConfig) -> dict:
    return dict(cfg.emos_options)


def _nn_kwargs(cfg: RunConfig) -> dict:
    return dict(cfg.nn_options)


def fit_ghi_model(method: str, train: Dataset, cfg: RunConfig, seed: int):
    """Fit one GHI post-processing model (left-censored at zero)."""
    utc = cfg.plant.utc_offset
    y = train.ghi_obs.values
    if method.startswith("emos"):
        model = EmosRegressor(
            mode="hourly" if method == "emos_hourly" else "global",
            lower=0.0, upper=np.inf, seed=seed, **_emos_kwargs(cfg),
        )
        model.fit(emos_features(train.ghi_forecast, utc), y)
    else:
        model = DistributionalNetRegressor(
            mode="hourly" if method == "nn_hourly" else "embedding",
            head="ghi", lower=0.0, upper=np.inf, seed=seed, **_nn_kwargs(cfg),
        )
        model.fit(nn_features(train.ghi_forecast, utc), y)
    return model


def fit_pv_model(method: str, pv_train_ens: EnsembleSeries, pv_obs, cfg: RunConfig, seed: int):
    """Fit one PV post-processing model (doubly censored at 0/capacity)."""
    plant = cfg.plant
    utc = plant.utc_offset
    if method.startswith("emos"):
        model = EmosRegressor(
            mode="hourly" if method == "emos_hourly" else "global",
            lower=0.0, upper=plant.capacity_mw, seed=seed, **_emos_kwargs(cfg),
        )
        model.fit(emos_features(pv_train_ens, utc), pv_obs)
    else:
        model = DistributionalNetRegressor(
            mode="hourly" if method == "nn_hourly" else "embedding",
            head="pv", lower=0.0, upper=plant.capacity_mw, seed=seed, **_nn_kwargs(cfg),
        )
        model.fit(nn_features(pv_train_ens, utc), pv_obs)
    return model


def fit_direct_model(method: str, train: Dataset, cfg: RunConfig, seed: int):
    """Fit the direct PV forecaster on GHI-ensemble features."""
    plant = cfg.plant
    model = DistributionalNetRegressor(
        mode="hourly" if method == "nn_hourly" else "embedding",
        head="pv", lower=0.0, upper=plant.capacity_mw, seed=seed, **_nn_kwargs(cfg),
    )
    model.fit(nn_features(train.ghi_forecast, plant.utc_offset), train.pv_obs.values)
    return model


# -- evaluation helpers --------------------------------------------------------

def evaluate_distribution(model, ens: EnsembleSeries, obs, cfg: RunConfig, seed: int) -> EvaluationReport:
    utc = cfg.plant.utc_offset
    if isinstance(model, EmosRegressor):
        dist = model.predict(emos_features(ens, utc))
    else:
        dist = model.predict(nn_features(ens, utc))
    return score_distribution_forecasts(
        dist, obs, ens.times, local_hour(ens.times, utc), seed=seed
    )


def evaluate_ensemble(ens: EnsembleSeries, obs, cfg: RunConfig, seed: int) -> EvaluationReport:
    utc = cfg.plant.utc_offset
    return score_ensemble_forecasts(
        ens.members, obs, ens.times, local_hour(ens.times, utc), seed=seed
    )


class StrategyRunner:
    """Caches fitted models and chain outputs across strategy combinations."""

    def __init__(self, cfg: RunConfig, train: Dataset, test: Dataset):
        self.cfg = cfg
        self.train = train
        self.test = test
        self.plant = cfg.plant
        self._cache = {}

    def _cached(self, key, builder):
        if key not in self._cache:
            self._cache[key] = builder()
        return self._cache[key]

    # -- building blocks ----------------------------------------------------
    def ghi_model(self, method: str):
        seed = derive_seed(self.cfg.master_seed, "ghi", method, "fit")
        return self._cached(
            ("ghi_model", method),
            lambda: fit_ghi_model(method, self.train, self.cfg, seed),
        )

    def raw_chain(self, split: str) -> EnsembleSeries:
        ds = self.train if split == "train" else self.test
        return self._cached(
            ("raw_chain", split), lambda: run_chain(ds.ghi_forecast, self.plant)
        )

    def pp_chain(self, method: str, split: str) -> EnsembleSeries:
        ds = self.train if split == "train" else self.test

        def build():
            corrected = ghi_pp_to_ensemble(
                self.ghi_model(method), ds.ghi_forecast, self.plant.utc_offset
            )
            return run_chain(corrected, self.plant)

        return self._cached(("pp_chain", method, split), build)

    def pv_model(self, method: str, chain_kind: str, chain_method: str | None):
        """PV post-processing model trained on training-period chain output."""
        if chain_kind == "raw":
            train_ens = self.raw_chain("train")
        else:
            train_ens = self.pp_chain(chain_method, "train")
        seed = derive_seed(self.cfg.master_seed, "pv", method, chain_kind, chain_method, "fit")
        return self._cached(
            ("pv_model", method, chain_kind, chain_method),
            lambda: fit_pv_model(method, train_ens, self.train.pv_obs.values, self.cfg, seed),
        )

    # -- strategy execution --------------------------------------------------
    def run(self, strategy: str, method: str | None) -> EvaluationReport:
        """Execute one strategy/method combination, scored on the test split."""
        cfg = self.cfg
        pv_obs = self.test.pv_obs.values
        eval_seed = derive_seed(cfg.master_seed, strategy, method, "eval")

        if strategy == "raw_raw":
            return evaluate_ensemble(self.raw_chain("test"), pv_obs, cfg, eval_seed)
        if strategy == "pp_raw":
            return evaluate_ensemble(self.pp_chain(method, "test"), pv_obs, cfg, eval_seed)
        if strategy == "raw_pp":
            model = self.pv_model(method, "raw", None)
            return evaluate_distribution(model, self.raw_chain("test"), pv_obs, cfg, eval_seed)
        if strategy == "pp_pp":
            model = self.pv_model(method, "pp", method)
            return evaluate_distribution(model, self.pp_chain(method, "test"), pv_obs, cfg, eval_seed)
        if strategy == "direct":
            if method not in DIRECT_METHODS:
                raise ConfigError("direct strategy requires an NN method")
            seed = derive_seed(cfg.master_seed, "direct", method, "fit")
            model = self._cached(
                ("direct_model", method),
                lambda: fit_direct_model(method, self.train, cfg, seed),
            )
            return evaluate_distribution(model, self.test.ghi_forecast, pv_obs, cfg, eval_seed)
        raise ConfigError(f"unknown strategy: {strategy}")

    def run_ghi(self, method: str | None) -> EvaluationReport:
        """GHI-level evaluation (raw ensemble when method is None)."""
        cfg = self.cfg
        obs = self.test.ghi_obs.values
        eval_seed = derive_seed(cfg.master_seed, "ghi_eval", method)
        if method is None:
            return evaluate_ensemble(self.test.ghi_forecast, obs, cfg, eval_seed)
        return evaluate_distribution(
            self.ghi_model(method), self.test.ghi_forecast, obs, cfg, eval_seed
        )


def _comparison_row(level, strategy, method, report: EvaluationReport) -> dict:
    agg, day = report.aggregate, report.daytime
    return {
        "level": level,
        "strategy": strategy or "",
        "method": method or "raw",
        "crps": agg["crps"],
        "mae": agg["mae"],
        "bias": agg["bias"],
        "coverage": agg["coverage"],
        "coverage_daytime": day["coverage"],
        "width": agg["width"],
        "width_daytime": day["width"],
        "n": agg["n"],
    }


def run_all(cfg: RunConfig, out_dir) -> pd.DataFrame:
    """Run every configured strategy/method combination and write reports.

    Produces ``manifest.json``, ``comparison.csv`` and one report directory
    per combination under ``out_dir``. Returns the comparison table.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train, test, dropped = prepare_data(cfg)
    runner = StrategyRunner(cfg, train, test)

    rows = []
    # GHI level: raw ensemble plus every method (Table-1 analogue)
    report = runner.run_ghi(None)
    report.write(out / "ghi" / "raw")
    rows.append(_comparison_row("ghi", "", None, report))
    for method in cfg.methods:
        report = runner.run_ghi(method)
        report.write(out / "ghi" / method)
        rows.append(_comparison_row("ghi", "", method, report))

    # PV level
    jobs = [("raw_raw", None)]
    jobs += [(s, m) for s in ("pp_raw", "raw_pp", "pp_pp") for m in cfg.methods]
    if cfg.include_direct:
        jobs += [("direct", m) for m in cfg.methods if m in DIRECT_METHODS]
    for strategy, method in jobs:
        report = runner.run(strategy, method)
        report.write(out / strategy / (method or "raw"))
        rows.append(_comparison_row("pv", strategy, method, report))

    table = pd.DataFrame(rows)
    table = table.sort_values(["level", "crps"], kind="stable").reset_index(drop=True)
    table.to_csv(out / "comparison.csv", index=False, float_format="%.6f")

    manifest = {
        "version": __version__,
        "master_seed": cfg.master_seed,
        "train_rows": len(train),
        "test_rows": len(test),
        "dropped_rows": dropped,
        "data_fingerprints": {
            "ensemble_csv": file_fingerprint(cfg.ensemble_csv),
            "ghi_obs_csv": file_fingerprint(cfg.ghi_obs_csv),
            "pv_obs_csv": file_fingerprint(cfg.pv_obs_csv),
        },
        "methods": list(cfg.methods),
        "include_direct": cfg.include_direct,
        "site": cfg.site,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return table
