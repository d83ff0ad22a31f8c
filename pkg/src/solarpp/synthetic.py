"""Synthetic benchmark dataset in the documented CSV layouts.

Builds a multi-year hourly scenario for a configurable site: a "true" GHI
series driven by a daily clear/cloudy regime process, an underdispersed
and biased 50-member forecast ensemble around it, deterministic covariate
forecasts, and PV production obtained by running the true weather through
a deliberately perturbed plant model (different geometry, temperature
response and an hour-dependent efficiency), so that the irradiance-level
and power-level systematic errors resemble those of real NWP ensembles
feeding a model chain.

The magnitude constants below were tuned so that the raw-ensemble and
post-processed irradiance scores land in the ballpark of published
verification studies of 50-member GHI ensembles (raw CRPS around 15 W/m2,
calibrated CRPS around 11 W/m2, severe raw underdispersion).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd

from solarpp.data import (
    EnsembleSeries,
    ObservationSeries,
    write_ensemble_csv,
    write_observation_csv,
)
from solarpp.modelchain import PlantSpec, convert_ghi, solar_position

#: default site: latitude/longitude/capacity of a southern-California plant
DEFAULT_SITE = {
    "latitude": 32.62,
    "longitude": -116.13,
    # daylight-saving style clock: solar noon falls in the early afternoon
    "utc_offset": -7.0,
    "capacity_mw": 20.0,
    "tilt_deg": 32.62,
    "azimuth_deg": 180.0,
    "albedo": 0.2,
    "gamma_pdc": -0.004,
}

# forecast error structure (fractions of extraterrestrial GHI)
FORECAST_ERROR_SCALE = 0.056  # sd of the ensemble-center error
FORECAST_BIAS = -0.7  # center bias in units of the error sd
ENSEMBLE_SPREAD = 0.2  # member spread in units of the error sd

# daily clearness regimes: (probability, kt low, kt high, hourly jitter sd)
REGIMES = (
    (0.55, 0.68, 0.78, 0.02),
    (0.25, 0.40, 0.68, 0.07),
    (0.20, 0.10, 0.40, 0.08),
)

# perturbations of the "true" plant relative to the configured one
TRUE_PLANT_OVERRIDES = {
    "tilt_deg": 38.0,
    "azimuth_deg": 188.0,
    "albedo": 0.25,
    "gamma_pdc": -0.0045,
}
# plant efficiency: global level plus slope per local hour away from 13:00
# plus a seasonal soiling/degradation cycle over the day of year
EFFICIENCY_LEVEL = 0.92
EFFICIENCY_SLOPE = 0.0015
EFFICIENCY_SEASONAL = 0.05
PV_NOISE_SD = 0.015  # multiplicative production noise


def generate_benchmark(
    out_dir,
    seed: int = 0,
    start: str = "2017-07-30",
    end: str = "2020-12-31",
    site: dict | None = None,
    n_members: int = 50,
):
    """Write ensemble.csv, ghi_obs.csv, pv_obs.csv and config.json.

    The observation files use the raw-source stamp conventions (mid-hour
    for GHI, hour-start for PV) so ingestion exercises the stamp shifts.
    Returns the path of the written run configuration.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    site = dict(DEFAULT_SITE if site is None else site)
    plant = PlantSpec.from_dict(site)
    rng = np.random.default_rng(seed)

    # hour-end stamps covering [start, end] in full days
    times = pd.date_range(
        pd.Timestamp(start) + pd.Timedelta(hours=1),
        pd.Timestamp(end) + pd.Timedelta(days=1),
        freq="h",
    )
    n = len(times)
    mid = times - pd.Timedelta(minutes=30)
    solpos = solar_position(mid, plant)
    extra = solpos.extraterrestrial_ghi
    local_hours = (times + pd.Timedelta(hours=site["utc_offset"])).hour.to_numpy()

    # daily clearness regime -> hourly true clearness index
    days = (times - pd.Timedelta(hours=1)).normalize()
    day_codes, day_index = pd.factorize(days)
    n_days = len(day_index)
    probs = np.array([r[0] for r in REGIMES])
    regime = rng.choice(len(REGIMES), size=n_days, p=probs / probs.sum())
    kt_day = np.empty(n_days)
    jitter_sd = np.empty(n_days)
    for k, (_, lo, hi, jit) in enumerate(REGIMES):
        sel = regime == k
        kt_day[sel] = rng.uniform(lo, hi, size=sel.sum())
        jitter_sd[sel] = jit
    ar = np.empty(n)
    ar[0] = 0.0
    eps = rng.normal(0.0, 1.0, size=n)
    for i in range(1, n):
        ar[i] = 0.7 * ar[i - 1] + eps[i]
    kt_true = np.clip(kt_day[day_codes] + jitter_sd[day_codes] * ar * 0.7, 0.03, 0.82)
    ghi_true = kt_true * extra

    # ensemble center: autocorrelated error plus a consistent low bias
    err_scale = FORECAST_ERROR_SCALE * extra
    err_ar = np.empty(n)
    err_ar[0] = 0.0
    eps2 = rng.normal(0.0, 1.0, size=n)
    for i in range(1, n):
        err_ar[i] = 0.6 * err_ar[i - 1] + 0.8 * eps2[i]
    center = ghi_true + err_scale * (FORECAST_BIAS + err_ar)
    spread = ENSEMBLE_SPREAD * err_scale
    members = np.clip(
        center[:, None] + spread[:, None] * rng.normal(size=(n, n_members)), 0.0, None
    )
    members[extra <= 0.0] = 0.0

    # deterministic covariate forecasts and their (unobserved) true values
    doy = times.dayofyear.to_numpy()
    t2m_fc = (
        18.0
        + 10.0 * np.sin(2 * np.pi * (doy - 110) / 365.25)
        + 6.0 * np.sin(2 * np.pi * (local_hours - 9) / 24.0)
        + rng.normal(0.0, 1.5, size=n)
    )
    wind_fc = np.clip(rng.gamma(2.5, 1.4, size=n), 0.05, None)
    t2m_true = t2m_fc + rng.normal(0.0, 1.0, size=n)
    wind_true = np.clip(wind_fc * rng.lognormal(0.0, 0.15, size=n), 0.05, None)

    # PV production: perturbed plant + hour-dependent efficiency + noise
    true_plant = PlantSpec.from_dict({**site, **TRUE_PLANT_OVERRIDES})
    pv_clean = convert_ghi(times, ghi_true, t2m_true, wind_true, true_plant)
    efficiency = (
        EFFICIENCY_LEVEL
        + EFFICIENCY_SLOPE * (local_hours - 13.0)
        + EFFICIENCY_SEASONAL * np.sin(2 * np.pi * (doy - 60) / 365.25)
    )
    pv_true = pv_clean * efficiency * (1.0 + rng.normal(0.0, PV_NOISE_SD, size=n))
    pv_true = np.clip(pv_true, 0.0, site["capacity_mw"])
    pv_true[ghi_true <= 0.0] = 0.0

    ensemble = EnsembleSeries(
        variable="ghi",
        times=times,
        members=members,
        covariates={"t2m": t2m_fc, "wind10m": wind_fc},
    )
    # raw-source conventions: GHI mid-hour, PV hour-start
    ghi_obs = ObservationSeries("ghi", times - pd.Timedelta(minutes=30), ghi_true)
    pv_obs = ObservationSeries("pv_power", times - pd.Timedelta(minutes=60), pv_true)

    write_ensemble_csv(ensemble, out / "ensemble.csv")
    write_observation_csv(ghi_obs, out / "ghi_obs.csv")
    write_observation_csv(pv_obs, out / "pv_obs.csv")

    config = {
        "ensemble_csv": str(out / "ensemble.csv"),
        "ghi_obs_csv": str(out / "ghi_obs.csv"),
        "pv_obs_csv": str(out / "pv_obs.csv"),
        "ghi_obs_convention": "mid-hour",
        "pv_obs_convention": "hour-start",
        "site": site,
        "train_start": start,
        "train_end": "2019-12-31",
        "test_year": 2020,
        "master_seed": 20200101,
        "n_members": n_members,
    }
    config_path = out / "config.json"
    config_path.write_text(json.dumps(config, indent=2))
    return config_path
