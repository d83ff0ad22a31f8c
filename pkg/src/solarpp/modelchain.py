"""Physics model chain: GHI ensemble member -> PV power.

Five steps, applied independently to every ensemble member:

1. solar position (Michalsky-style almanac algorithm, ~arcminute accuracy)
2. separation of GHI into beam and diffuse (Erbs piecewise polynomial)
3. transposition to plane-of-array irradiance (Reindl anisotropic model)
4. cell temperature (Sandia open-rack glass/polymer constants)
5. PV performance (linear temperature-coefficient model, capacity clamp)

The chain is evaluated at the middle of the hourly averaging window, i.e.
30 minutes before the hour-end time stamp carried by all series.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

SOLAR_CONSTANT = 1361.1  # W m-2
MAX_ZENITH_FOR_DNI = 87.0  # deg; avoids division blow-up at sunrise/sunset


@dataclass(frozen=True)
class PlantSpec:
    """Site geometry and PV system parameters of one plant."""

    latitude: float
    longitude: float
    utc_offset: float
    capacity_mw: float
    tilt_deg: float
    azimuth_deg: float = 180.0  # south-facing
    albedo: float = 0.2
    gamma_pdc: float = -0.004  # 1/degC
    temp_a: float = -3.56  # Sandia open-rack glass/polymer
    temp_b: float = -0.075
    temp_delta_t: float = 3.0

    def __post_init__(self):
        if not 0.0 <= self.tilt_deg <= 90.0:
            raise ValueError("tilt must be in [0, 90] degrees")
        if not 0.0 <= self.albedo <= 1.0:
            raise ValueError("albedo must be in [0, 1]")
        if self.capacity_mw <= 0.0:
            raise ValueError("capacity must be positive")
        if self.gamma_pdc >= 0.0:
            raise ValueError("power temperature coefficient must be negative")

    @classmethod
    def from_dict(cls, cfg: dict) -> "PlantSpec":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in cfg.items() if k in known})


@dataclass(frozen=True)
class SolarPosition:
    """Apparent solar geometry plus extraterrestrial horizontal irradiance."""

    zenith: np.ndarray  # deg
    azimuth: np.ndarray  # deg, clockwise from north
    extraterrestrial_ghi: np.ndarray  # W m-2


def solar_position(times, plant: PlantSpec) -> SolarPosition:
    """Solar zenith/azimuth and extraterrestrial GHI at the given UTC instants.

    Implements the almanac algorithm of Michalsky (1988), accurate to about
    0.01 degrees for the covered epoch; atmospheric refraction is ignored
    (irrelevant at the zenith angles where power is produced).

    Parameters
    ----------
    times : DatetimeIndex or array of datetime64
        UTC instants, already shifted to mid-interval by the caller if the
        series is interval-averaged.
    """
    times = pd.DatetimeIndex(times)
    if times.tz is not None:
        times = times.tz_convert("UTC").tz_localize(None)
    # days since J2000.0 (2000-01-01 12:00 UT)
    n = (times - pd.Timestamp("2000-01-01 12:00:00")).total_seconds().to_numpy() / 86400.0
    hour_ut = (times.hour + times.minute / 60.0 + times.second / 3600.0).to_numpy()

    mean_long = np.mod(280.460 + 0.9856474 * n, 360.0)
    mean_anom = np.radians(np.mod(357.528 + 0.9856003 * n, 360.0))
    ecl_long = np.radians(
        np.mod(mean_long + 1.915 * np.sin(mean_anom) + 0.020 * np.sin(2 * mean_anom), 360.0)
    )
    obliquity = np.radians(23.439 - 4.0e-7 * n)

    ra = np.arctan2(np.cos(obliquity) * np.sin(ecl_long), np.cos(ecl_long))
    dec = np.arcsin(np.sin(obliquity) * np.sin(ecl_long))

    gmst = np.mod(6.697375 + 0.0657098242 * n + hour_ut, 24.0)
    lmst = np.mod(gmst + plant.longitude / 15.0, 24.0)
    ha = np.radians(lmst * 15.0) - ra
    ha = np.mod(ha + np.pi, 2 * np.pi) - np.pi

    lat = np.radians(plant.latitude)
    sin_el = np.sin(dec) * np.sin(lat) + np.cos(dec) * np.cos(lat) * np.cos(ha)
    sin_el = np.clip(sin_el, -1.0, 1.0)
    el = np.arcsin(sin_el)
    zenith = 90.0 - np.degrees(el)

    az = np.degrees(
        np.arctan2(-np.sin(ha) * np.cos(dec),
                   np.sin(dec) * np.cos(lat) - np.cos(dec) * np.sin(lat) * np.cos(ha))
    )
    azimuth = np.mod(az, 360.0)

    doy = times.dayofyear.to_numpy()
    b = 2.0 * np.pi * (doy - 1) / 365.0
    # Spencer (1971) Earth-Sun distance factor
    e0 = (
        1.00011
        + 0.034221 * np.cos(b)
        + 0.00128 * np.sin(b)
        + 0.000719 * np.cos(2 * b)
        + 0.000077 * np.sin(2 * b)
    )
    extra = SOLAR_CONSTANT * e0 * np.maximum(np.cos(np.radians(zenith)), 0.0)
    return SolarPosition(zenith=zenith, azimuth=azimuth, extraterrestrial_ghi=extra)


def erbs_separation(ghi, zenith, extraterrestrial):
    """Split GHI into (dni, dhi) with the Erbs diffuse-fraction polynomial.

    The clearness index is GHI over extraterrestrial horizontal irradiance;
    the diffuse fraction follows the three-branch Erbs fit. DNI is capped at
    the extraterrestrial beam irradiance and the zenith in the beam division
    is clamped at 87 degrees.
    """
    ghi = np.asarray(ghi, dtype=float)
    zenith = np.asarray(zenith, dtype=float)
    extraterrestrial = np.asarray(extraterrestrial, dtype=float)

    kt = ghi / np.maximum(extraterrestrial, 1e-9)
    df = np.where(
        kt <= 0.22,
        1.0 - 0.09 * kt,
        np.where(
            kt <= 0.80,
            0.9511 - 0.1604 * kt + 4.388 * kt**2 - 16.638 * kt**3 + 12.336 * kt**4,
            0.165,
        ),
    )
    dhi = np.clip(df * ghi, 0.0, None)
    cosz = np.maximum(
        np.cos(np.radians(zenith)), np.cos(np.radians(MAX_ZENITH_FOR_DNI))
    )
    dni = np.clip((ghi - dhi) / cosz, 0.0, None)
    # cap at the extraterrestrial beam value
    beam_extra = np.where(
        np.cos(np.radians(zenith)) > 0,
        extraterrestrial / np.maximum(np.cos(np.radians(zenith)), 1e-9),
        0.0,
    )
    dni = np.minimum(dni, beam_extra)
    dni = np.where(ghi <= 0.0, 0.0, dni)
    dhi = np.where(ghi <= 0.0, 0.0, dhi)
    return dni, dhi


def poa_transposition(ghi, dni, dhi, solpos: SolarPosition, plant: PlantSpec):
    """Plane-of-array global irradiance with the Reindl anisotropic sky model.

    poa = beam + anisotropic sky diffuse + isotropic ground reflection,
    all terms clamped non-negative.
    """
    ghi = np.asarray(ghi, dtype=float)
    dni = np.asarray(dni, dtype=float)
    dhi = np.asarray(dhi, dtype=float)

    tilt = np.radians(plant.tilt_deg)
    zen = np.radians(solpos.zenith)
    cos_aoi = (
        np.cos(zen) * np.cos(tilt)
        + np.sin(zen) * np.sin(tilt) * np.cos(np.radians(solpos.azimuth - plant.azimuth_deg))
    )
    cos_aoi = np.maximum(cos_aoi, 0.0)

    beam = dni * cos_aoi

    cosz = np.maximum(np.cos(zen), np.cos(np.radians(MAX_ZENITH_FOR_DNI)))
    rb = cos_aoi / cosz
    # anisotropy index: fraction of diffuse treated as circumsolar beam
    dni_extra = SOLAR_CONSTANT * np.ones_like(dni)
    ai = np.clip(dni / dni_extra, 0.0, 1.0)
    beam_horizontal = np.clip(dni * np.cos(zen), 0.0, None)
    with np.errstate(invalid="ignore", divide="ignore"):
        f = np.where(ghi > 0, np.sqrt(np.clip(beam_horizontal / np.maximum(ghi, 1e-9), 0.0, 1.0)), 0.0)
    horizon_brightening = 1.0 + f * np.sin(tilt / 2.0) ** 3
    sky = dhi * ((1.0 - ai) * 0.5 * (1.0 + np.cos(tilt)) * horizon_brightening + ai * rb)

    ground = ghi * plant.albedo * 0.5 * (1.0 - np.cos(tilt))
    return np.clip(beam + np.clip(sky, 0.0, None) + ground, 0.0, None)


def cell_temperature(poa, temp_air, wind, plant: PlantSpec):
    """Sandia module/cell temperature model."""
    poa = np.asarray(poa, dtype=float)
    t_module = poa * np.exp(plant.temp_a + plant.temp_b * np.asarray(wind, dtype=float))
    t_module = t_module + np.asarray(temp_air, dtype=float)
    return t_module + poa / 1000.0 * plant.temp_delta_t


def pv_power(poa, t_cell, plant: PlantSpec):
    """DC power in MW from POA irradiance with a linear temperature derate."""
    poa = np.asarray(poa, dtype=float)
    p = plant.capacity_mw * (poa / 1000.0) * (
        1.0 + plant.gamma_pdc * (np.asarray(t_cell, dtype=float) - 25.0)
    )
    return np.clip(p, 0.0, plant.capacity_mw)


def convert_ghi(times, ghi, temp_air, wind, plant: PlantSpec):
    """Run the full chain for GHI values stamped at hour-end.

    Parameters
    ----------
    times : DatetimeIndex, hour-end UTC stamps, shape (n,)
    ghi : array, shape (n,) or (n, m) for m ensemble members
    temp_air, wind : arrays of shape (n,)

    Returns
    -------
    array of PV power in MW, same shape as ``ghi``.
    """
    times = pd.DatetimeIndex(times)
    mid = times - pd.Timedelta(minutes=30)
    solpos = solar_position(mid, plant)

    ghi = np.asarray(ghi, dtype=float)
    member_axis = ghi.ndim == 2
    if member_axis:
        zen = solpos.zenith[:, None]
        extra = solpos.extraterrestrial_ghi[:, None]
        sp = SolarPosition(zen, solpos.azimuth[:, None], extra)
        temp_air = np.asarray(temp_air, dtype=float)[:, None]
        wind = np.asarray(wind, dtype=float)[:, None]
    else:
        sp = solpos
        zen, extra = solpos.zenith, solpos.extraterrestrial_ghi

    dni, dhi = erbs_separation(ghi, zen, extra)
    poa = poa_transposition(ghi, dni, dhi, sp, plant)
    t_cell = cell_temperature(poa, temp_air, wind, plant)
    power = pv_power(poa, t_cell, plant)
    # no irradiance (or sun below the horizon) produces exactly zero power
    night = np.broadcast_to(zen >= 90.0, power.shape)
    return np.where((ghi <= 0.0) | night, 0.0, power)


def run_chain(forecast, plant: PlantSpec):
    """Convert a GHI :class:`~solarpp.data.EnsembleSeries` to PV power.

    Requires ``t2m`` and ``wind10m`` covariates for every time step; the
    member count is preserved and members are converted independently.
    """
    from solarpp.data import EnsembleSeries, MissingCovariateError

    for name in ("t2m", "wind10m"):
        if name not in forecast.covariates:
            raise MissingCovariateError(name)
    power = convert_ghi(
        forecast.times,
        forecast.members,
        forecast.covariates["t2m"],
        forecast.covariates["wind10m"],
        plant,
    )
    return EnsembleSeries(
        variable="pv_power",
        times=forecast.times,
        members=power,
        covariates=dict(forecast.covariates),
    )
