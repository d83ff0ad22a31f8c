import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from solarpp.data import EnsembleSeries, MissingCovariateError
from solarpp.modelchain import (
    PlantSpec,
    cell_temperature,
    convert_ghi,
    erbs_separation,
    poa_transposition,
    pv_power,
    run_chain,
    solar_position,
)

PLANT = PlantSpec(
    latitude=32.62,
    longitude=-116.13,
    utc_offset=-8,
    capacity_mw=20.0,
    tilt_deg=32.62,
)


class TestPlantSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            PlantSpec(32.0, -116.0, -8, 20.0, tilt_deg=95.0)
        with pytest.raises(ValueError):
            PlantSpec(32.0, -116.0, -8, 20.0, tilt_deg=30.0, albedo=1.2)
        with pytest.raises(ValueError):
            PlantSpec(32.0, -116.0, -8, -1.0, tilt_deg=30.0)
        with pytest.raises(ValueError):
            PlantSpec(32.0, -116.0, -8, 20.0, tilt_deg=30.0, gamma_pdc=0.001)

    def test_from_dict_ignores_unknown_keys(self):
        plant = PlantSpec.from_dict(
            {"latitude": 10.0, "longitude": 0.0, "utc_offset": 0,
             "capacity_mw": 5.0, "tilt_deg": 10.0, "comment": "ignored"}
        )
        assert plant.capacity_mw == 5.0


class TestSolarPosition:
    def test_equinox_noon_at_equator(self):
        # At the March 2020 equinox (2020-03-20 03:50 UTC) the subsolar point
        # crosses the equator; a site on the equator at the right longitude
        # sees the sun almost exactly overhead at local solar noon.
        plant = PlantSpec(0.0, 0.0, 0, 1.0, tilt_deg=0.0)
        times = pd.DatetimeIndex(["2020-03-20 12:07:00"])  # solar noon at 0 deg lon
        pos = solar_position(times, plant)
        assert pos.zenith[0] < 0.6

    def test_solstice_transit_zenith(self):
        # At the summer-solstice transit the zenith equals latitude minus the
        # solar declination (23.43 deg in June 2020). Scan around local noon
        # for the minimum zenith and check both its value and the southward
        # azimuth at that instant.
        times = pd.date_range("2020-06-21 19:00", "2020-06-21 21:00", freq="1min")
        pos = solar_position(times, PLANT)
        i = int(np.argmin(pos.zenith))
        assert pos.zenith[i] == pytest.approx(32.62 - 23.43, abs=0.1)
        assert pos.azimuth[i] == pytest.approx(180.0, abs=3.0)
        # transit occurs near mean solar noon for lon -116.13 (19:45 UTC)
        assert abs((times[i] - pd.Timestamp("2020-06-21 19:45")).total_seconds()) < 600

    def test_midnight_sun_below_horizon(self):
        times = pd.DatetimeIndex(["2020-06-21 08:00:00"])  # local midnight
        pos = solar_position(times, PLANT)
        assert pos.zenith[0] > 90.0
        assert pos.extraterrestrial_ghi[0] == 0.0

    def test_extraterrestrial_seasonal_modulation(self):
        # Earth is closest to the sun in early January
        plant = PlantSpec(0.0, 0.0, 0, 1.0, tilt_deg=0.0)
        jan = solar_position(pd.DatetimeIndex(["2020-01-03 12:00:00"]), plant)
        jul = solar_position(pd.DatetimeIndex(["2020-07-04 12:00:00"]), plant)
        ratio = (jan.extraterrestrial_ghi[0] / np.cos(np.radians(jan.zenith[0]))) / (
            jul.extraterrestrial_ghi[0] / np.cos(np.radians(jul.zenith[0]))
        )
        assert ratio == pytest.approx(1.069, abs=0.005)

    def test_azimuth_range(self):
        times = pd.date_range("2020-01-01", periods=200, freq="7h")
        pos = solar_position(times, PLANT)
        assert np.all((pos.azimuth >= 0) & (pos.azimuth < 360))
        assert np.all((pos.zenith >= 0) & (pos.zenith <= 180))


class TestErbs:
    def test_low_clearness_branch(self):
        dni, dhi = erbs_separation(50.0, 60.0, 1000.0)
        kt = 0.05
        assert dhi == pytest.approx(50.0 * (1 - 0.09 * kt))

    def test_mid_clearness_hand_value(self):
        # kt = 0.5: df = 0.9511 - 0.0802 + 1.097 - 2.07975 + 0.771 = 0.65855
        ghi, extra = 500.0, 1000.0
        dni, dhi = erbs_separation(ghi, 0.0, extra)
        df = 0.9511 - 0.1604 * 0.5 + 4.388 * 0.25 - 16.638 * 0.125 + 12.336 * 0.0625
        assert dhi == pytest.approx(ghi * df, rel=1e-12)
        assert dni == pytest.approx(ghi - dhi, rel=1e-12)  # cos(0) = 1

    def test_high_clearness_branch(self):
        _, dhi = erbs_separation(900.0, 0.0, 1000.0)
        assert dhi == pytest.approx(900.0 * 0.165)

    def test_zero_irradiance(self):
        dni, dhi = erbs_separation(0.0, 30.0, 800.0)
        assert dni == 0.0 and dhi == 0.0

    def test_zenith_clamp_prevents_blowup(self):
        dni, _ = erbs_separation(100.0, 89.9, 120.0)
        # division uses cos(87 deg) instead of cos(89.9 deg)
        assert np.isfinite(dni)
        assert dni <= 100.0 / np.cos(np.radians(87.0)) + 1e-9

    def test_closure_beam_plus_diffuse(self):
        rng = np.random.default_rng(0)
        zen = rng.uniform(0, 80, size=200)
        extra = 1361.1 * np.cos(np.radians(zen))
        ghi = rng.uniform(0, 1) * extra
        dni, dhi = erbs_separation(ghi, zen, extra)
        recon = dni * np.cos(np.radians(zen)) + dhi
        # closure holds except where the extraterrestrial-beam cap binds
        assert np.all(recon <= ghi + 1e-6)
        uncapped = dni < extra / np.cos(np.radians(zen)) - 1e-6
        np.testing.assert_allclose(recon[uncapped], ghi[uncapped], rtol=1e-9)

    @given(kt=st.floats(0.0, 1.0), zen=st.floats(0.0, 85.0))
    @settings(max_examples=200, deadline=None)
    def test_diffuse_fraction_bounds(self, kt, zen):
        extra = 1361.1 * np.cos(np.radians(zen))
        ghi = kt * extra
        dni, dhi = erbs_separation(ghi, zen, extra)
        assert 0.0 <= dhi <= ghi + 1e-9
        assert dni >= 0.0


class TestTransposition:
    def test_horizontal_panel_recovers_ghi_isotropically(self):
        # tilt = 0: beam_poa = dni*cos(z), sky view = 1, no ground term
        plant = PlantSpec(32.62, -116.13, -8, 20.0, tilt_deg=0.0)
        times = pd.DatetimeIndex(["2020-06-21 20:00:00"])
        pos = solar_position(times, plant)
        ghi = np.array([800.0])
        dni, dhi = erbs_separation(ghi, pos.zenith, pos.extraterrestrial_ghi)
        poa = poa_transposition(ghi, dni, dhi, pos, plant)
        # horizon-brightening term vanishes at tilt 0, so poa == closure sum
        assert poa[0] == pytest.approx(dni[0] * np.cos(np.radians(pos.zenith[0])) + dhi[0], rel=1e-9)

    def test_pure_isotropic_diffuse_hand_value(self):
        pos_zenith = np.array([30.0])
        pos = type(
            "P", (), {"zenith": pos_zenith, "azimuth": np.array([180.0]),
                      "extraterrestrial_ghi": np.array([1000.0])}
        )
        plant = PlantSpec(32.0, -116.0, -8, 20.0, tilt_deg=40.0, albedo=0.0)
        ghi = np.array([100.0])
        dhi = np.array([100.0])  # all diffuse, dni = 0
        poa = poa_transposition(ghi, np.array([0.0]), dhi, pos, plant)
        assert poa[0] == pytest.approx(100.0 * 0.5 * (1 + np.cos(np.radians(40.0))), rel=1e-12)

    def test_ground_reflection_hand_value(self):
        pos = type(
            "P", (), {"zenith": np.array([0.0]), "azimuth": np.array([180.0]),
                      "extraterrestrial_ghi": np.array([1361.1])}
        )
        plant = PlantSpec(32.0, -116.0, -8, 20.0, tilt_deg=90.0, albedo=0.5)
        # sun at zenith, vertical panel: cos_aoi = 0 so no beam; sky term from dhi
        ghi = np.array([1000.0])
        poa = poa_transposition(ghi, np.array([0.0]), np.array([0.0]), pos, plant)
        assert poa[0] == pytest.approx(1000.0 * 0.5 * 0.5 * (1 - np.cos(np.radians(90.0))))

    def test_tilted_collects_more_at_low_sun(self):
        times = pd.DatetimeIndex(["2020-12-21 20:00:00"])  # winter noon
        pos = solar_position(times, PLANT)
        ghi = np.array([500.0])
        dni, dhi = erbs_separation(ghi, pos.zenith, pos.extraterrestrial_ghi)
        flat = PlantSpec(32.62, -116.13, -8, 20.0, tilt_deg=0.0)
        poa_tilt = poa_transposition(ghi, dni, dhi, pos, PLANT)
        poa_flat = poa_transposition(ghi, dni, dhi, pos, flat)
        assert poa_tilt[0] > poa_flat[0]

    def test_nonnegative(self):
        rng = np.random.default_rng(1)
        times = pd.date_range("2020-06-01", periods=500, freq="1h")
        pos = solar_position(times, PLANT)
        ghi = rng.uniform(0, 1000, size=500)
        dni, dhi = erbs_separation(ghi, pos.zenith, pos.extraterrestrial_ghi)
        poa = poa_transposition(ghi, dni, dhi, pos, PLANT)
        assert np.all(poa >= 0)


class TestCellTemperature:
    def test_zero_poa_equals_air(self):
        assert cell_temperature(0.0, 17.5, 3.0, PLANT) == pytest.approx(17.5)

    def test_spec_hand_value(self):
        # poa=1000, T=20, wind=1: 20 + 1000*exp(-3.635) + 3 = 49.4
        t = cell_temperature(1000.0, 20.0, 1.0, PLANT)
        assert t == pytest.approx(20.0 + 1000.0 * np.exp(-3.56 - 0.075) + 3.0, rel=1e-12)
        assert t == pytest.approx(49.4, abs=0.1)

    def test_high_wind_limit(self):
        t = cell_temperature(1000.0, 20.0, 200.0, PLANT)
        assert t == pytest.approx(20.0 + 1000.0 / 1000.0 * 3.0, abs=0.01)

    def test_monotone_decreasing_in_wind(self):
        winds = np.linspace(0, 15, 50)
        temps = cell_temperature(800.0, 25.0, winds, PLANT)
        assert np.all(np.diff(temps) < 0)


class TestPvPower:
    def test_zero_poa(self):
        assert pv_power(0.0, 25.0, PLANT) == 0.0

    def test_reference_conditions_clamp(self):
        assert pv_power(1000.0, 25.0, PLANT) == PLANT.capacity_mw

    def test_spec_hand_value(self):
        assert pv_power(600.0, 45.0, PLANT) == pytest.approx(20.0 * 0.6 * 0.92, rel=1e-12)

    def test_hot_cell_derates(self):
        assert pv_power(800.0, 60.0, PLANT) < pv_power(800.0, 25.0, PLANT)

    def test_never_exceeds_capacity(self):
        assert pv_power(1400.0, 0.0, PLANT) == PLANT.capacity_mw


def _forecast_series(n=48, m=5, seed=0):
    rng = np.random.default_rng(seed)
    times = pd.date_range("2020-06-01 01:00", periods=n, freq="1h")
    pos = solar_position(times - pd.Timedelta(minutes=30), PLANT)
    clear = np.clip(0.75 * pos.extraterrestrial_ghi, 0.0, None)
    members = np.clip(clear[:, None] * (1 + rng.normal(0, 0.1, size=(n, m))), 0.0, None)
    return EnsembleSeries(
        variable="ghi",
        times=times,
        members=members,
        covariates={
            "t2m": rng.uniform(10, 30, size=n),
            "wind10m": rng.uniform(0, 8, size=n),
        },
    )


class TestConvertGhi:
    def test_night_is_exactly_zero(self):
        fc = _forecast_series()
        power = convert_ghi(fc.times, fc.members, fc.covariates["t2m"],
                            fc.covariates["wind10m"], PLANT)
        pos = solar_position(fc.times - pd.Timedelta(minutes=30), PLANT)
        night = pos.zenith >= 90.0
        assert night.any()
        assert np.all(power[night] == 0.0)

    def test_monotone_in_ghi(self):
        # more irradiance never yields less power, all else equal
        times = pd.DatetimeIndex(["2020-06-21 20:00:00"])
        levels = np.linspace(0, 1100, 60)
        powers = [
            convert_ghi(times, np.array([g]), np.array([20.0]), np.array([3.0]), PLANT)[0]
            for g in levels
        ]
        assert np.all(np.diff(powers) >= -1e-9)

    def test_vector_matches_scalar_path(self):
        fc = _forecast_series(n=24, m=3)
        full = convert_ghi(fc.times, fc.members, fc.covariates["t2m"],
                           fc.covariates["wind10m"], PLANT)
        for j in range(3):
            col = convert_ghi(fc.times, fc.members[:, j], fc.covariates["t2m"],
                              fc.covariates["wind10m"], PLANT)
            np.testing.assert_allclose(full[:, j], col, rtol=1e-12)


class TestRunChain:
    def test_member_count_preserved(self):
        fc = _forecast_series(m=7)
        out = run_chain(fc, PLANT)
        assert out.members.shape == fc.members.shape
        assert out.variable == "pv_power"
        assert np.all(out.members >= 0.0)
        assert np.all(out.members <= PLANT.capacity_mw)

    def test_missing_covariate(self):
        fc = _forecast_series()
        broken = EnsembleSeries(
            variable="ghi", times=fc.times, members=fc.members,
            covariates={"t2m": fc.covariates["t2m"]},
        )
        with pytest.raises(MissingCovariateError):
            run_chain(broken, PLANT)

    def test_midday_summer_output_plausible(self):
        fc = _forecast_series()
        out = run_chain(fc, PLANT)
        assert out.members.max() > 0.5 * PLANT.capacity_mw
