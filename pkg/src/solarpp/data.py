"""Loading, validation, time alignment and splitting of forecast data.

All series are stamped at the END of the hourly averaging window in UTC.
Raw sources that use other conventions (mid-hour satellite irradiance,
hour-start PV production) are shifted forward on ingestion. Containers are
immutable after construction and safe to read concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd


class DataError(Exception):
    """Base class for ingestion and alignment failures."""


class MissingColumnError(DataError):
    def __init__(self, column):
        super().__init__(f"required column missing: {column}")
        self.column = column


class NonNumericCellError(DataError):
    def __init__(self, row, column):
        super().__init__(f"non-numeric value at row {row}, column {column}")
        self.row = row
        self.column = column


class DuplicateTimeError(DataError):
    def __init__(self, stamp):
        super().__init__(f"duplicate time stamp: {stamp}")
        self.stamp = stamp


class NegativeGhiError(DataError):
    def __init__(self, stamp):
        super().__init__(f"negative GHI member at {stamp}")
        self.stamp = stamp


class UnknownConventionError(DataError):
    def __init__(self, convention):
        super().__init__(f"unknown time stamp convention: {convention!r}")


class EmptySplitError(DataError):
    def __init__(self, side):
        super().__init__(f"{side} split contains zero rows")
        self.side = side


class MissingCovariateError(DataError):
    def __init__(self, name):
        super().__init__(f"covariate missing from ensemble series: {name}")
        self.name = name


def local_hour(times, utc_offset: float) -> np.ndarray:
    """Integer local hour 0-23 from UTC stamps and a fixed site offset.

    No daylight-saving logic: solar geometry follows solar time, not civil
    DST, and the hourly models are keyed on this fixed-offset hour.
    """
    times = pd.DatetimeIndex(times)
    shifted = times + pd.Timedelta(hours=utc_offset)
    return shifted.hour.to_numpy()


@dataclass(frozen=True)
class EnsembleSeries:
    """Time-indexed m-member forecast of one variable plus covariates."""

    variable: str
    times: pd.DatetimeIndex
    members: np.ndarray  # (n, m)
    covariates: dict = field(default_factory=dict)

    def __post_init__(self):
        times = pd.DatetimeIndex(self.times)
        members = np.asarray(self.members, dtype=float)
        if members.ndim != 2 or len(times) != members.shape[0]:
            raise ValueError("members must be (n_times, n_members)")
        if times.has_duplicates:
            raise DuplicateTimeError(times[times.duplicated()][0])
        if not times.is_monotonic_increasing:
            order = np.argsort(times.values)
            times = times[order]
            members = members[order]
            object.__setattr__(
                self,
                "covariates",
                {k: np.asarray(v, dtype=float)[order] for k, v in self.covariates.items()},
            )
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "members", members)

    @property
    def n_members(self) -> int:
        return self.members.shape[1]

    def select(self, mask) -> "EnsembleSeries":
        return EnsembleSeries(
            variable=self.variable,
            times=self.times[mask],
            members=self.members[mask],
            covariates={k: np.asarray(v)[mask] for k, v in self.covariates.items()},
        )


@dataclass(frozen=True)
class ObservationSeries:
    """Time-indexed scalar observations of one variable."""

    variable: str
    times: pd.DatetimeIndex
    values: np.ndarray

    def __post_init__(self):
        times = pd.DatetimeIndex(self.times)
        values = np.asarray(self.values, dtype=float)
        if len(times) != len(values):
            raise ValueError("times and values must have equal length")
        if times.has_duplicates:
            raise DuplicateTimeError(times[times.duplicated()][0])
        if not times.is_monotonic_increasing:
            order = np.argsort(times.values)
            times, values = times[order], values[order]
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def select(self, mask) -> "ObservationSeries":
        return ObservationSeries(self.variable, self.times[mask], self.values[mask])


@dataclass(frozen=True)
class Dataset:
    """Jointly indexed GHI forecast, GHI observation and PV observation."""

    ghi_forecast: EnsembleSeries
    ghi_obs: ObservationSeries
    pv_obs: ObservationSeries

    def __len__(self):
        return len(self.ghi_forecast.times)

    @property
    def times(self) -> pd.DatetimeIndex:
        return self.ghi_forecast.times


def _parse_times(raw: pd.Series) -> pd.DatetimeIndex:
    times = pd.DatetimeIndex(pd.to_datetime(raw, utc=True, format="ISO8601"))
    return times.tz_localize(None)


def load_ensemble_csv(path, n_members: int = 50, variable: str = "ghi") -> EnsembleSeries:
    """Parse `time,member_01..member_m,covariate...` CSV into an EnsembleSeries.

    Raises MissingColumnError, NonNumericCellError, DuplicateTimeError or
    NegativeGhiError on malformed input; row order is normalized to
    ascending time.
    """
    df = pd.read_csv(path, dtype=str)
    if "time" not in df.columns:
        raise MissingColumnError("time")
    member_cols = [f"member_{i:02d}" for i in range(1, n_members + 1)]
    for col in member_cols:
        if col not in df.columns:
            raise MissingColumnError(col)
    covariate_cols = [c for c in df.columns if c not in member_cols and c != "time"]

    numeric = {}
    for col in member_cols + covariate_cols:
        converted = pd.to_numeric(df[col], errors="coerce")
        bad = converted.isna() & df[col].notna()
        if bad.any():
            raise NonNumericCellError(int(np.flatnonzero(bad)[0]), col)
        numeric[col] = converted.to_numpy()

    times = _parse_times(df["time"])
    members = np.column_stack([numeric[c] for c in member_cols])
    if variable == "ghi" and np.nanmin(members) < 0:
        bad_row = int(np.argwhere(members < 0)[0][0])
        raise NegativeGhiError(times[bad_row])
    return EnsembleSeries(
        variable=variable,
        times=times,
        members=members,
        covariates={c: numeric[c] for c in covariate_cols},
    )


def write_ensemble_csv(series: EnsembleSeries, path) -> None:
    cols = {"time": series.times.strftime("%Y-%m-%dT%H:%M:%SZ")}
    for i in range(series.n_members):
        cols[f"member_{i + 1:02d}"] = series.members[:, i]
    for name, values in series.covariates.items():
        cols[name] = values
    pd.DataFrame(cols).to_csv(path, index=False)


def load_observation_csv(path, variable: str) -> ObservationSeries:
    """Parse a `time,value` CSV into an ObservationSeries."""
    df = pd.read_csv(path, dtype=str)
    for col in ("time", "value"):
        if col not in df.columns:
            raise MissingColumnError(col)
    converted = pd.to_numeric(df["value"], errors="coerce")
    bad = converted.isna() & df["value"].notna()
    if bad.any():
        raise NonNumericCellError(int(np.flatnonzero(bad)[0]), "value")
    return ObservationSeries(variable, _parse_times(df["time"]), converted.to_numpy())


def write_observation_csv(series: ObservationSeries, path) -> None:
    pd.DataFrame(
        {"time": series.times.strftime("%Y-%m-%dT%H:%M:%SZ"), "value": series.values}
    ).to_csv(path, index=False)


def shift_stamp_to_hour_end(series: ObservationSeries, original_convention: str) -> ObservationSeries:
    """Move stamps forward so they mark the end of the averaging window.

    `mid-hour` sources shift by +30 minutes, `hour-start` sources by +60,
    `hour-end` sources stay put. This is a pure shift: applying it to an
    already-shifted series shifts again, so call it exactly once per raw
    source.
    """
    shifts = {"mid-hour": 30, "hour-start": 60, "hour-end": 0}
    if original_convention not in shifts:
        raise UnknownConventionError(original_convention)
    delta = pd.Timedelta(minutes=shifts[original_convention])
    return ObservationSeries(series.variable, series.times + delta, series.values)


def join_series(
    forecast: EnsembleSeries, ghi_obs: ObservationSeries, pv_obs: ObservationSeries
) -> tuple[Dataset, int]:
    """Inner-join the three series on time; drop (and count) partial rows.

    Rows containing NaN in any member, covariate or observation are dropped
    as well; no imputation is attempted.
    """
    common = forecast.times.intersection(ghi_obs.times).intersection(pv_obs.times)
    n_union = len(forecast.times.union(ghi_obs.times).union(pv_obs.times))

    fc = forecast.select(forecast.times.isin(common))
    go = ghi_obs.select(ghi_obs.times.isin(common))
    po = pv_obs.select(pv_obs.times.isin(common))

    finite = np.isfinite(fc.members).all(axis=1) & np.isfinite(go.values) & np.isfinite(po.values)
    for values in fc.covariates.values():
        finite &= np.isfinite(values)
    dropped = n_union - int(finite.sum())
    return Dataset(fc.select(finite), go.select(finite), po.select(finite)), dropped


def join_and_split(
    ds: Dataset, train_start, train_end, test_year: int
) -> tuple[Dataset, Dataset]:
    """Split a joined dataset into a training period and a test year."""
    train_start = pd.Timestamp(train_start)
    train_end = pd.Timestamp(train_end)
    if train_end >= pd.Timestamp(f"{test_year}-01-01"):
        raise ValueError("training period must end before the test year")
    times = ds.times
    # stamps mark the end of the averaging window, so the stamp at midnight
    # after train_end still describes an hour inside the training period
    train_mask = (times > train_start) & (
        times <= train_end + pd.Timedelta(days=1)
    )
    test_mask = (times > pd.Timestamp(f"{test_year}-01-01")) & (
        times <= pd.Timestamp(f"{test_year + 1}-01-01")
    )
    if not train_mask.any():
        raise EmptySplitError("train")
    if not test_mask.any():
        raise EmptySplitError("test")
    train = Dataset(
        ds.ghi_forecast.select(train_mask), ds.ghi_obs.select(train_mask), ds.pv_obs.select(train_mask)
    )
    test = Dataset(
        ds.ghi_forecast.select(test_mask), ds.ghi_obs.select(test_mask), ds.pv_obs.select(test_mask)
    )
    return train, test
