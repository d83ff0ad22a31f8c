"""Verification of probabilistic forecasts.

Produces mean CRPS, MAE of the forecast median, bias of the forecast mean,
central prediction interval coverage/width at the ensemble-equivalent
nominal level, randomized PIT or verification-rank histograms, and hourly
breakdowns. Aggregates run over all 24 hours; coverage and width are
additionally reported for daylight hours (6:00-20:00 local).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from solarpp.distributions import CensoredNormal, crps_empirical

DAYTIME_HOURS = (6, 20)  # inclusive local-hour range for daytime aggregates
PIT_BINS = 20


class IndexMismatchError(ValueError):
    pass


class ZeroReferenceError(ZeroDivisionError):
    pass


@dataclass
class EvaluationReport:
    """Scores per row plus aggregate / per-hour / daytime summaries."""

    rows: pd.DataFrame
    nominal: float
    seed: int
    histogram: np.ndarray
    histogram_kind: str  # "pit" or "rank"

    @property
    def aggregate(self) -> dict:
        return self._summary(self.rows)

    @property
    def daytime(self) -> dict:
        lo, hi = DAYTIME_HOURS
        mask = (self.rows["local_hour"] >= lo) & (self.rows["local_hour"] <= hi)
        return self._summary(self.rows[mask])

    @property
    def per_hour(self) -> pd.DataFrame:
        grouped = self.rows.groupby("local_hour")
        out = grouped.agg(
            crps=("crps", "mean"),
            mae=("abs_err_median", "mean"),
            bias=("signed_err_mean", "mean"),
            coverage=("covered", lambda c: 100.0 * c.mean()),
            width=("pi_width", "mean"),
            n=("crps", "size"),
        )
        return out

    @staticmethod
    def _summary(rows: pd.DataFrame) -> dict:
        return {
            "crps": float(rows["crps"].mean()),
            "mae": float(rows["abs_err_median"].mean()),
            "bias": float(rows["signed_err_mean"].mean()),
            "coverage": float(100.0 * rows["covered"].mean()),
            "width": float(rows["pi_width"].mean()),
            "n": int(len(rows)),
        }

    def to_json(self) -> str:
        return json.dumps(
            {
                "nominal": self.nominal,
                "seed": self.seed,
                "aggregate": self.aggregate,
                "daytime": self.daytime,
                "per_hour": {
                    str(h): {k: float(v) for k, v in row.items()}
                    for h, row in self.per_hour.iterrows()
                },
                "histogram_kind": self.histogram_kind,
                "histogram": self.histogram.tolist(),
            },
            indent=2,
        )

    def write(self, directory) -> None:
        """Emit report.json plus per-hour and histogram CSVs."""
        from pathlib import Path

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "report.json").write_text(self.to_json())
        self.per_hour.to_csv(directory / "per_hour.csv")
        pd.DataFrame(
            {"bin": np.arange(1, len(self.histogram) + 1), "count": self.histogram}
        ).to_csv(directory / "histogram.csv", index=False)


def _base_rows(times, local_hours, y, crps, median, mean, pi_lower, pi_upper):
    covered = (pi_lower <= y) & (y <= pi_upper)
    return pd.DataFrame(
        {
            "time": times,
            "local_hour": local_hours,
            "crps": crps,
            "abs_err_median": np.abs(median - y),
            "signed_err_mean": mean - y,  # positive = overforecast
            "pi_lower": pi_lower,
            "pi_upper": pi_upper,
            "pi_width": pi_upper - pi_lower,
            "covered": covered,
        }
    )


def score_distribution_forecasts(
    forecasts: CensoredNormal,
    y,
    times,
    local_hours,
    nominal: float = 49.0 / 51.0,
    seed: int = 0,
) -> EvaluationReport:
    """Score a series of parametric forecasts against observations.

    CRPS uses the closed form, MAE the distribution median, bias the
    distribution mean; the PIT is randomized at CDF jumps with a generator
    seeded by ``seed`` (recorded in the report).
    """
    y = np.asarray(y, dtype=float)
    if len(np.atleast_1d(forecasts.mu)) != len(y):
        raise IndexMismatchError("forecast and observation lengths differ")
    rng = np.random.default_rng(seed)
    crps = forecasts.crps(y)
    median = forecasts.median()
    mean = forecasts.mean()
    alpha = (1.0 - nominal) / 2.0
    pi_lower = forecasts.quantile(alpha)
    pi_upper = forecasts.quantile(1.0 - alpha)
    pit = forecasts.randomized_pit(y, rng.uniform(size=len(y)))

    rows = _base_rows(times, local_hours, y, crps, median, mean, pi_lower, pi_upper)
    rows["pit"] = pit
    hist = np.histogram(pit, bins=PIT_BINS, range=(0.0, 1.0))[0]
    return EvaluationReport(rows, nominal, seed, hist, "pit")


def score_ensemble_forecasts(members, y, times, local_hours, seed: int = 0) -> EvaluationReport:
    """Score raw ensemble forecasts.

    The prediction interval is the ensemble [min, max] range, whose nominal
    level for m members is (m-1)/(m+1); the verification rank of the
    observation breaks ties uniformly at random with a seeded generator.
    """
    members = np.asarray(members, dtype=float)
    y = np.asarray(y, dtype=float)
    if members.shape[0] != len(y):
        raise IndexMismatchError("forecast and observation lengths differ")
    m = members.shape[1]
    rng = np.random.default_rng(seed)

    crps = crps_empirical(members, y)
    median = np.median(members, axis=1)
    mean = members.mean(axis=1)
    pi_lower = members.min(axis=1)
    pi_upper = members.max(axis=1)

    below = (members < y[:, None]).sum(axis=1)
    ties = (members == y[:, None]).sum(axis=1)
    rank = 1 + below + rng.integers(0, ties + 1)

    rows = _base_rows(times, local_hours, y, crps, median, mean, pi_lower, pi_upper)
    rows["rank"] = rank
    hist = np.bincount(rank, minlength=m + 2)[1:]
    return EvaluationReport(rows, (m - 1.0) / (m + 1.0), seed, hist, "rank")


def hourly_breakdown(report: EvaluationReport) -> pd.DataFrame:
    """Per-local-hour score means; hours without rows are absent."""
    return report.per_hour


def skill_summary(candidate: EvaluationReport, reference: EvaluationReport) -> float:
    """Relative mean-CRPS improvement of candidate over reference, percent."""
    ref = reference.aggregate["crps"]
    if ref == 0.0:
        raise ZeroReferenceError("reference mean CRPS is zero")
    return 100.0 * (1.0 - candidate.aggregate["crps"] / ref)
