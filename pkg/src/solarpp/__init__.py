"""Probabilistic solar power forecasting toolkit.

Converts ensemble irradiance forecasts to PV power through a physics model
chain, post-processes forecasts with EMOS or neural networks at the
irradiance and/or power stage, supports direct power forecasting, and
verifies everything with proper scoring rules and calibration diagnostics.
"""

from solarpp.distributions import CensoredNormal, crps_empirical
from solarpp.modelchain import PlantSpec, run_chain
from solarpp.emos import EmosRegressor
from solarpp.nn import DistributionalNetRegressor
from solarpp.evaluation import (
    score_distribution_forecasts,
    score_ensemble_forecasts,
    skill_summary,
)

__all__ = [
    "CensoredNormal",
    "crps_empirical",
    "PlantSpec",
    "run_chain",
    "EmosRegressor",
    "DistributionalNetRegressor",
    "score_distribution_forecasts",
    "score_ensemble_forecasts",
    "skill_summary",
]

__version__ = "0.1.0"
