"""EMOS: censored normal distributional regression on ensemble statistics.

The forecast distribution is a censored normal whose location is affine in
the ensemble mean and whose variance is affine in the ensemble variance:

    mu = a + b * mean(x)        sigma^2 = c + d * var(x)

with c, d kept positive by optimizing their square roots. Coefficients are
estimated by minimizing the mean closed-form CRPS over a training set with
a quasi-Newton optimizer on the analytic gradients (Nelder-Mead fallback),
either globally or with one independent fit per hour of the day.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_X_y

from solarpp.distributions import SIGMA_FLOOR, CensoredNormal

#: floor for the variance-link input; keeps night fits (zero spread) smooth
VARIANCE_FLOOR = 1e-6


class InsufficientHourDataError(ValueError):
    def __init__(self, hour, count, required):
        super().__init__(
            f"hour {hour:02d} has {count} training rows, needs {required}"
        )
        self.hour = hour


class UnfittedModelError(RuntimeError):
    pass


@dataclass(frozen=True)
class EmosCoefficients:
    """Fitted link parameters (a, b, c, d) for one censored normal family."""

    a: float
    b: float
    c: float
    d: float

    def location(self, ens_mean):
        return self.a + self.b * np.asarray(ens_mean, dtype=float)

    def scale(self, ens_var):
        var = np.maximum(np.asarray(ens_var, dtype=float), VARIANCE_FLOOR)
        return np.sqrt(np.maximum(self.c + self.d * var, SIGMA_FLOOR**2))


def _mean_crps_and_grad(theta, ens_mean, ens_var, y, lower, upper):
    """Objective mean CRPS and gradient in (a, b, sqrt(c), sqrt(d))."""
    a, b, g, h = theta
    var = np.maximum(ens_var, VARIANCE_FLOOR)
    mu = a + b * ens_mean
    s2 = g * g + h * h * var
    sigma = np.sqrt(np.maximum(s2, SIGMA_FLOOR**2))
    dist = CensoredNormal(mu, sigma, lower, upper)
    crps = dist.crps(y)
    dmu, dsig = dist.crps_gradient(y)
    # d sigma / d s2 = 1/(2 sigma); zero below the floor
    dsig_ds2 = np.where(s2 > SIGMA_FLOOR**2, 0.5 / sigma, 0.0)
    grad = np.array(
        [
            dmu.mean(),
            (dmu * ens_mean).mean(),
            (dsig * dsig_ds2 * 2.0 * g).mean(),
            (dsig * dsig_ds2 * 2.0 * h * var).mean(),
        ]
    )
    return crps.mean(), grad


def fit_emos(
    ens_mean,
    ens_var,
    y,
    lower=0.0,
    upper=np.inf,
    init=(0.0, 1.0, 1.0, 1.0),
    seed=0,
    max_iter=1000,
    tol=1e-8,
):
    """Minimum-CRPS estimation of EMOS coefficients.

    Runs a quasi-Newton minimization from ``init`` plus one seeded random
    restart and keeps the parameter set with the best mean training CRPS;
    the identity start is always a candidate, so the result can never be
    worse than the raw-ensemble-trusting coefficients. Deterministic for a
    fixed seed.

    Returns
    -------
    (EmosCoefficients, mean_train_crps, degenerate_flag)
    """
    ens_mean = np.asarray(ens_mean, dtype=float)
    ens_var = np.asarray(ens_var, dtype=float)
    y = np.asarray(y, dtype=float)

    degenerate = bool(
        np.ptp(y) == 0.0 and np.ptp(ens_mean) == 0.0 and np.ptp(ens_var) == 0.0
    )

    a0, b0, c0, d0 = init
    x0 = np.array([a0, b0, np.sqrt(max(c0, 0.0)), np.sqrt(max(d0, 0.0))])
    rng = np.random.default_rng(seed)
    starts = [x0, x0 + rng.normal(0.0, 0.5, size=4)]

    args = (ens_mean, ens_var, y, lower, upper)
    candidates = [(x0, _mean_crps_and_grad(x0, *args)[0])]
    for start in starts:
        res = minimize(
            _mean_crps_and_grad,
            start,
            args=args,
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": max_iter, "ftol": tol},
        )
        theta = res.x
        if not np.all(np.isfinite(theta)):
            res = minimize(
                lambda t: _mean_crps_and_grad(t, *args)[0],
                start,
                method="Nelder-Mead",
                options={"maxiter": max_iter},
            )
            theta = res.x
        candidates.append((theta, _mean_crps_and_grad(theta, *args)[0]))

    theta, crps = min(candidates, key=lambda t: t[1])
    a, b, g, h = theta
    return EmosCoefficients(a=a, b=b, c=g * g, d=h * h), float(crps), degenerate


class EmosRegressor(BaseEstimator):
    """Scikit-learn style EMOS estimator.

    Parameters
    ----------
    mode : {"global", "hourly"}
        One coefficient set for all rows, or 24 independent per-hour fits.
    lower, upper : float
        Censoring bounds of the predictive distribution (0/inf for GHI,
        0/capacity for PV power).
    seed : int
        Seed for the optimizer restart; refits are bit-reproducible.
    min_rows_per_hour : int
        Hourly mode refuses to fit hours with fewer training rows.

    The feature matrix X has columns (ensemble mean, ensemble variance,
    local hour); ``predict`` returns a vectorized CensoredNormal.
    """

    def __init__(
        self,
        mode="global",
        lower=0.0,
        upper=np.inf,
        seed=0,
        max_iter=1000,
        min_rows_per_hour=30,
    ):
        self.mode = mode
        self.lower = lower
        self.upper = upper
        self.seed = seed
        self.max_iter = max_iter
        self.min_rows_per_hour = min_rows_per_hour

    def fit(self, X, y):
        X, y = check_X_y(np.asarray(X, dtype=float), np.asarray(y, dtype=float))
        if X.shape[1] != 3:
            raise ValueError("X must have columns (ens_mean, ens_var, local_hour)")
        mean, var, hour = X[:, 0], X[:, 1], X[:, 2].astype(int)

        if self.mode == "global":
            coef, crps, degen = fit_emos(
                mean, var, y, self.lower, self.upper, seed=self.seed, max_iter=self.max_iter
            )
            self.coefficients_ = coef
            self.train_crps_ = crps
            self.degenerate_ = degen
        elif self.mode == "hourly":
            self.coefficients_ = {}
            self.degenerate_ = {}
            crps_sum, n = 0.0, 0
            for h in range(24):
                idx = hour == h
                count = int(idx.sum())
                if count < self.min_rows_per_hour:
                    raise InsufficientHourDataError(h, count, self.min_rows_per_hour)
                coef, crps, degen = fit_emos(
                    mean[idx], var[idx], y[idx],
                    self.lower, self.upper,
                    seed=self.seed + h, max_iter=self.max_iter,
                )
                self.coefficients_[h] = coef
                self.degenerate_[h] = degen
                crps_sum += crps * count
                n += count
            self.train_crps_ = crps_sum / n
        else:
            raise ValueError(f"unknown mode: {self.mode!r}")
        return self

    def predict(self, X) -> CensoredNormal:
        if not hasattr(self, "coefficients_"):
            raise UnfittedModelError("call fit() before predict()")
        X = check_array(np.asarray(X, dtype=float))
        mean, var, hour = X[:, 0], X[:, 1], X[:, 2].astype(int)
        if self.mode == "global":
            coef = self.coefficients_
            mu = coef.location(mean)
            sigma = coef.scale(var)
        else:
            mu = np.empty(len(mean))
            sigma = np.empty(len(mean))
            for h in range(24):
                idx = hour == h
                if idx.any():
                    coef = self.coefficients_[h]
                    mu[idx] = coef.location(mean[idx])
                    sigma[idx] = coef.scale(var[idx])
        return CensoredNormal(mu, sigma, self.lower, self.upper)

    # -- persistence --------------------------------------------------------
    def to_json(self) -> str:
        if not hasattr(self, "coefficients_"):
            raise UnfittedModelError("nothing fitted to serialize")
        if self.mode == "global":
            coefs = vars(self.coefficients_)
        else:
            coefs = {str(h): vars(c) for h, c in self.coefficients_.items()}
        return json.dumps(
            {
                "mode": self.mode,
                "bounds": [self.lower, None if np.isinf(self.upper) else self.upper],
                "coefficients": coefs,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "EmosRegressor":
        payload = json.loads(text)
        lower, upper = payload["bounds"]
        model = cls(mode=payload["mode"], lower=lower, upper=np.inf if upper is None else upper)
        if model.mode == "global":
            model.coefficients_ = EmosCoefficients(**payload["coefficients"])
        else:
            model.coefficients_ = {
                int(h): EmosCoefficients(**c) for h, c in payload["coefficients"].items()
            }
        return model
