"""Descriptive statistics: rolling moments, autocorrelations and an AR(1) baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core import DemeanedSeries, PriceSeries
from .exceptions import ValidationError

__all__ = [
    "RollingStats",
    "Ar1Fit",
    "rolling_mean_var",
    "acf",
    "acf_by_year",
    "fit_ar1",
    "rolling_ar1",
]


@dataclass(frozen=True)
class RollingStats:
    """Trailing-window mean and variance, one entry per full window.

    ``ci_mode`` is ``"standard"`` (``m +- z sd / sqrt(n)``) or ``"sqrt_sd"``
    (``m +- z sqrt(sd / n)``, a dimensionally inconsistent variant kept for
    reproducing existing figures).
    """

    dates: tuple
    local_mean: np.ndarray
    local_var: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    window: int
    level: float = 0.95
    ci_mode: str = "standard"


def rolling_mean_var(
    series: PriceSeries | np.ndarray,
    window: int = 50,
    level: float = 0.95,
    ci_mode: str = "standard",
) -> RollingStats:
    if not isinstance(series, PriceSeries):
        series = PriceSeries.from_values(series)
    y = series.values
    n = len(y)
    if window < 2 or window > n:
        raise ValidationError(f"window must be in [2, {n}], got {window}")
    if ci_mode not in ("standard", "sqrt_sd"):
        raise ValidationError("ci_mode must be 'standard' or 'sqrt_sd'")
    if not 0 < level < 1:
        raise ValidationError("level must lie in (0, 1)")
    z = float(stats.norm.ppf(0.5 + level / 2))
    m = np.empty(n - window + 1)
    v = np.empty_like(m)
    # per-window reductions so the full-length window matches np.mean / np.var exactly
    for i in range(len(m)):
        seg = y[i:i + window]
        m[i] = np.mean(seg)
        v[i] = np.var(seg)
    sd = np.sqrt(v)
    half = z * sd / math.sqrt(window) if ci_mode == "standard" else z * np.sqrt(sd / window)
    return RollingStats(
        dates=series.timestamps[window - 1:],
        local_mean=m,
        local_var=v,
        ci_lower=m - half,
        ci_upper=m + half,
        window=window,
        level=level,
        ci_mode=ci_mode,
    )


def _array(x) -> np.ndarray:
    if isinstance(x, (DemeanedSeries, PriceSeries)):
        return np.asarray(x.values, dtype=float)
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValidationError("input must be one-dimensional")
    return arr


def acf(series, max_lag: int) -> np.ndarray:
    """Sample autocorrelations ``r_0 .. r_max_lag`` (``r_0 = 1``)."""
    x = _array(series)
    n = len(x)
    if max_lag < 0 or max_lag >= n - 1:
        raise ValidationError(f"max_lag must be in [0, {n - 2}]")
    d = x - x.mean()
    c0 = float(d @ d)
    if c0 == 0.0:
        raise ValidationError("constant input: autocorrelations are undefined")
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for k in range(1, max_lag + 1):
        out[k] = float(d[k:] @ d[:-k]) / c0
    return out


def acf_by_year(series: PriceSeries, max_lag: int) -> dict[int, np.ndarray]:
    """ACF of each calendar year's prices; years too short for ``max_lag`` are left out."""
    try:
        years = np.array([ts.year for ts in series.timestamps])
    except AttributeError as exc:
        raise ValidationError("timestamps must be dates to split by year") from exc
    out = {}
    for yr in np.unique(years):
        seg = series.values[years == yr]
        if len(seg) - 1 > max_lag and np.ptp(seg) > 0:
            out[int(yr)] = acf(seg, max_lag)
    return out


@dataclass(frozen=True)
class Ar1Fit:
    """AR(1) fit ``x_t = rho x_{t-1} + e_t``.

    The rolling arrays, when present, are aligned with ``end`` (one-based
    index of each window's last observation); NaN marks skipped windows.
    """

    rho: float
    sigma2: float
    rolling_rho: np.ndarray | None = None
    rolling_sigma_e: np.ndarray | None = None
    end: np.ndarray | None = None


def _ols_rho(x: np.ndarray) -> float:
    den = float(x[:-1] @ x[:-1])
    if den == 0.0:
        return math.nan
    return float(x[1:] @ x[:-1]) / den


def fit_ar1(x) -> Ar1Fit:
    """OLS (equivalently Gaussian ML conditional on ``x_1``)."""
    xv = _array(x)
    if len(xv) < 3:
        raise ValidationError("need at least 3 observations")
    rho = _ols_rho(xv)
    if math.isnan(rho):
        raise ValidationError("zero denominator: all lagged values are 0")
    e = xv[1:] - rho * xv[:-1]
    return Ar1Fit(rho, float(np.mean(e**2)))


def rolling_ar1(x, window: int = 50, fixed_rho: bool = False) -> Ar1Fit:
    """Rolling AR(1) coefficients and residual scale.

    ``rho(t)`` is the OLS slope over observations ``t - window + 1 .. t``.
    ``sigma_e(t) = sqrt(mean_tau (x_tau - rho(tau) x_{tau-1})**2)`` over the
    same range, with each ``tau`` using its own rolling slope; with
    ``fixed_rho`` every term uses ``rho(t)``.
    """
    xv = _array(x)
    n = len(xv)
    if window < 3 or window > n:
        raise ValidationError(f"window must be in [3, {n}], got {window}")
    try:
        glob = fit_ar1(xv)
    except ValidationError:
        glob = Ar1Fit(math.nan, math.nan)
    # rho_at[t-1] is rho(t) for one-based t; NaN before the first full window
    rho_at = np.full(n, np.nan)
    for t in range(window, n + 1):
        rho_at[t - 1] = _ols_rho(xv[t - window:t])
    sig = np.full(n, np.nan)
    for t in range(window + 1, n + 1):
        tau = np.arange(t - window + 1, t + 1)  # one-based
        r = np.full(window, rho_at[t - 1]) if fixed_rho else rho_at[tau - 1]
        e = xv[tau - 1] - r * xv[tau - 2]
        if np.all(np.isfinite(e)):
            sig[t - 1] = math.sqrt(float(np.mean(e**2)))
    ends = np.arange(window, n + 1)
    return Ar1Fit(glob.rho, glob.sigma2, rho_at[window - 1:], sig[window - 1:], ends)
