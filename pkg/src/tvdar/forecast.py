"""One-step-ahead forecasts from rolling DAR(1) fits.

At each date ``t`` the trailing window of prices is demeaned by its own mean
``m(t)``, a DAR(1) is fitted to the deviations, and the next price is
forecast as ``m(t) + phi_hat * x_t``.

The default interval reflects only the sampling error of ``phi_hat``:
``y_hat +- z * sqrt(x_t**2 / (n * Sigma_hat))``. It collapses at ``x_t = 0``
and ignores the innovation, so it is much narrower than a predictive
interval. ``interval="innovation"`` gives ``y_hat +- z * sqrt(omega_hat +
alpha_hat * x_t**2)`` instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy import stats

from .core import DarParams, PriceSeries
from .estimation import OptimizerOptions, fit_dar
from .exceptions import NumericalError, ValidationError

__all__ = [
    "ForecastRecord",
    "ForecastResult",
    "one_step_forecast",
    "prediction_interval",
    "innovation_interval",
    "mspe",
]

_INTERVAL_KINDS = ("parameter", "innovation")


@dataclass(frozen=True)
class ForecastRecord:
    """Forecast of the price at ``date`` made with data up to the previous date.

    ``date`` is ``None`` for the forecast beyond the last observation.
    ``window_fit`` is ``None`` when the window was constant (no fit needed).
    """

    date: Any
    y_hat: float
    interval: tuple[float, float]
    actual: float | None
    window_fit: DarParams | None
    local_mean: float = math.nan
    x_t: float = math.nan

    def __post_init__(self) -> None:
        lo, hi = self.interval
        if not lo <= self.y_hat <= hi:
            raise ValidationError("interval must contain the forecast")

    def to_dict(self) -> dict:
        return {
            "date": None if self.date is None else str(self.date),
            "y_hat": self.y_hat,
            "lower": self.interval[0],
            "upper": self.interval[1],
            "actual": self.actual,
            "params": None if self.window_fit is None else self.window_fit.to_dict(),
        }


@dataclass(frozen=True)
class ForecastResult:
    records: tuple
    skipped: tuple
    window: int
    level: float
    interval_kind: str

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def y_hat(self) -> np.ndarray:
        return np.array([r.y_hat for r in self.records])


def _z(level: float) -> float:
    if not 0.0 < level < 1.0:
        raise ValidationError("level must lie in (0, 1)")
    return float(stats.norm.ppf(0.5 + level / 2))


def prediction_interval(record, sigma_hat: float, x_t: float, n: int, level: float = 0.95) -> tuple[float, float]:
    """``y_hat +- z * sqrt(x_t**2 / (n * sigma_hat))``.

    ``record`` may be a :class:`ForecastRecord` or the point forecast itself.
    ``n`` is the estimation-window length.
    """
    y = record.y_hat if isinstance(record, ForecastRecord) else float(record)
    if not sigma_hat > 0:
        raise ValidationError("sigma_hat must be > 0")
    if n < 2:
        raise ValidationError("n must be >= 2")
    half = _z(level) * abs(x_t) / math.sqrt(n * sigma_hat)
    return (y - half, y + half)


def innovation_interval(record, params: DarParams, x_t: float, level: float = 0.95) -> tuple[float, float]:
    """``y_hat +- z * sqrt(omega + alpha * x_t**2)``."""
    y = record.y_hat if isinstance(record, ForecastRecord) else float(record)
    half = _z(level) * math.sqrt(params.omega + params.alpha * x_t**2)
    return (y - half, y + half)


def one_step_forecast(
    series: PriceSeries,
    window: int = 50,
    level: float = 0.95,
    interval: str = "parameter",
    options: OptimizerOptions | None = None,
) -> ForecastResult:
    """Rolling one-step forecasts for every date after the first full window.

    The forecast of observation ``t + 1`` uses prices ``t - window + 1 .. t``
    only. Dates whose window fit fails are listed in ``skipped``.
    """
    if not isinstance(series, PriceSeries):
        series = PriceSeries.from_values(series)
    if interval not in _INTERVAL_KINDS:
        raise ValidationError(f"interval must be one of {_INTERVAL_KINDS}")
    y = series.values
    T = len(y)
    if window < 2 or window > T - 1:
        raise ValidationError(f"window must be in [2, {T - 1}], got {window}")
    _z(level)
    stamps = series.timestamps
    records = []
    skipped = []
    for t in range(window, T + 1):
        seg = y[t - window:t]
        date = stamps[t] if t < T else None
        actual = float(y[t]) if t < T else None
        m = float(np.mean(seg))
        x = seg - m
        x_t = float(x[-1])
        if np.ptp(seg) == 0:
            records.append(ForecastRecord(date, m, (m, m), actual, None, m, 0.0))
            continue
        try:
            fit = fit_dar(x, options)
        except (NumericalError, ValidationError):
            skipped.append(date)
            continue
        y_hat = m + fit.params.phi * x_t
        if interval == "parameter":
            bounds = prediction_interval(y_hat, fit.cov.sigma_hat, x_t, window, level)
        else:
            bounds = innovation_interval(y_hat, fit.params, x_t, level)
        records.append(ForecastRecord(date, y_hat, bounds, actual, fit.params, m, x_t))
    return ForecastResult(tuple(records), tuple(skipped), window, level, interval)


def mspe(records) -> float:
    """Mean squared forecast error over records with a realized value."""
    errs = [(r.actual - r.y_hat) ** 2 for r in records if r.actual is not None]
    if not errs:
        raise ValidationError("no records with realized values")
    return float(np.mean(errs))
