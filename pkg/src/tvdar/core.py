"""Domain types and demeaning transforms shared by every module.

Time is indexed two ways: observation index ``t = 1..T`` and rescaled time
``c = t / T`` in ``[0, 1]``. Arrays are zero-based, so ``values[t - 1]`` is
observation ``t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .exceptions import ValidationError

__all__ = [
    "PriceSeries",
    "DemeanedSeries",
    "DarParams",
    "TimePoint",
    "demean_global",
    "demean_local",
    "rescaled_times",
]


def _as_float_array(values: Any, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise ValidationError(f"{name} has a non-finite value at position {bad}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PriceSeries:
    """Ordered price observations.

    Parameters
    ----------
    timestamps : sequence
        Strictly increasing, mutually comparable keys (typically
        ``datetime.date``). No calendar arithmetic is done on them.
    values : array_like
        Finite prices in level units.
    labels : mapping, optional
        Sparse ``timestamp -> annotation`` map carried through to plot data.
    volume : array_like, optional
        Traded volume aligned with ``values``.
    """

    timestamps: tuple
    values: np.ndarray
    labels: Mapping[Any, str] = field(default_factory=dict)
    volume: np.ndarray | None = None

    def __post_init__(self) -> None:
        values = _as_float_array(self.values, "values")
        stamps = tuple(self.timestamps)
        if len(values) < 2:
            raise ValidationError("a price series needs at least 2 observations")
        if len(stamps) != len(values):
            raise ValidationError(
                f"{len(stamps)} timestamps for {len(values)} values"
            )
        for i in range(1, len(stamps)):
            if not stamps[i - 1] < stamps[i]:
                raise ValidationError(
                    f"timestamps not strictly increasing at position {i}: "
                    f"{stamps[i - 1]!r} then {stamps[i]!r}"
                )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "timestamps", stamps)
        object.__setattr__(self, "labels", dict(self.labels))
        if self.volume is not None:
            volume = _as_float_array(self.volume, "volume")
            if len(volume) != len(values):
                raise ValidationError("volume length differs from values length")
            object.__setattr__(self, "volume", volume)

    def __len__(self) -> int:
        return len(self.values)

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "PriceSeries":
        """Series keyed by the integers ``1..n``."""
        return cls(tuple(range(1, len(values) + 1)), np.asarray(values, dtype=float))


@dataclass(frozen=True)
class DemeanedSeries:
    """Deviations ``x_t`` of a series from a global or local mean.

    ``mean_used`` is a float for global demeaning and an array aligned with
    ``values`` for local demeaning.
    """

    values: np.ndarray
    mean_used: float | np.ndarray = 0.0
    origin: PriceSeries | None = None

    def __post_init__(self) -> None:
        values = _as_float_array(self.values, "values")
        object.__setattr__(self, "values", values)
        if not np.isscalar(self.mean_used):
            mean = np.array(self.mean_used, dtype=float)
            if mean.shape != values.shape:
                raise ValidationError("local mean must align with values")
            mean.setflags(write=False)
            object.__setattr__(self, "mean_used", mean)
        else:
            object.__setattr__(self, "mean_used", float(self.mean_used))
        if self.origin is not None and len(self.origin) != len(values):
            raise ValidationError("demeaned length differs from source length")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def timestamps(self) -> tuple:
        if self.origin is not None:
            return self.origin.timestamps
        return tuple(range(1, len(self.values) + 1))

    def restore(self) -> np.ndarray:
        """Add the mean back, recovering the level series."""
        return self.values + self.mean_used

    def scaled(self, k: float) -> "DemeanedSeries":
        return DemeanedSeries(self.values * k, self.mean_used)


@dataclass(frozen=True)
class DarParams:
    """DAR(1) parameter triple: AR coefficient, ARCH intercept and slope."""

    phi: float
    omega: float
    alpha: float

    def __post_init__(self) -> None:
        for name in ("phi", "omega", "alpha"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValidationError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if self.omega <= 0:
            raise ValidationError(f"omega must be > 0, got {self.omega}")
        if self.alpha < 0:
            raise ValidationError(f"alpha must be >= 0, got {self.alpha}")

    @property
    def xi(self) -> float:
        """Second-order stability measure ``phi**2 + alpha``."""
        return self.phi**2 + self.alpha

    def as_array(self) -> np.ndarray:
        return np.array([self.phi, self.omega, self.alpha])

    def to_dict(self) -> dict[str, float]:
        return {"phi": self.phi, "omega": self.omega, "alpha": self.alpha}


@dataclass(frozen=True, order=True)
class TimePoint:
    """A point of rescaled time in ``[0, 1]``."""

    c: float

    def __post_init__(self) -> None:
        c = float(self.c)
        if not 0.0 <= c <= 1.0:
            raise ValidationError(f"rescaled time must lie in [0, 1], got {c}")
        object.__setattr__(self, "c", c)

    def __float__(self) -> float:
        return self.c


def rescaled_times(T: int) -> np.ndarray:
    """``t / T`` for ``t = 1..T``."""
    return np.arange(1, T + 1) / T


def _values_of(series: PriceSeries | Sequence[float]) -> tuple[np.ndarray, PriceSeries | None]:
    if isinstance(series, PriceSeries):
        return series.values, series
    return _as_float_array(series, "values"), None


def demean_global(series: PriceSeries | Sequence[float]) -> DemeanedSeries:
    """Subtract the arithmetic mean of the whole sample."""
    y, origin = _values_of(series)
    if len(y) < 2:
        raise ValidationError("need at least 2 observations to demean")
    mean = float(np.mean(y))
    return DemeanedSeries(y - mean, mean, origin)


def demean_local(series: PriceSeries | Sequence[float], window: int = 50) -> DemeanedSeries:
    """Subtract the trailing (causal) window mean.

    The mean at index ``t`` averages ``y[max(0, t - window + 1) .. t]``, so the
    first ``window - 1`` points use the shorter available prefix.
    """
    y, origin = _values_of(series)
    n = len(y)
    if window < 2 or window > n:
        raise ValidationError(f"window must be in [2, {n}], got {window}")
    csum = np.concatenate(([0.0], np.cumsum(y)))
    idx = np.arange(n)
    lo = np.maximum(0, idx - window + 1)
    local_mean = (csum[idx + 1] - csum[lo]) / (idx + 1 - lo)
    # the full-window mean at the last index must equal the global mean
    # exactly, which the cumulative-sum difference does not guarantee
    if window == n:
        local_mean[-1] = float(np.mean(y))
    return DemeanedSeries(y - local_mean, local_mean, origin)
