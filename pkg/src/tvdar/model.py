"""Simulation of DAR(1) and time-varying tvDAR(1) paths.

The recursion is

    x_t = phi_t * x_{t-1} + eta_t * sqrt(omega_t + alpha_t * x_{t-1}**2)

with constant parameters (DAR) or parameters evaluated at rescaled time
``t / T`` (tvDAR). The stationary law has no closed form, so the initial value
is produced by a burn-in run started at zero.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numba
import numpy as np
from scipy import stats

from .core import DarParams, DemeanedSeries, rescaled_times
from .exceptions import SimulationExplosion, ValidationError

__all__ = [
    "NoiseDistribution",
    "GAUSSIAN",
    "UNIFORM_PM1",
    "UNIFORM_STANDARDIZED",
    "ParamPath",
    "draw_noise",
    "simulate_dar",
    "simulate_tvdar",
    "dar_recursion",
    "EXPLOSION_BOUND",
    "DEFAULT_BURN_IN",
]

EXPLOSION_BOUND = 1e150
DEFAULT_BURN_IN = 500

_SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class NoiseDistribution:
    """Symmetric innovation law.

    ``uniform_pm1`` is U[-1, 1] and has variance 1/3, so it is not a valid
    DAR innovation in the unit-variance sense; it is kept because it admits a
    closed-form Lyapunov exponent. ``uniform_standardized`` is U[-sqrt 3, sqrt 3].
    """

    kind: str = "gaussian_standard"

    def __post_init__(self) -> None:
        aliases = {"gaussian": "gaussian_standard", "normal": "gaussian_standard"}
        kind = aliases.get(self.kind, self.kind)
        if kind not in ("gaussian_standard", "uniform_pm1", "uniform_standardized"):
            raise ValidationError(f"unknown noise distribution {self.kind!r}")
        object.__setattr__(self, "kind", kind)

    @property
    def support(self) -> tuple[float, float]:
        if self.kind == "uniform_pm1":
            return (-1.0, 1.0)
        if self.kind == "uniform_standardized":
            return (-_SQRT3, _SQRT3)
        return (-math.inf, math.inf)

    @property
    def variance(self) -> float:
        return 1.0 / 3.0 if self.kind == "uniform_pm1" else 1.0

    @property
    def fourth_moment(self) -> float:
        if self.kind == "gaussian_standard":
            return 3.0
        lo, hi = self.support
        return hi**4 / 5.0

    def pdf(self, eta):
        if self.kind == "gaussian_standard":
            return stats.norm.pdf(eta)
        lo, hi = self.support
        eta = np.asarray(eta, dtype=float)
        out = np.where((eta >= lo) & (eta <= hi), 1.0 / (hi - lo), 0.0)
        return float(out) if out.ndim == 0 else out

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "gaussian_standard":
            return rng.standard_normal(n)
        lo, hi = self.support
        return rng.uniform(lo, hi, n)


GAUSSIAN = NoiseDistribution("gaussian_standard")
UNIFORM_PM1 = NoiseDistribution("uniform_pm1")
UNIFORM_STANDARDIZED = NoiseDistribution("uniform_standardized")


def _as_dist(dist) -> NoiseDistribution:
    return dist if isinstance(dist, NoiseDistribution) else NoiseDistribution(dist)


def draw_noise(dist: NoiseDistribution | str, n: int, seed) -> np.ndarray:
    """``n`` i.i.d. draws; the same seed always gives the same sequence."""
    if n <= 0:
        raise ValidationError(f"n must be positive, got {n}")
    rng = np.random.default_rng(seed)
    return _as_dist(dist).sample(rng, n)


@numba.njit(cache=True, nogil=True)
def _recursion(phi, omega, alpha, eta, x0, bound):
    n = eta.shape[0]
    out = np.empty(n)
    x = x0
    for t in range(n):
        x = phi[t] * x + eta[t] * math.sqrt(omega[t] + alpha[t] * x * x)
        if not abs(x) < bound:
            return out, t
        out[t] = x
    return out, -1


def dar_recursion(phi, omega, alpha, eta, x0: float = 0.0) -> np.ndarray:
    """Run the recursion with per-step parameter arrays aligned with ``eta``.

    Raises :class:`SimulationExplosion` when ``|x_t|`` reaches 1e150 or
    becomes non-finite.
    """
    eta = np.ascontiguousarray(eta, dtype=float)
    n = len(eta)
    phi = np.broadcast_to(np.asarray(phi, dtype=float), (n,)).copy()
    omega = np.broadcast_to(np.asarray(omega, dtype=float), (n,)).copy()
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (n,)).copy()
    out, bad = _recursion(phi, omega, alpha, eta, float(x0), EXPLOSION_BOUND)
    if bad >= 0:
        raise SimulationExplosion(bad)
    return out


def _check_lyapunov(phi: float, alpha: float, dist: NoiseDistribution) -> None:
    # deferred import: stability depends on this module
    from .stability import lyapunov_quadrature

    if phi == 0.0 and alpha == 0.0:
        return
    lam = lyapunov_quadrature(phi, alpha, dist)
    if lam >= 0:
        warnings.warn(
            f"Lyapunov exponent {lam:.4g} >= 0 at phi={phi}, alpha={alpha}: "
            "the process is not strictly stationary",
            RuntimeWarning,
            stacklevel=3,
        )


def simulate_dar(
    params: DarParams,
    T: int,
    dist: NoiseDistribution | str = GAUSSIAN,
    seed=None,
    burn_in: int = DEFAULT_BURN_IN,
    check_stationarity: bool = True,
) -> DemeanedSeries:
    """Simulate ``T`` observations of a constant-parameter DAR(1).

    ``burn_in + T`` innovations are drawn in one block from ``seed``; the
    first ``burn_in`` values of the path are discarded.
    """
    if T < 2:
        raise ValidationError(f"T must be >= 2, got {T}")
    if burn_in < 0:
        raise ValidationError("burn_in must be >= 0")
    dist = _as_dist(dist)
    if check_stationarity:
        _check_lyapunov(params.phi, params.alpha, dist)
    eta = draw_noise(dist, burn_in + T, seed)
    try:
        path = dar_recursion(params.phi, params.omega, params.alpha, eta)
    except SimulationExplosion as exc:
        raise SimulationExplosion(exc.index - burn_in) from None
    return DemeanedSeries(path[burn_in:], 0.0)


@dataclass(frozen=True)
class ParamPath:
    """Deterministic parameter curves on ``[0, 1]``.

    Each of ``phi``, ``omega`` and ``alpha`` is a callable accepting an array
    of rescaled times; scalar-returning callables are broadcast.
    """

    phi: Callable
    omega: Callable
    alpha: Callable

    @classmethod
    def constant(cls, params: DarParams) -> "ParamPath":
        return cls(
            lambda c: params.phi,
            lambda c: params.omega,
            lambda c: params.alpha,
        )

    @classmethod
    def from_table(cls, c, phi, omega, alpha) -> "ParamPath":
        """Piecewise-linear curves through the knots ``c`` (held flat outside)."""
        c = np.asarray(c, dtype=float)
        if np.any(np.diff(c) <= 0):
            raise ValidationError("knots must be strictly increasing")
        tables = [np.asarray(v, dtype=float) for v in (phi, omega, alpha)]
        for v in tables:
            if v.shape != c.shape:
                raise ValidationError("each table must have one value per knot")
        return cls(*(lambda s, v=v: np.interp(s, c, v) for v in tables))

    def evaluate(self, c) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        c = np.asarray(c, dtype=float)
        out = []
        for name in ("phi", "omega", "alpha"):
            try:
                v = np.broadcast_to(np.asarray(getattr(self, name)(c), dtype=float), c.shape)
            except Exception as exc:
                raise ValidationError(f"evaluating {name} path failed: {exc}") from exc
            if not np.all(np.isfinite(v)):
                raise ValidationError(f"{name} path is not finite")
            out.append(v)
        phi, omega, alpha = out
        if np.any(omega <= 0):
            raise ValidationError("omega path must be positive")
        if np.any(alpha < 0):
            raise ValidationError("alpha path must be nonnegative")
        return phi, omega, alpha

    def at(self, c: float) -> DarParams:
        phi, omega, alpha = self.evaluate(np.array([c]))
        return DarParams(phi[0], omega[0], alpha[0])


def simulate_tvdar(
    path: ParamPath,
    T: int,
    dist: NoiseDistribution | str = GAUSSIAN,
    seed=None,
    burn_in: int = DEFAULT_BURN_IN,
) -> DemeanedSeries:
    """Simulate the triangular array ``x_{t,T}``, ``t = 1..T``.

    The burn-in runs with parameters frozen at ``c = 1/T``. With constant
    curves the output is bit-identical to :func:`simulate_dar` under the same
    seed and burn-in.
    """
    if T < 2:
        raise ValidationError(f"T must be >= 2, got {T}")
    dist = _as_dist(dist)
    phi, omega, alpha = path.evaluate(rescaled_times(T))
    eta = draw_noise(dist, burn_in + T, seed)
    pad = lambda v: np.concatenate((np.full(burn_in, v[0]), v))  # noqa: E731
    try:
        x = dar_recursion(pad(phi), pad(omega), pad(alpha), eta)
    except SimulationExplosion as exc:
        raise SimulationExplosion(exc.index - burn_in) from None
    return DemeanedSeries(x[burn_in:], 0.0)
