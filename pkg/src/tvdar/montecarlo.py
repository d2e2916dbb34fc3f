"""Simulation experiments: sampling densities of the QML estimates and Lyapunov surfaces.

Replication ``r`` at sample size ``T`` draws its innovations from
``SeedSequence(seed, spawn_key=(T, r))``, so any replication can be rerun on
its own and the results do not depend on execution order or thread count.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import DarParams
from .estimation import OptimizerOptions, fit_dar, residuals
from .exceptions import NumericalError, ValidationError
from .model import DEFAULT_BURN_IN, GAUSSIAN, NoiseDistribution, simulate_dar
from .stability import lyapunov_plugin, lyapunov_quadrature, lyapunov_uniform

__all__ = [
    "ExperimentConfig",
    "DensityEstimate",
    "ExperimentResult",
    "LyapunovSurface",
    "TARGETS",
    "kde",
    "silverman_bandwidth",
    "rep_seed",
    "run_estimator_density_experiment",
    "lyapunov_surface",
]

TARGETS = ("phi", "omega", "alpha", "lambda2", "xi")

# a run is flagged when this fraction of replications fails
FAILURE_FLAG = 0.01


@dataclass(frozen=True)
class ExperimentConfig:
    theta0: DarParams
    T_values: tuple = (50, 100)
    reps: int = 4000
    noise: NoiseDistribution = GAUSSIAN
    seed: int = 0
    targets: tuple = TARGETS
    burn_in: int = DEFAULT_BURN_IN

    def __post_init__(self) -> None:
        if self.reps < 1:
            raise ValidationError("reps must be >= 1")
        T_values = tuple(int(t) for t in self.T_values)
        if not T_values:
            raise ValidationError("T_values must be nonempty")
        if min(T_values) < 10:
            raise ValidationError("each T must be >= 10")
        object.__setattr__(self, "T_values", T_values)
        bad = set(self.targets) - set(TARGETS)
        if bad or not self.targets:
            raise ValidationError(f"targets must be a nonempty subset of {TARGETS}")
        object.__setattr__(self, "targets", tuple(self.targets))
        if not isinstance(self.noise, NoiseDistribution):
            object.__setattr__(self, "noise", NoiseDistribution(self.noise))

    def to_dict(self) -> dict:
        return {
            "theta0": self.theta0.to_dict(),
            "T_values": list(self.T_values),
            "reps": self.reps,
            "noise": self.noise.kind,
            "seed": self.seed,
            "targets": list(self.targets),
            "burn_in": self.burn_in,
        }


@dataclass(frozen=True)
class DensityEstimate:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    samples: np.ndarray

    @property
    def mode(self) -> float:
        return float(self.grid[np.argmax(self.density)])

    @property
    def median(self) -> float:
        return float(np.median(self.samples))

    @property
    def iqr(self) -> float:
        q1, q3 = np.percentile(self.samples, [25, 75])
        return float(q3 - q1)

    def summary(self) -> dict:
        return {
            "mode": self.mode,
            "median": self.median,
            "iqr": self.iqr,
            "mean": float(np.mean(self.samples)),
            "bandwidth": self.bandwidth,
            "n": int(len(self.samples)),
        }


def silverman_bandwidth(samples) -> float:
    """``0.9 * min(sd, IQR / 1.34) * n**(-1/5)``; falls back to sd when the IQR is 0."""
    x = np.asarray(samples, dtype=float)
    sd = float(np.std(x, ddof=1))
    q1, q3 = np.percentile(x, [25, 75])
    spread = min(sd, (q3 - q1) / 1.34)
    if spread <= 0:
        spread = sd
    return 0.9 * spread * len(x) ** (-0.2)


def kde(samples, bandwidth: float | None = None, n_grid: int = 512) -> DensityEstimate:
    """Gaussian kernel density on a grid from ``min - 3h`` to ``max + 3h``."""
    x = np.sort(np.asarray(samples, dtype=float))
    if len(x) < 2 or x[0] == x[-1]:
        raise ValidationError("need at least 2 distinct samples")
    if not np.all(np.isfinite(x)):
        raise ValidationError("samples must be finite")
    h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise ValidationError("bandwidth must be > 0")
    grid = np.linspace(x[0] - 3 * h, x[-1] + 3 * h, n_grid)
    dens = np.zeros(n_grid)
    for chunk in np.array_split(x, max(1, len(x) // 2048)):
        u = (grid[:, None] - chunk[None, :]) / h
        dens += np.exp(-0.5 * u * u).sum(axis=1)
    dens /= len(x) * h * math.sqrt(2 * math.pi)
    return DensityEstimate(grid, dens, h, x)


def rep_seed(seed: int, T: int, r: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(T, r))


def _one_rep(config: ExperimentConfig, T: int, r: int, options: OptimizerOptions | None):
    try:
        x = simulate_dar(config.theta0, T, config.noise, rep_seed(config.seed, T, r), config.burn_in, check_stationarity=False)
        fit = fit_dar(x, options)
    except (NumericalError, ValidationError):
        return None
    p = fit.params
    out = {"phi": p.phi, "omega": p.omega, "alpha": p.alpha, "xi": p.xi}
    if "lambda2" in config.targets:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            out["lambda2"] = lyapunov_plugin(p, residuals(x, p))
    return out


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    samples: dict = field(default_factory=dict)  # T -> target -> array (replication order)
    densities: dict = field(default_factory=dict)  # T -> target -> DensityEstimate
    n_failed: dict = field(default_factory=dict)
    flagged: bool = False

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "n_failed": {str(T): n for T, n in self.n_failed.items()},
            "flagged": self.flagged,
            "summary": {
                str(T): {k: d.summary() for k, d in per.items()} for T, per in self.densities.items()
            },
        }


def run_estimator_density_experiment(
    config: ExperimentConfig,
    options: OptimizerOptions | None = None,
    threads: int = 1,
) -> ExperimentResult:
    """Simulate, refit and collect the targets for every replication and sample size.

    Failed replications (explosive paths or fits that do not converge) are
    excluded and counted; if they reach 1% of ``reps`` at any ``T`` the
    result is flagged and a warning is issued.
    """
    res = ExperimentResult(config)
    for T in config.T_values:
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                outs = list(pool.map(lambda r: _one_rep(config, T, r, options), range(config.reps)))
        else:
            outs = [_one_rep(config, T, r, options) for r in range(config.reps)]
        ok = [o for o in outs if o is not None]
        res.n_failed[T] = len(outs) - len(ok)
        if res.n_failed[T] >= FAILURE_FLAG * config.reps:
            res.flagged = True
            warnings.warn(f"{res.n_failed[T]} of {config.reps} replications failed at T={T}", RuntimeWarning, stacklevel=2)
        res.samples[T] = {k: np.array([o[k] for o in ok]) for k in config.targets}
        res.densities[T] = {}
        for k in config.targets:
            try:
                res.densities[T][k] = kde(res.samples[T][k])
            except ValidationError:
                pass
    return res


@dataclass(frozen=True)
class LyapunovSurface:
    """``values[i, j]`` is the exponent at ``(phi[i], alpha[j])``; NaN where undefined."""

    phi: np.ndarray
    alpha: np.ndarray
    values: np.ndarray
    noise: str
    method: str

    def to_rows(self) -> list[tuple[float, float, float]]:
        return [
            (float(p), float(a), float(self.values[i, j]))
            for i, p in enumerate(self.phi)
            for j, a in enumerate(self.alpha)
        ]


def lyapunov_surface(phi_grid, alpha_grid, dist: NoiseDistribution | str = "uniform_pm1") -> LyapunovSurface:
    """Exponent on a grid: closed form for U[-1, 1], quadrature otherwise.

    The ``alpha = 0`` column is ``log|phi|``; the ``(0, 0)`` cell is NaN.
    """
    dist = dist if isinstance(dist, NoiseDistribution) else NoiseDistribution(dist)
    phi = np.asarray(phi_grid, dtype=float)
    alpha = np.asarray(alpha_grid, dtype=float)
    if phi.size == 0 or alpha.size == 0:
        raise ValidationError("grids must be nonempty")
    if np.any(alpha < 0):
        raise ValidationError("alpha grid must be nonnegative")
    analytic = dist.kind == "uniform_pm1"
    f = lyapunov_uniform if analytic else (lambda p, a: lyapunov_quadrature(p, a, dist))
    out = np.full((len(phi), len(alpha)), np.nan)
    for i, p in enumerate(phi):
        for j, a in enumerate(alpha):
            if p == 0.0 and a == 0.0:
                continue
            out[i, j] = f(p, a)
    return LyapunovSurface(phi, alpha, out, dist.kind, "analytic" if analytic else "quadrature")
