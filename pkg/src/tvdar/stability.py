"""Lyapunov-exponent and xi stability measures.

The Lyapunov exponent of a DAR(1) is ``lambda = E log|phi + eta sqrt(alpha)|``;
``lambda < 0`` is the strict stationarity condition. The measure
``xi = phi**2 + alpha`` < 1 is the (stricter) finite-variance condition.

Estimators provided:

* closed form for U[-1, 1] innovations (:func:`lyapunov_uniform`);
* quadrature against a known density (:func:`lyapunov_quadrature`);
* semi-parametric plug-in over residuals (:func:`lyapunov_plugin`);
* kernel-weighted local plug-in (:func:`lyapunov_local`);
* ``xi`` with a delta-method variance and a one-sided Wald test.

The plug-in Lyapunov estimators are not differentiable in the parameters, so
their sampling law is approximated by simulation
(:func:`lyapunov_bootstrap`) rather than by a normal approximation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, stats

from .core import DarParams, TimePoint
from .diagnostics import TestResult
from .estimation import (
    AsymptoticCov,
    FitResult,
    LocalFit,
    OptimizerOptions,
    Residuals,
    fit_dar,
    local_residuals,
    residuals,
)
from .exceptions import NumericalError, QuadratureError, ValidationError
from .kernels import Bandwidth, KernelSpec, weights_at
from .model import GAUSSIAN, NoiseDistribution, simulate_dar

__all__ = [
    "lyapunov_uniform",
    "lyapunov_quadrature",
    "lyapunov_plugin",
    "plugin_terms",
    "lyapunov_local",
    "lyapunov_local_path",
    "lyapunov_bootstrap",
    "XiEstimate",
    "xi_measure",
    "xi_wald_test",
    "LocalXi",
    "xi_local",
    "StabilityReport",
    "stability_report",
]


def _u_log_u_minus_u(u: float) -> float:
    return u * math.log(u) - u if u > 0 else 0.0


def lyapunov_uniform(phi: float, alpha: float) -> float:
    """Closed-form Lyapunov exponent for ``eta ~ U[-1, 1]``.

    With ``s = sqrt(alpha)``, ``a = |phi|`` and ``F(u) = u log u - u``::

        a > s:  (F(a + s) - F(a - s)) / (2 s)
        a <= s: (F(a + s) + F(s - a)) / (2 s)

    Both branches meet at ``a = s`` with value ``log(2 s) - 1``. At
    ``phi = 0`` the value is ``log(s) - 1``, not zero.
    """
    alpha = float(alpha)
    if alpha < 0:
        raise ValidationError("alpha must be >= 0")
    a = abs(float(phi))
    if alpha == 0.0:
        if a == 0.0:
            raise ValidationError("Lyapunov exponent is -inf at phi = alpha = 0")
        return math.log(a)
    s = math.sqrt(alpha)
    if a > s:
        return (_u_log_u_minus_u(a + s) - _u_log_u_minus_u(a - s)) / (2.0 * s)
    return (_u_log_u_minus_u(a + s) + _u_log_u_minus_u(s - a)) / (2.0 * s)


_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _scalar_pdf(dist: NoiseDistribution):
    if dist.kind == "gaussian_standard":
        return lambda e: _INV_SQRT_2PI * math.exp(-0.5 * e * e)
    lo, hi = dist.support
    dens = 1.0 / (hi - lo)
    return lambda e: dens


@lru_cache(maxsize=4096)
def _quadrature_cached(phi: float, alpha: float, kind: str, epsabs: float) -> float:
    dist = NoiseDistribution(kind)
    s = math.sqrt(alpha)
    pdf = _scalar_pdf(dist)
    lo, hi = dist.support
    root = -phi / s

    def integrand(e):
        v = abs(phi + e * s)
        return math.log(v) * pdf(e) if v > 0 else 0.0

    pieces = [(lo, root), (root, hi)] if lo < root < hi else [(lo, hi)]
    total = 0.0
    for a, b in pieces:
        val, err, info = integrate.quad(
            integrand, a, b, epsabs=epsabs / 4, epsrel=1e-12, limit=500, full_output=1
        )[:3]
        if err > epsabs:
            raise QuadratureError(
                f"quadrature error estimate {err:.3g} exceeds {epsabs} at phi={phi}, alpha={alpha}"
            )
        total += val
    return total


def lyapunov_quadrature(
    phi: float,
    alpha: float,
    dist: NoiseDistribution | str = GAUSSIAN,
    epsabs: float = 1e-8,
) -> float:
    """``int log|phi + eta sqrt(alpha)| psi(eta) d eta`` by adaptive quadrature.

    The integration range is split at the log singularity
    ``eta = -phi / sqrt(alpha)`` when it falls inside the support.
    """
    dist = dist if isinstance(dist, NoiseDistribution) else NoiseDistribution(dist)
    alpha = float(alpha)
    phi = float(phi)
    if alpha < 0:
        raise ValidationError("alpha must be >= 0")
    if alpha == 0.0:
        if phi == 0.0:
            raise ValidationError("Lyapunov exponent is -inf at phi = alpha = 0")
        return math.log(abs(phi))
    return _quadrature_cached(phi, alpha, dist.kind, float(epsabs))


def _log_abs_terms(values: np.ndarray) -> tuple[np.ndarray, int]:
    a = np.abs(values)
    zero = a == 0
    n_zero = int(zero.sum())
    if n_zero:
        warnings.warn(f"{n_zero} plug-in terms are exactly zero and were excluded", RuntimeWarning, stacklevel=3)
    out = np.full(a.shape, np.nan)
    out[~zero] = np.log(a[~zero])
    return out, n_zero


def lyapunov_plugin(params: DarParams, resid: Residuals | np.ndarray) -> float:
    """Average of ``log|phi + eta_hat_t sqrt(alpha)|`` over the residuals.

    Terms with ``phi + eta sqrt(alpha) == 0`` exactly are dropped with a
    warning. With ``alpha == 0`` the value is ``log|phi|``.
    """
    eta = np.asarray(resid.values if isinstance(resid, Residuals) else resid, dtype=float)
    if params.alpha == 0.0:
        if params.phi == 0.0:
            raise ValidationError("Lyapunov exponent is -inf at phi = alpha = 0")
        return math.log(abs(params.phi))
    if len(eta) == 0:
        raise ValidationError("no residuals")
    terms, _ = _log_abs_terms(params.phi + eta * math.sqrt(params.alpha))
    return float(np.nanmean(terms))


def plugin_terms(fit: LocalFit, resid: Residuals) -> np.ndarray:
    """``log|phi(t/T) + eta_t sqrt(alpha(t/T))|`` for ``t = 2..T`` (NaN where excluded)."""
    phi, _, alpha = fit.params_at_times()
    start = resid.aligned_index
    n = len(resid.values)
    if start + n > fit.T:
        raise ValidationError("residuals extend beyond the fitted sample")
    vals = phi[start:start + n] + resid.values * np.sqrt(alpha[start:start + n])
    terms, _ = _log_abs_terms(vals)
    return terms


def _local_average(terms: np.ndarray, start: int, T: int, c: float, kernel: KernelSpec, b: Bandwidth) -> float:
    w = weights_at(kernel, b, c, T).weights[start:start + len(terms)]
    ok = (w > 0) & np.isfinite(terms)
    if not ok.any():
        raise ValidationError(f"empty effective window at c={c}")
    return float(np.sum(w[ok] * terms[ok]) / np.sum(w[ok]))


def lyapunov_local(
    fit: LocalFit,
    resid: Residuals,
    c: TimePoint | float,
    kernel: KernelSpec | str | None = None,
    b: Bandwidth | float | None = None,
) -> float:
    """Kernel-weighted local plug-in Lyapunov exponent at ``c``.

    Normalized by the realized weight sum. Kernel and bandwidth default to
    those of ``fit``.
    """
    kernel = fit.kernel if kernel is None else (kernel if isinstance(kernel, KernelSpec) else KernelSpec(kernel))
    bw = fit.bandwidth if b is None else (b if isinstance(b, Bandwidth) else Bandwidth(b))
    terms = plugin_terms(fit, resid)
    return _local_average(terms, resid.aligned_index, fit.T, float(c), kernel, bw)


def lyapunov_local_path(x, fit: LocalFit, grid=None) -> np.ndarray:
    """Local plug-in exponent at each grid point (defaults to ``fit.grid``)."""
    resid = local_residuals(x, fit)
    terms = plugin_terms(fit, resid)
    grid = fit.grid if grid is None else np.asarray(grid, dtype=float)
    out = np.full(len(grid), np.nan)
    for i, c in enumerate(grid):
        try:
            out[i] = _local_average(terms, resid.aligned_index, fit.T, float(c), fit.kernel, fit.bandwidth)
        except ValidationError:
            pass
    return out


@dataclass(frozen=True)
class BootstrapBand:
    samples: np.ndarray
    lower: float
    upper: float
    level: float
    n_failed: int


def lyapunov_bootstrap(
    params: DarParams,
    T: int,
    reps: int = 200,
    dist: NoiseDistribution | str = GAUSSIAN,
    seed: int = 0,
    level: float = 0.95,
    options: OptimizerOptions | None = None,
) -> BootstrapBand:
    """Sampling distribution of the plug-in exponent by simulation at ``params``.

    Each replication simulates ``T`` observations, refits, and recomputes the
    plug-in exponent from the refitted residuals. Failed fits are counted
    and skipped.
    """
    if reps < 1:
        raise ValidationError("reps must be >= 1")
    samples = []
    n_failed = 0
    root = np.random.SeedSequence(seed)
    for child in root.spawn(reps):
        x = simulate_dar(params, T, dist, seed=child, check_stationarity=False)
        try:
            fit = fit_dar(x, options)
        except NumericalError:
            n_failed += 1
            continue
        samples.append(lyapunov_plugin(fit.params, residuals(x, fit.params)))
    arr = np.array(samples)
    q = (1 - level) / 2
    lo, hi = np.quantile(arr, [q, 1 - q]) if len(arr) else (math.nan, math.nan)
    return BootstrapBand(arr, float(lo), float(hi), level, n_failed)


@dataclass(frozen=True)
class XiEstimate:
    xi: float
    variance: float
    se: float


def _xi_variance(phi: float, cov: AsymptoticCov) -> float:
    if cov.singular or not cov.sigma_hat > 0:
        raise NumericalError("singular information matrix; xi variance unavailable")
    return 4.0 * phi**2 * cov.avar_phi + cov.avar_alpha


def xi_measure(params: DarParams, cov: AsymptoticCov, T: int | None = None) -> XiEstimate:
    """``xi = phi**2 + alpha`` with asymptotic variance ``V = 4 phi**2 / Sigma + kappa inv(Omega)[alpha, alpha]``.

    The AR block and the variance block are asymptotically independent, so
    the delta-method cross term vanishes. ``se`` is ``sqrt(V / T)``, with
    ``1 / T`` taken from ``cov.variance_scale`` when ``T`` is omitted.
    """
    v = _xi_variance(params.phi, cov)
    scale = cov.variance_scale if T is None else 1.0 / T
    return XiEstimate(params.xi, v, math.sqrt(v * scale))


def xi_wald_test(xi: float, variance: float, T: float, xi0: float = 1.0, level: float = 0.05) -> TestResult:
    """One-sided Wald test of ``xi < xi0`` against ``xi >= xi0``.

    The statistic ``sqrt(T) (xi - xi0) / sqrt(V)`` is compared with the upper
    standard normal quantile.
    """
    if not variance > 0:
        raise ValidationError("variance must be > 0")
    stat = math.sqrt(T) * (xi - xi0) / math.sqrt(variance)
    p = float(stats.norm.sf(stat))
    return TestResult(
        name="xi_wald",
        statistic=stat,
        p_value=p,
        level=level,
        reject=p < level,
        nuisance={"xi": xi, "xi0": xi0, "variance": variance, "T": T},
    )


@dataclass(frozen=True)
class LocalXi:
    grid: np.ndarray
    xi: np.ndarray
    se: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float


def xi_local(fit: LocalFit, level: float = 0.95) -> LocalXi:
    """Local ``xi(c)`` with pointwise normal intervals from the local covariance."""
    if not 0 < level < 1:
        raise ValidationError("level must lie in (0, 1)")
    z = float(stats.norm.ppf(0.5 + level / 2))
    xi = np.full(len(fit.grid), np.nan)
    se = np.full(len(fit.grid), np.nan)
    for i, (p, cv) in enumerate(zip(fit.params_at, fit.cov_at)):
        if p is None:
            continue
        xi[i] = p.xi
        try:
            se[i] = xi_measure(p, cv).se
        except NumericalError:
            pass
    return LocalXi(fit.grid, xi, se, xi - z * se, xi + z * se, level)


@dataclass
class StabilityReport:
    lambda_plugin: float
    xi: float
    xi_variance: float
    xi_se: float
    lambda_analytic: float | None = None
    lambda_quadrature: float | None = None
    local_grid: np.ndarray | None = None
    local_lambda: np.ndarray | None = None
    local_xi: LocalXi | None = None
    wald: TestResult | None = None

    def to_dict(self) -> dict:
        out = {
            "lambda_plugin": self.lambda_plugin,
            "lambda_analytic": self.lambda_analytic,
            "lambda_quadrature": self.lambda_quadrature,
            "xi": self.xi,
            "xi_variance": self.xi_variance,
            "xi_se": self.xi_se,
        }
        if self.wald is not None:
            out["wald"] = self.wald.to_dict()
        if self.local_grid is not None:
            out["local"] = {
                "c": self.local_grid.tolist(),
                "lambda2": self.local_lambda.tolist(),
            }
            if self.local_xi is not None:
                out["local"].update(
                    xi=self.local_xi.xi.tolist(),
                    xi_lower=self.local_xi.lower.tolist(),
                    xi_upper=self.local_xi.upper.tolist(),
                )
        return out


def stability_report(
    x,
    fit: FitResult,
    dist: NoiseDistribution | str | None = None,
    local_fit: LocalFit | None = None,
    xi0: float = 1.0,
    level: float = 0.95,
) -> StabilityReport:
    """Collect the global and (optionally) local stability measures.

    ``dist`` enables the quadrature estimator; the closed form is added when
    ``dist`` is ``uniform_pm1``.
    """
    p = fit.params
    resid = residuals(x, p)
    xi = xi_measure(p, fit.cov)
    rep = StabilityReport(
        lambda_plugin=lyapunov_plugin(p, resid),
        xi=xi.xi,
        xi_variance=xi.variance,
        xi_se=xi.se,
        wald=xi_wald_test(xi.xi, xi.variance, 1.0 / fit.cov.variance_scale, xi0, 1 - level),
    )
    if dist is not None:
        dist = dist if isinstance(dist, NoiseDistribution) else NoiseDistribution(dist)
        rep.lambda_quadrature = lyapunov_quadrature(p.phi, p.alpha, dist)
        if dist.kind == "uniform_pm1":
            rep.lambda_analytic = lyapunov_uniform(p.phi, p.alpha)
    if local_fit is not None:
        rep.local_grid = local_fit.grid
        rep.local_lambda = lyapunov_local_path(x, local_fit)
        rep.local_xi = xi_local(local_fit, level)
    return rep
