"""Quasi-maximum likelihood estimation of DAR(1) and tvDAR(1).

Global fits maximize the Gaussian quasi log-likelihood

    L(theta) = -1/2 * sum_{t=2}^{T} [ log h_t + (x_t - phi x_{t-1})**2 / h_t ],
    h_t = omega + alpha * x_{t-1}**2,

and local fits maximize the same terms weighted by a kernel centred at
rescaled time ``c``. Both use a simplex search on ``(phi, log omega,
log alpha)`` with several deterministic starts.

A local fit with the rectangular kernel and ``b = n / T`` uses exactly the
likelihood terms ``t - n + 1 .. t``, which involve observations
``t - n .. t``. It therefore coincides with :func:`fit_dar` applied to those
``n + 1`` observations.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import stats

from . import _optim
from .core import DarParams, DemeanedSeries, TimePoint, rescaled_times
from .exceptions import FitError, SingularFitError, ValidationError
from .kernels import (
    Bandwidth,
    KernelSpec,
    EPANECHNIKOV,
    check_bandwidth,
    kernel_l2_norm,
    weights_at,
)

__all__ = [
    "OptimizerOptions",
    "AsymptoticCov",
    "FitResult",
    "LocalFit",
    "Residuals",
    "qml_loglik",
    "fit_dar",
    "residuals",
    "local_residuals",
    "asymptotic_cov",
    "fit_tvdar",
    "local_confidence_bands",
]


@dataclass(frozen=True)
class OptimizerOptions:
    """Settings for the simplex search.

    Attributes
    ----------
    max_iter : int
        Iteration cap per start.
    tol : float
        Simplex diameter (in transformed coordinates) that counts as converged.
    n_starts : int
        Moment-based start plus ``n_starts - 1`` seeded perturbations of it.
    seed : int
        Seed for the perturbations.
    min_obs : int
        Minimum number of likelihood terms (nonzero weights for local fits).
    warm_start : bool
        Local fits start from the previous grid point's optimum and fall back
        to the cold multi-start only if that run does not converge. Off by
        default: on short windows the likelihood can be multimodal and the
        warm path may settle in a different local optimum than a cold fit.
    threads : int
        Worker threads for local fits; only used when ``warm_start`` is off.
    """

    max_iter: int = 5000
    tol: float = 1e-8
    n_starts: int = 5
    seed: int = 20240101
    min_obs: int = 10
    warm_start: bool = False
    threads: int = 1

    def __post_init__(self) -> None:
        if self.n_starts < 1:
            raise ValidationError("n_starts must be >= 1")
        if self.max_iter < 1 or not self.tol > 0:
            raise ValidationError("max_iter must be >= 1 and tol > 0")
        if self.min_obs < 3:
            raise ValidationError("min_obs must be >= 3")


_STEP = np.array([0.1, 0.5, 0.5])
_PERTURB_SCALE = np.array([0.2, 0.5, 1.0])


@dataclass(frozen=True)
class AsymptoticCov:
    """Sandwich ingredients and standard errors.

    ``variance_scale`` turns asymptotic variances into finite-sample ones:
    ``1 / T`` for global fits and ``int K^2 / (T b)`` for local fits.
    ``cov_omega_alpha`` is ``kappa * inv(Omega) * variance_scale``.
    """

    sigma_hat: float
    omega_hat: np.ndarray
    kappa_hat: float
    variance_scale: float
    se_phi: float
    se_omega: float
    se_alpha: float
    cov_omega_alpha: np.ndarray
    singular: bool = False

    @property
    def avar_phi(self) -> float:
        """Asymptotic variance ``1 / Sigma`` of the AR coefficient."""
        return 1.0 / self.sigma_hat if self.sigma_hat > 0 else math.nan

    @property
    def avar_alpha(self) -> float:
        """Asymptotic variance ``kappa * inv(Omega)[1, 1]``."""
        if self.singular:
            return math.nan
        return self.cov_omega_alpha[1, 1] / self.variance_scale

    def to_dict(self) -> dict:
        return {
            "sigma_hat": self.sigma_hat,
            "omega_hat": self.omega_hat.tolist(),
            "kappa_hat": self.kappa_hat,
            "variance_scale": self.variance_scale,
            "se_phi": self.se_phi,
            "se_omega": self.se_omega,
            "se_alpha": self.se_alpha,
            "singular": self.singular,
        }


@dataclass(frozen=True)
class FitResult:
    params: DarParams
    loglik: float
    converged: bool
    iterations: int
    cov: AsymptoticCov
    n_used: int
    start_logliks: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "loglik": self.loglik,
            "converged": self.converged,
            "iterations": self.iterations,
            "n_used": self.n_used,
            "cov": self.cov.to_dict(),
        }


@dataclass(frozen=True)
class Residuals:
    """Standardized residuals; ``values[0]`` belongs to observation ``aligned_index + 1``."""

    values: np.ndarray
    aligned_index: int = 1

    def __len__(self) -> int:
        return len(self.values)


def _values(x) -> np.ndarray:
    if isinstance(x, DemeanedSeries):
        return np.ascontiguousarray(x.values)
    arr = np.ascontiguousarray(np.asarray(x, dtype=float))
    if arr.ndim != 1 or not np.all(np.isfinite(arr)):
        raise ValidationError("series must be a finite one-dimensional array")
    return arr


def qml_loglik(x, params: DarParams) -> float:
    """Gaussian quasi log-likelihood summed over ``t = 2..T``."""
    xv = _values(x)
    if len(xv) < 2:
        raise ValidationError("need at least 2 observations")
    xl, xc = xv[:-1], xv[1:]
    h = params.omega + params.alpha * xl**2
    return float(-0.5 * np.sum(np.log(h) + (xc - params.phi * xl) ** 2 / h))


def residuals(x, params: DarParams) -> Residuals:
    """``(x_t - phi x_{t-1}) / sqrt(omega + alpha x_{t-1}**2)`` for ``t = 2..T``."""
    xv = _values(x)
    if len(xv) < 2:
        raise ValidationError("need at least 2 observations")
    xl, xc = xv[:-1], xv[1:]
    eta = (xc - params.phi * xl) / np.sqrt(params.omega + params.alpha * xl**2)
    return Residuals(eta, 1)


def _cov_from_terms(xl, xc, params: DarParams, w: np.ndarray, variance_scale: float) -> AsymptoticCov:
    wn = w / w.sum()
    h = params.omega + params.alpha * xl**2
    x2 = xl**2
    sigma = float(np.sum(wn * x2 / h))
    inv_h2 = wn / h**2
    omega_mat = np.array(
        [[np.sum(inv_h2), np.sum(inv_h2 * x2)], [np.sum(inv_h2 * x2), np.sum(inv_h2 * x2 * x2)]]
    )
    eta = (xc - params.phi * xl) / np.sqrt(h)
    kappa = float(np.sum(wn * eta**4) - 1.0)
    singular = False
    se_phi = math.sqrt(variance_scale / sigma) if sigma > 0 else math.nan
    if sigma <= 0:
        singular = True
    cov_oa = np.full((2, 2), np.nan)
    se_omega = se_alpha = math.nan
    cond = np.linalg.cond(omega_mat) if np.all(np.isfinite(omega_mat)) else np.inf
    if cond < 1e12:
        cov_oa = kappa * np.linalg.inv(omega_mat) * variance_scale
        if cov_oa[0, 0] > 0 and cov_oa[1, 1] > 0:
            se_omega = math.sqrt(cov_oa[0, 0])
            se_alpha = math.sqrt(cov_oa[1, 1])
        else:
            singular = True
    else:
        singular = True
    return AsymptoticCov(
        sigma_hat=sigma,
        omega_hat=omega_mat,
        kappa_hat=kappa,
        variance_scale=variance_scale,
        se_phi=se_phi,
        se_omega=se_omega,
        se_alpha=se_alpha,
        cov_omega_alpha=cov_oa,
        singular=singular,
    )


def asymptotic_cov(x, params: DarParams) -> AsymptoticCov:
    """Plug-in estimates of ``Sigma``, ``Omega`` and ``kappa`` (kurtosis less one).

    Standard errors follow the block-diagonal limit law
    ``sqrt(T)(theta_hat - theta) -> N(0, diag(1/Sigma, kappa * inv(Omega)))``.
    A degenerate ``Sigma`` or an ill-conditioned ``Omega`` sets ``singular``
    and leaves the affected standard errors as NaN.
    """
    xv = _values(x)
    if len(xv) < 10:
        raise ValidationError("asymptotic covariance needs at least 10 observations")
    xl, xc = xv[:-1], xv[1:]
    return _cov_from_terms(xl, xc, params, np.ones(len(xl)), 1.0 / len(xv))


def _theta_to_params(theta: np.ndarray) -> DarParams:
    return DarParams(float(theta[0]), math.exp(theta[1]), math.exp(theta[2]))


def _starts(xl, xc, w, options: OptimizerOptions) -> list[np.ndarray]:
    phi0, omega0, alpha0 = _optim.moment_start(xl, xc, w)
    base = np.array([phi0, math.log(omega0), math.log(alpha0)])
    starts = [base]
    if options.n_starts > 1:
        rng = np.random.default_rng(options.seed)
        for _ in range(options.n_starts - 1):
            s = base + _PERTURB_SCALE * rng.standard_normal(3)
            s[0] = np.clip(s[0], -0.95 * _optim.PHI_MAX, 0.95 * _optim.PHI_MAX)
            s[1] = np.clip(s[1], *_optim.LOG_OMEGA_BOUNDS)
            s[2] = np.clip(s[2], _optim.LOG_ALPHA_BOUNDS[0] + 1, _optim.LOG_ALPHA_BOUNDS[1] - 1)
            starts.append(s)
    return starts


@dataclass
class _Optimum:
    theta: np.ndarray
    value: float
    iterations: int
    converged: bool
    start_values: list


def _optimize(xl, xc, w, starts, options: OptimizerOptions) -> _Optimum:
    wsum = float(w.sum())
    best = None
    start_values = []
    any_converged = False
    total_iter = 0
    for s in starts:
        start_values.append(_optim.neg_quasi_loglik(s, xl, xc, w, wsum))
        theta, f, it, _, conv = _optim.nelder_mead(
            s, _STEP, xl, xc, w, options.tol, options.max_iter
        )
        total_iter += it
        any_converged |= conv
        # prefer converged runs; among them the lowest objective
        key = (not conv, f)
        if best is None or key < best[0]:
            best = (key, theta, f, conv)
    _, theta, f, conv = best
    return _Optimum(theta, f, total_iter, conv, start_values)


def _check_informative(xl, xc) -> None:
    if np.ptp(xl) == 0 and np.ptp(xc) == 0:
        raise SingularFitError("all observations are equal; the likelihood is degenerate")


def fit_dar(x, options: OptimizerOptions | None = None) -> FitResult:
    """Global QML fit of a DAR(1).

    Raises
    ------
    ValidationError
        Fewer than ``options.min_obs`` observations.
    SingularFitError
        Constant input.
    FitError
        No start converged.
    """
    options = options or OptimizerOptions()
    xv = _values(x)
    if len(xv) < options.min_obs:
        raise ValidationError(f"need at least {options.min_obs} observations, got {len(xv)}")
    xl, xc = xv[:-1], xv[1:]
    _check_informative(xl, xc)
    w = np.ones(len(xl))
    opt = _optimize(xl, xc, w, _starts(xl, xc, w, options), options)
    if not opt.converged:
        raise FitError("no optimizer start converged")
    params = _theta_to_params(opt.theta)
    n_terms = len(xl)
    cov = _cov_from_terms(xl, xc, params, w, 1.0 / len(xv))
    return FitResult(
        params=params,
        loglik=-opt.value * n_terms,
        converged=opt.converged,
        iterations=opt.iterations,
        cov=cov,
        n_used=len(xv),
        start_logliks=tuple(-v * n_terms for v in opt.start_values),
    )


@dataclass(frozen=True)
class LocalFit:
    """Local estimates on a grid of rescaled times.

    Unestimated grid points (too few weighted terms, degenerate window or
    optimizer failure) carry ``None`` in ``params_at`` and ``cov_at``.
    """

    grid: np.ndarray
    params_at: tuple
    cov_at: tuple
    kernel: KernelSpec
    bandwidth: Bandwidth
    effective_n: np.ndarray
    T: int
    loglik_at: np.ndarray = field(default_factory=lambda: np.empty(0))
    converged_at: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=bool))

    def _param_array(self, name: str) -> np.ndarray:
        return np.array([getattr(p, name) if p is not None else np.nan for p in self.params_at])

    @property
    def phi(self) -> np.ndarray:
        return self._param_array("phi")

    @property
    def omega(self) -> np.ndarray:
        return self._param_array("omega")

    @property
    def alpha(self) -> np.ndarray:
        return self._param_array("alpha")

    @property
    def estimated(self) -> np.ndarray:
        return np.array([p is not None for p in self.params_at], dtype=bool)

    def se(self, name: str) -> np.ndarray:
        return np.array([getattr(cv, f"se_{name}") if cv is not None else np.nan for cv in self.cov_at])

    def params_at_times(self, c=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Parameters interpolated linearly over the estimated grid points.

        Defaults to the observation times ``t / T``; flat beyond the ends.
        """
        if c is None:
            c = rescaled_times(self.T)
        ok = self.estimated
        if not ok.any():
            raise FitError("local fit has no estimated grid points")
        g = self.grid[ok]
        return tuple(np.interp(c, g, arr[ok]) for arr in (self.phi, self.omega, self.alpha))


def _local_point(xl, xc, w_terms, c, options, warm):
    mask = w_terms > 0
    n_eff = int(mask.sum())
    wsum = float(w_terms[mask].sum())
    if n_eff < options.min_obs:
        return None, None, wsum, math.nan, False
    xl_c = np.ascontiguousarray(xl[mask])
    xc_c = np.ascontiguousarray(xc[mask])
    w_c = np.ascontiguousarray(w_terms[mask])
    if np.ptp(xl_c) == 0 and np.ptp(xc_c) == 0:
        return None, None, wsum, math.nan, False
    opt = None
    if warm is not None:
        opt = _optimize(xl_c, xc_c, w_c, [warm], replace(options, n_starts=1))
        if not opt.converged:
            opt = None
    if opt is None:
        opt = _optimize(xl_c, xc_c, w_c, _starts(xl_c, xc_c, w_c, options), options)
    if not opt.converged:
        return None, None, wsum, math.nan, False
    params = _theta_to_params(opt.theta)
    return params, opt.theta, wsum, -opt.value, True


def fit_tvdar(
    x,
    grid: Sequence[float] | np.ndarray,
    kernel: KernelSpec | str = EPANECHNIKOV,
    b: Bandwidth | float | None = None,
    options: OptimizerOptions | None = None,
) -> LocalFit:
    """Kernel-weighted local QML fit at each rescaled time in ``grid``.

    The bandwidth defaults to ``50 / T``. Standard errors use the local
    analogues of ``Sigma``, ``Omega`` and ``kappa`` scaled by
    ``int K^2 / (T b)``.
    """
    options = options or OptimizerOptions()
    kernel = kernel if isinstance(kernel, KernelSpec) else KernelSpec(kernel)
    xv = _values(x)
    T = len(xv)
    if T < 3:
        raise ValidationError("need at least 3 observations")
    bw = Bandwidth(50 / T if b is None else (b.b if isinstance(b, Bandwidth) else b))
    g = np.array([float(c) for c in grid], dtype=float)
    if g.ndim != 1 or len(g) == 0:
        raise ValidationError("grid must be a nonempty sequence")
    if np.any((g < 0) | (g > 1)):
        raise ValidationError("grid points must lie in [0, 1]")
    if np.any(np.diff(g) <= 0):
        raise ValidationError("grid must be strictly increasing")
    check_bandwidth(bw, T)
    xl, xc = xv[:-1], xv[1:]
    scale = kernel_l2_norm(kernel) / (T * bw.b)

    def weights_for(c):
        try:
            return weights_at(kernel, bw, c, T).weights[1:]
        except ValidationError:
            return np.zeros(T - 1)

    results = []
    if options.warm_start or options.threads <= 1:
        warm = None
        for c in g:
            out = _local_point(xl, xc, weights_for(c), c, options, warm if options.warm_start else None)
            if out[1] is not None:
                warm = out[1]
            results.append(out)
    else:
        with ThreadPoolExecutor(max_workers=options.threads) as pool:
            results = list(
                pool.map(lambda c: _local_point(xl, xc, weights_for(c), c, options, None), g)
            )

    params_at, cov_at, eff, ll, conv = [], [], [], [], []
    for c, (params, _, wsum, value, ok) in zip(g, results):
        params_at.append(params)
        eff.append(wsum)
        ll.append(value)
        conv.append(ok)
        if params is None:
            cov_at.append(None)
            continue
        w_terms = weights_for(c)
        mask = w_terms > 0
        cov_at.append(_cov_from_terms(xl[mask], xc[mask], params, w_terms[mask], scale))
    n_missing = sum(p is None for p in params_at)
    if n_missing:
        warnings.warn(f"{n_missing} of {len(g)} grid points could not be estimated", RuntimeWarning, stacklevel=2)
    return LocalFit(
        grid=g,
        params_at=tuple(params_at),
        cov_at=tuple(cov_at),
        kernel=kernel,
        bandwidth=bw,
        effective_n=np.array(eff),
        T=T,
        loglik_at=np.array(ll),
        converged_at=np.array(conv, dtype=bool),
    )


def local_residuals(x, fit: LocalFit) -> Residuals:
    """Standardized residuals using the local parameters at each ``t / T``."""
    xv = _values(x)
    if len(xv) != fit.T:
        raise ValidationError("series length differs from the fitted sample")
    phi, omega, alpha = fit.params_at_times()
    xl, xc = xv[:-1], xv[1:]
    eta = (xc - phi[1:] * xl) / np.sqrt(omega[1:] + alpha[1:] * xl**2)
    return Residuals(eta, 1)


@dataclass(frozen=True)
class Bands:
    """Pointwise normal bands per parameter, aligned with ``LocalFit.grid``."""

    level: float
    z: float
    estimate: dict
    lower: dict
    upper: dict


def local_confidence_bands(fit: LocalFit, level: float = 0.95) -> Bands:
    """``estimate +- z * sqrt(int K^2 * avar / (T b))`` for phi, omega and alpha."""
    if not 0 < level < 1:
        raise ValidationError(f"level must lie in (0, 1), got {level}")
    z = float(stats.norm.ppf(0.5 + level / 2))
    est, lo, hi = {}, {}, {}
    for name in ("phi", "omega", "alpha"):
        e = fit._param_array(name)
        se = fit.se(name)
        est[name] = e
        lo[name] = e - z * se
        hi[name] = e + z * se
    return Bands(level, z, est, lo, hi)
