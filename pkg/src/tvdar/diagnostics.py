"""Residual diagnostics.

Two families of checks:

* portmanteau whiteness tests (Ljung-Box), applied once or over rolling
  windows with a refit per window;
* the Chandler-Polonik test for a constant variance function, built from
  counts of large squared residuals and calibrated by the supremum of a
  Brownian bridge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .estimation import LocalFit, OptimizerOptions, _values, fit_dar, residuals
from .exceptions import NumericalError, ValidationError

__all__ = [
    "TestResult",
    "CpResult",
    "WhitenessResult",
    "ljung_box",
    "rolling_whiteness",
    "upper_quantile_sq_residuals",
    "g_process",
    "cp_statistic",
    "brownian_bridge_pvalue",
]


@dataclass(frozen=True)
class TestResult:
    """Outcome of a hypothesis test; ``reject`` is ``p_value < level``."""

    __test__ = False  # keep pytest from collecting this class

    name: str
    statistic: float
    p_value: float
    level: float
    reject: bool
    nuisance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "level": self.level,
            "reject": self.reject,
            "nuisance": dict(self.nuisance),
        }


def ljung_box(series, lags: int = 10, level: float = 0.05) -> TestResult:
    """Ljung-Box portmanteau statistic ``n(n+2) sum r_k^2 / (n-k)``.

    The p-value is the chi-square upper tail with ``lags`` degrees of freedom;
    no degrees-of-freedom correction is made for squared residuals.
    """
    x = np.asarray(series, dtype=float)
    n = len(x)
    if lags < 1:
        raise ValidationError("lags must be >= 1")
    if n <= lags + 1:
        raise ValidationError(f"need more than {lags + 1} observations, got {n}")
    d = x - x.mean()
    denom = float(d @ d)
    if denom == 0.0:
        raise ValidationError("constant input: autocorrelations are undefined")
    r = np.array([d[k:] @ d[:-k] for k in range(1, lags + 1)]) / denom
    q = float(n * (n + 2) * np.sum(r**2 / (n - np.arange(1, lags + 1))))
    p = float(stats.chi2.sf(q, lags))
    return TestResult("ljung_box", q, p, level, p < level, {"lags": lags, "n": n})


@dataclass(frozen=True)
class WhitenessResult:
    """Rolling Ljung-Box rejections on residuals and squared residuals.

    Per-window arrays are indexed by the window's last observation
    (``end[i]`` is one-based); skipped windows hold NaN.
    """

    fraction_reject_eta: float
    fraction_reject_eta_sq: float
    end: np.ndarray
    p_eta: np.ndarray
    p_eta_sq: np.ndarray
    n_skipped: int
    window: int
    lags: int
    level: float

    def to_dict(self) -> dict:
        return {
            "fraction_reject_eta": self.fraction_reject_eta,
            "fraction_reject_eta_sq": self.fraction_reject_eta_sq,
            "n_windows": int(len(self.end)),
            "n_skipped": self.n_skipped,
            "window": self.window,
            "lags": self.lags,
            "level": self.level,
        }


def rolling_whiteness(
    x,
    window: int = 50,
    lags: int = 10,
    level: float = 0.05,
    options: OptimizerOptions | None = None,
) -> WhitenessResult:
    """Refit on each trailing window of ``window`` observations and test its residuals."""
    xv = _values(x)
    if window < lags + 5:
        raise ValidationError(f"window must be >= lags + 5 = {lags + 5}")
    if window > len(xv):
        raise ValidationError("window exceeds the series length")
    ends = np.arange(window, len(xv) + 1)
    p1 = np.full(len(ends), np.nan)
    p2 = np.full(len(ends), np.nan)
    skipped = 0
    for i, t in enumerate(ends):
        seg = xv[t - window:t]
        try:
            fit = fit_dar(seg, options)
            eta = residuals(seg, fit.params).values
            p1[i] = ljung_box(eta, lags, level).p_value
            p2[i] = ljung_box(eta**2, lags, level).p_value
        except (NumericalError, ValidationError):
            skipped += 1
    done = ~np.isnan(p1)
    if not done.any():
        raise NumericalError("every window failed")
    return WhitenessResult(
        fraction_reject_eta=float(np.mean(p1[done] < level)),
        fraction_reject_eta_sq=float(np.mean(p2[done] < level)),
        end=ends,
        p_eta=p1,
        p_eta_sq=p2,
        n_skipped=skipped,
        window=window,
        lags=lags,
        level=level,
    )


def upper_quantile_sq_residuals(resid_sq, gamma: float, a: float = 0.0, b: float = 1.0) -> float:
    """Smallest observed value ``q`` with at most a ``gamma`` fraction strictly above it.

    Only entries with rescaled position in ``[a, b]`` are used.
    """
    if not 0.0 < gamma < 1.0:
        raise ValidationError("gamma must lie in (0, 1)")
    v = np.asarray(resid_sq, dtype=float)
    n = len(v)
    if n == 0:
        raise ValidationError("empty input")
    if (a, b) != (0.0, 1.0):
        if not 0.0 <= a < b <= 1.0:
            raise ValidationError("need 0 <= a < b <= 1")
        pos = np.arange(1, n + 1) / n
        v = v[(pos >= a) & (pos <= b)]
        if len(v) == 0:
            raise ValidationError("no observations in [a, b]")
        n = len(v)
    s = np.sort(v)
    above = n - np.searchsorted(s, s, side="right")
    # the count above is nonincreasing along the sorted array
    ok = np.flatnonzero(above <= gamma * n + 1e-9 * n)
    return float(s[ok[0]])


def g_process(resid_sq, q_sq: float, alpha: float) -> float:
    """``(1/T) #{t <= floor(alpha T) : resid_sq_t >= q_sq}``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError("alpha must lie in [0, 1]")
    v = np.asarray(resid_sq, dtype=float)
    n = len(v)
    k = int(math.floor(alpha * n + 1e-9))
    return float(np.count_nonzero(v[:k] >= q_sq)) / n


def _theta_cdf(x: float) -> float:
    # P(sup|B| <= x) in the dual (theta-function) form, accurate for small x
    s = 0.0
    k = 1
    c = math.pi**2 / (8.0 * x * x)
    while True:
        term = math.exp(-k * k * c)
        s += term
        if term < 1e-17:
            break
        k += 2
    return math.sqrt(2.0 * math.pi) / x * s


def brownian_bridge_pvalue(stat: float) -> float:
    """``P(sup_t |B(t)| >= stat) = 2 sum_k (-1)^(k+1) exp(-2 k^2 stat^2)``.

    The alternating series is truncated once a term drops below 1e-12.
    Below ``stat = 0.5`` it converges slowly, so the equivalent theta-function
    form of the distribution function is used there.
    """
    x = float(stat)
    if not x >= 0:
        raise ValidationError("stat must be >= 0")
    if x == 0.0:
        return 1.0
    if x < 0.5:
        return float(min(1.0, max(0.0, 1.0 - _theta_cdf(x))))
    p = 0.0
    k = 1
    while True:
        term = 2.0 * math.exp(-2.0 * k * k * x * x)
        p += term if k % 2 else -term
        if term < 1e-12:
            break
        k += 1
    return float(min(1.0, max(0.0, p)))


@dataclass(frozen=True)
class CpResult:
    """Chandler-Polonik statistic with its profile.

    ``profile`` holds ``(alpha, value)`` pairs on the requested grid plus the
    exact supremum point; ``statistic`` is the largest value in it.
    """

    statistic: float
    gamma: float
    quantile_sq: float
    profile: np.ndarray
    argmax_alpha: float
    p_value: float
    n: int

    def test_result(self, level: float = 0.05) -> TestResult:
        return TestResult(
            "cp_homoscedasticity",
            self.statistic,
            self.p_value,
            level,
            self.p_value < level,
            {"gamma": self.gamma, "argmax_alpha": self.argmax_alpha, "quantile_sq": self.quantile_sq},
        )

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "gamma": self.gamma,
            "quantile_sq": self.quantile_sq,
            "argmax_alpha": self.argmax_alpha,
            "p_value": self.p_value,
            "n": self.n,
        }


def cp_profile(resid_sq, gamma: float, alpha_grid_step: float = 0.001, a: float = 0.0, b: float = 1.0) -> CpResult:
    """CP statistic from squared residuals directly.

    ``G`` is a right-continuous step function with jumps at ``k/n``, so
    ``|G(alpha) - alpha gamma|`` peaks either at a jump or just before one.
    Both candidates are evaluated at every jump, which makes the supremum
    exact regardless of ``alpha_grid_step``.
    """
    v = np.asarray(resid_sq, dtype=float)
    n = len(v)
    if n < 2:
        raise ValidationError("need at least 2 residuals")
    if not 0.0 < alpha_grid_step <= 1.0:
        raise ValidationError("alpha_grid_step must lie in (0, 1]")
    if np.ptp(v) == 0:
        raise ValidationError("degenerate residuals: all squared residuals are equal")
    q = upper_quantile_sq_residuals(v, gamma, a, b)
    scale = math.sqrt(n / (gamma * (1.0 - gamma)))
    counts = np.concatenate(([0], np.cumsum(v >= q)))  # counts[k] = #{t <= k}
    k = np.arange(n + 1)
    at_jump = scale * np.abs(counts / n - k * gamma / n)
    # left limit at (k+1)/n keeps the count of the first k terms
    left = scale * np.abs(counts[:-1] / n - (k[1:]) * gamma / n)
    j1 = int(np.argmax(at_jump))
    j2 = int(np.argmax(left))
    if left[j2] > at_jump[j1]:
        sup, arg = float(left[j2]), (j2 + 1) / n
    else:
        sup, arg = float(at_jump[j1]), j1 / n
    m = int(round(1.0 / alpha_grid_step))
    grid = np.linspace(0.0, 1.0, m + 1)
    kg = np.floor(grid * n + 1e-9).astype(int)
    vals = scale * np.abs(counts[kg] / n - grid * gamma)
    prof = np.column_stack((np.append(grid, arg), np.append(vals, sup)))
    prof = prof[np.argsort(prof[:, 0], kind="stable")]
    # grid values can differ from the jump values in the last ulp
    i = int(np.argmax(prof[:, 1]))
    sup, arg = float(prof[i, 1]), float(prof[i, 0])
    return CpResult(sup, gamma, q, prof, arg, brownian_bridge_pvalue(sup), n)


def cp_statistic(
    x,
    fit: LocalFit,
    gamma: float = 0.9,
    alpha_grid_step: float = 0.001,
    a: float = 0.0,
    b: float = 1.0,
) -> CpResult:
    """Chandler-Polonik test of a constant variance function.

    Residuals are unstandardized, ``x_t - phi_hat(t/T) x_{t-1}`` for
    ``t = 2..T``; the ``T - 1`` residuals play the role of the sample in
    ``G`` and in the normalization.
    """
    xv = _values(x)
    if len(xv) != fit.T:
        raise ValidationError("series length differs from the fitted sample")
    phi, _, _ = fit.params_at_times()
    eps = xv[1:] - phi[1:] * xv[:-1]
    return cp_profile(eps**2, gamma, alpha_grid_step, a, b)
