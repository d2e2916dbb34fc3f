import datetime as dt

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from tvdar.core import PriceSeries
from tvdar.descriptive import acf, acf_by_year, fit_ar1, rolling_ar1, rolling_mean_var
from tvdar.exceptions import ValidationError


def _ar1(phi, n, seed, scale=None):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(n) * (1.0 if scale is None else scale)
    x = np.empty(n)
    x[0] = e[0]
    for t in range(1, n):
        x[t] = phi * x[t - 1] + e[t]
    return x


def test_constant_series():
    rs = rolling_mean_var(np.full(20, 3.0), window=5)
    assert np.all(rs.local_mean == 3.0) and np.all(rs.local_var == 0.0)
    np.testing.assert_array_equal(rs.ci_lower, rs.ci_upper)


def test_ramp():
    y = np.arange(1.0, 11.0)
    rs = rolling_mean_var(y, window=3)
    np.testing.assert_allclose(rs.local_mean, np.arange(3.0, 11.0) - 1, rtol=0, atol=1e-14)
    assert rs.dates[0] == 3  # one-based index of the window end


def test_full_window_reproduces_global():
    rng = np.random.default_rng(0)
    y = rng.normal(size=97)
    rs = rolling_mean_var(y, window=97)
    assert rs.local_mean[-1] == np.mean(y)
    assert rs.local_var[-1] == np.var(y)


def test_ci_modes():
    y = np.random.default_rng(1).normal(size=60) * 2
    std = rolling_mean_var(y, 10)
    pap = rolling_mean_var(y, 10, ci_mode="sqrt_sd")
    sd = np.sqrt(std.local_var)
    np.testing.assert_allclose(std.ci_upper - std.local_mean, 1.959963984540054 * sd / np.sqrt(10))
    np.testing.assert_allclose(pap.ci_upper - pap.local_mean, 1.959963984540054 * np.sqrt(sd / 10))
    with pytest.raises(ValidationError):
        rolling_mean_var(y, 10, ci_mode="x")
    with pytest.raises(ValidationError):
        rolling_mean_var(y, 61)


def test_ci_coverage():
    rng = np.random.default_rng(2)
    y = rng.normal(size=2049)
    rs = rolling_mean_var(y, window=50)
    cover = np.mean((rs.ci_lower <= 0) & (0 <= rs.ci_upper))
    assert abs(cover - 0.95) <= 0.05


def test_acf_basics():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(10**4)
    r = acf(x, 10)
    assert r[0] == 1.0
    assert np.all(np.abs(r[1:]) <= 0.05)
    with pytest.raises(ValidationError):
        acf(np.ones(10), 2)
    with pytest.raises(ValidationError):
        acf(x[:5], 4)


def test_acf_ar1():
    r = acf(_ar1(0.9, 10**5, 4), 1)
    assert 0.88 <= r[1] <= 0.92


@given(arrays(float, st.integers(5, 40), elements=st.floats(-100, 100)))
def test_acf_sign_even(x):
    if np.ptp(x) < 1e-6:
        return
    np.testing.assert_allclose(acf(x, 3), acf(-x, 3), rtol=1e-12, atol=1e-12)


def test_acf_by_year():
    start = dt.date(2019, 12, 1)
    dates = tuple(start + dt.timedelta(days=i) for i in range(100))
    y = np.random.default_rng(5).normal(size=100) + 1
    out = acf_by_year(PriceSeries(dates, y), 5)
    assert sorted(out) == [2019, 2020]
    np.testing.assert_allclose(out[2019], acf(y[:31], 5))


def test_fit_ar1_examples():
    alt = np.array([1.0, -1.0] * 10)
    f = fit_ar1(alt)
    assert f.rho == -1.0 and f.sigma2 == 0.0
    assert abs(fit_ar1(_ar1(0.674, 10**5, 6)).rho - 0.674) < 0.01
    with pytest.raises(ValidationError):
        fit_ar1(np.zeros(10))


@given(st.floats(-0.99, 0.99), st.floats(0.1, 10))
def test_fit_ar1_noiseless(phi, x0):
    x = x0 * phi ** np.arange(15)
    if np.min(np.abs(x[:-1])) < 1e-100:
        return
    assert fit_ar1(x).rho == pytest.approx(phi, rel=1e-12, abs=1e-15)


def test_rolling_ar1_definition():
    x = _ar1(0.5, 80, 7)
    res = rolling_ar1(x, window=20)
    assert len(res.rolling_rho) == 61 and res.end[0] == 20
    assert res.rolling_rho[0] == pytest.approx(fit_ar1(x[:20]).rho, rel=1e-14)
    assert np.isnan(res.rolling_sigma_e[0])
    # sigma_e at t = 40 uses rho(tau) for tau = 21..40
    t = 40
    rho = {e: r for e, r in zip(res.end, res.rolling_rho)}
    e = [x[tau - 1] - rho[tau] * x[tau - 2] for tau in range(t - 19, t + 1)]
    assert res.rolling_sigma_e[t - 20] == pytest.approx(np.sqrt(np.mean(np.square(e))), rel=1e-14)
    fixed = rolling_ar1(x, window=20, fixed_rho=True)
    e = x[t - 20:t] - rho[t] * x[t - 21:t - 1]
    assert fixed.rolling_sigma_e[t - 20] == pytest.approx(np.sqrt(np.mean(e**2)), rel=1e-14)


def test_rolling_ar1_stationary_no_trend():
    x = _ar1(0.6, 3000, 8)
    res = rolling_ar1(x, window=50)
    # non-overlapping windows for an approximately independent slope test
    r = res.rolling_rho[::50]
    from scipy import stats

    assert stats.linregress(np.arange(len(r)), r).pvalue > 0.05
    assert abs(np.mean(res.rolling_rho) - 0.6) < 0.05


def test_rolling_ar1_variance_break():
    scale = np.where(np.arange(1000) < 500, 1.0, 3.0)
    x = _ar1(0.3, 1000, 9, scale * 1.0)
    res = rolling_ar1(x, window=50)
    s = res.rolling_sigma_e
    pre = np.nanmean(s[(res.end > 150) & (res.end <= 500)])
    jumped = res.end[np.flatnonzero((res.end > 500) & (s > 2 * pre))[0]]
    assert jumped - 500 <= 100


def test_rolling_ar1_constant_windows():
    x = np.concatenate([np.zeros(30), np.random.default_rng(0).normal(size=30)])
    res = rolling_ar1(x, window=10)
    assert np.isnan(res.rolling_rho[0])
    assert np.isfinite(res.rolling_rho[-1])
