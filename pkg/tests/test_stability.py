import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tvdar.core import DarParams
from tvdar.estimation import (
    AsymptoticCov,
    Residuals,
    fit_dar,
    fit_tvdar,
    local_residuals,
    residuals,
)
from tvdar.exceptions import NumericalError, ValidationError
from tvdar.kernels import RECTANGULAR, weights_at
from tvdar.model import GAUSSIAN, UNIFORM_PM1, UNIFORM_STANDARDIZED, ParamPath, draw_noise, simulate_dar, simulate_tvdar
from tvdar.stability import (
    lyapunov_bootstrap,
    lyapunov_local,
    lyapunov_local_path,
    lyapunov_plugin,
    lyapunov_quadrature,
    lyapunov_uniform,
    plugin_terms,
    stability_report,
    xi_local,
    xi_measure,
    xi_wald_test,
)

# 30-digit mpmath quadrature (split at the singularity), frozen
MP_GAUSS = {
    (0.7, 0.5): -0.56233972938506176,
    (1.0, 0.01): -0.0050776416777654543,
    (0.3, 0.8): -0.69154225437583035,
    (0.0, 1.0): -0.63518142273073909,
    (1.0, 0.5): -0.24231338291163244,
    (0.5, 0.1): -0.92154130875945928,
}
MP_UNIFORM = {
    (0.6, 0.3): -0.71480686204204266,
    (0.2, 0.9): -1.0302904285070563,
    (0.9, 0.1): -0.12674704030770937,
    (0.5, 0.25): -1.0,
}
MP_UNIFORM_STD = {
    (0.4, 0.6): -0.66097919535843976,
    (0.8, 0.2): -0.47832927142621967,
}


def test_uniform_examples():
    assert lyapunov_uniform(0.5, 0.25) == pytest.approx(-1.0, abs=1e-15)
    assert lyapunov_uniform(0.0, 1.0) == pytest.approx(-1.0, abs=1e-15)
    assert lyapunov_uniform(-0.7, 0.5) == lyapunov_uniform(0.7, 0.5)
    assert lyapunov_uniform(0.3, 0.0) == math.log(0.3)
    with pytest.raises(ValidationError):
        lyapunov_uniform(0.0, 0.0)


def test_uniform_phi_zero_is_log_s_minus_one():
    for a in (0.1, 0.5, 2.0):
        assert lyapunov_uniform(0.0, a) == pytest.approx(0.5 * math.log(a) - 1, abs=1e-14)


@pytest.mark.parametrize("pa,val", sorted(MP_UNIFORM.items()))
def test_uniform_matches_mpmath(pa, val):
    assert lyapunov_uniform(*pa) == pytest.approx(val, abs=1e-13)


@pytest.mark.parametrize("pa,val", sorted(MP_GAUSS.items()))
def test_quadrature_gaussian_matches_mpmath(pa, val):
    assert lyapunov_quadrature(*pa, GAUSSIAN) == pytest.approx(val, abs=1e-9)


@pytest.mark.parametrize("pa,val", sorted(MP_UNIFORM_STD.items()))
def test_quadrature_uniform_std_matches_mpmath(pa, val):
    assert lyapunov_quadrature(*pa, UNIFORM_STANDARDIZED) == pytest.approx(val, abs=1e-9)


def test_gaussian_second_order_expansion():
    lam = lyapunov_quadrature(1.0, 0.01, GAUSSIAN)
    assert -0.0055 <= lam <= -0.0045


def test_quadrature_alpha_zero_exact():
    assert lyapunov_quadrature(0.37, 0.0) == math.log(0.37)
    with pytest.raises(ValidationError):
        lyapunov_quadrature(0.0, 0.0)


def test_uniform_vs_quadrature_grid():
    for phi in np.linspace(-1, 1, 21):
        for alpha in np.linspace(0.1, 1, 10):
            assert abs(lyapunov_uniform(phi, alpha) - lyapunov_quadrature(phi, alpha, UNIFORM_PM1)) < 1e-6


def test_continuity_at_boundary():
    for alpha in (0.04, 0.25, 0.7):
        s = math.sqrt(alpha)
        target = math.log(2 * s) - 1
        for eps in (1e-7, 1e-9):
            # one-sided slopes are finite, so the gap shrinks linearly in eps
            assert abs(lyapunov_uniform(s + eps, alpha) - target) < 100 * eps
            assert abs(lyapunov_uniform(s - eps, alpha) - target) < 100 * eps
        assert abs(lyapunov_uniform(s, alpha) - target) < 1e-9


def test_monotone_in_phi_beyond_sqrt_alpha():
    for alpha in (0.1, 0.3, 0.6):
        phis = np.linspace(math.sqrt(alpha), 1.5, 30)
        vals = [lyapunov_uniform(p, alpha) for p in phis]
        assert np.all(np.diff(vals) > 0)


@given(st.floats(-1.5, 1.5), st.floats(0.01, 2.0))
def test_evenness_property(phi, alpha):
    assert lyapunov_uniform(phi, alpha) == lyapunov_uniform(-phi, alpha)
    assert abs(lyapunov_quadrature(phi, alpha) - lyapunov_quadrature(-phi, alpha)) < 1e-8


def test_plugin_lln_at_truth():
    p = DarParams(0.7, 0.01, 0.5)
    eta = draw_noise(GAUSSIAN, 10**4, seed=3)
    lam = lyapunov_plugin(p, Residuals(eta))
    assert abs(lam - lyapunov_quadrature(0.7, 0.5)) < 0.02


def test_plugin_zero_residuals():
    p = DarParams(0.6, 0.1, 0.3)
    assert lyapunov_plugin(p, np.zeros(10)) == pytest.approx(math.log(0.6), abs=1e-15)


def test_plugin_excludes_exact_zero_terms():
    p = DarParams(0.5, 0.1, 0.25)
    eta = np.array([-1.0, 1.0, 0.0])
    with pytest.warns(RuntimeWarning, match="1 plug-in terms"):
        lam = lyapunov_plugin(p, eta)
    assert lam == pytest.approx(np.mean([math.log(1.0), math.log(0.5)]))


def test_plugin_alpha_zero():
    assert lyapunov_plugin(DarParams(0.4, 1.0, 0.0), np.array([0.3, 2.0])) == math.log(0.4)


def test_local_with_full_uniform_weights_equals_plugin():
    x = simulate_dar(DarParams(0.6, 0.01, 0.4), 400, seed=4)
    lf = fit_tvdar(x, [1.0], RECTANGULAR, 1.0)
    r = local_residuals(x, lf)
    lam_local = lyapunov_local(lf, r, 1.0)
    terms = plugin_terms(lf, r)
    assert lam_local == pytest.approx(np.mean(terms), rel=1e-13)
    # one grid point: the local parameters are constant, so this is the global plug-in
    assert lam_local == pytest.approx(lyapunov_plugin(lf.params_at[0], r), rel=1e-13)


def test_local_empty_window():
    x = simulate_dar(DarParams(0.6, 0.01, 0.4), 400, seed=4)
    lf = fit_tvdar(x, [0.5, 1.0], RECTANGULAR, 0.5)
    r = local_residuals(x, lf)
    with pytest.raises(ValidationError):
        lyapunov_local(lf, r, 0.0, b=0.001)


def test_local_lambda_tracks_increasing_alpha():
    path = ParamPath(lambda c: 0.3, lambda c: 0.01, lambda c: 0.1 + 0.9 * c)
    x = simulate_tvdar(path, 10**4, seed=5)
    grid = np.arange(1, 20) / 20
    lf = fit_tvdar(x, grid, "epanechnikov", 0.1)
    lam = lyapunov_local_path(x, lf)
    assert np.polyfit(grid, lam, 1)[0] > 0


@pytest.mark.slow
def test_local_lambda_negative_under_constant_params():
    fractions = []
    grid = np.arange(1, 10) / 10
    for r in range(500):
        x = simulate_dar(DarParams(0.5, 0.01, 0.3), 1000, seed=[17, r])
        lf = fit_tvdar(x, grid, "epanechnikov", 0.2)
        lam = lyapunov_local_path(x, lf)
        fractions.append(np.mean(lam < 0))
    assert np.mean(fractions) >= 0.95


def _cov(sigma, omega_mat, kappa, scale):
    inv = kappa * np.linalg.inv(omega_mat) * scale
    return AsymptoticCov(sigma, omega_mat, kappa, scale, math.sqrt(scale / sigma), math.sqrt(inv[0, 0]), math.sqrt(inv[1, 1]), inv)


def test_xi_measure_values():
    om = np.array([[2.0, 0.5], [0.5, 1.0]])
    cov = _cov(4.0, om, 2.0, 1 / 100)
    p = DarParams(0.7, 0.01, 0.5)
    xe = xi_measure(p, cov)
    assert xe.xi == 0.99
    expected_v = 4 * 0.49 / 4.0 + 2.0 * np.linalg.inv(om)[1, 1]
    assert xe.variance == pytest.approx(expected_v, rel=1e-13)
    assert xe.se == pytest.approx(math.sqrt(expected_v / 100), rel=1e-13)
    assert xi_measure(p, cov, T=400).se == pytest.approx(math.sqrt(expected_v / 400), rel=1e-13)
    assert DarParams(0.0, 1.0, 0.0).xi == 0.0
    assert DarParams(0.699, 1e-5, 0.484).xi == pytest.approx(0.972601, abs=1e-12)


def test_xi_measure_singular():
    cov = AsymptoticCov(0.0, np.zeros((2, 2)), 2.0, 0.01, math.nan, math.nan, math.nan, np.full((2, 2), np.nan), True)
    with pytest.raises(NumericalError):
        xi_measure(DarParams(0.5, 1.0, 0.1), cov)


def test_wald_at_null_value():
    t = xi_wald_test(0.9, 2.0, 500, 0.9)
    assert t.statistic == 0.0 and t.p_value == 0.5 and not t.reject
    with pytest.raises(ValidationError):
        xi_wald_test(0.9, 0.0, 500)


def test_wald_one_sided_direction():
    assert xi_wald_test(1.3, 1.0, 1000, 1.0).reject
    assert not xi_wald_test(0.7, 1.0, 1000, 1.0).reject


@pytest.mark.slow
def test_wald_power():
    p = DarParams(0.8, 0.01, 0.56)
    rej = 0
    for r in range(200):
        x = simulate_dar(p, 2000, seed=[23, r])
        f = fit_dar(x)
        xe = xi_measure(f.params, f.cov)
        rej += xi_wald_test(xe.xi, xe.variance, 2000, 1.0).reject
    assert rej / 200 > 0.5


def test_conservativeness_point():
    p = DarParams(1.0, 0.01, 0.01)
    assert p.xi > 1
    assert lyapunov_quadrature(p.phi, p.alpha, GAUSSIAN) < 0


def test_bootstrap_band():
    band = lyapunov_bootstrap(DarParams(0.7, 0.01, 0.5), 100, reps=40, seed=3)
    assert len(band.samples) + band.n_failed == 40
    assert band.lower < band.upper
    again = lyapunov_bootstrap(DarParams(0.7, 0.01, 0.5), 100, reps=40, seed=3)
    np.testing.assert_array_equal(band.samples, again.samples)


def test_stability_report_and_local_xi():
    x = simulate_dar(DarParams(0.5, 0.01, 0.3), 1500, seed=8)
    f = fit_dar(x)
    lf = fit_tvdar(x, np.linspace(0.1, 1, 10), "epanechnikov", 0.15)
    rep = stability_report(x, f, UNIFORM_PM1, lf)
    assert rep.lambda_analytic == pytest.approx(rep.lambda_quadrature, abs=1e-6)
    assert rep.xi_variance > 0
    assert rep.local_lambda.shape == (10,)
    lx = xi_local(lf)
    assert np.all(lx.lower <= lx.xi) and np.all(lx.xi <= lx.upper)
    d = rep.to_dict()
    assert set(d) >= {"lambda_plugin", "xi", "xi_variance", "local", "wald"}
