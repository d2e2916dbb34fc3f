"""Command-line interface.

Every subcommand writes ``report.json`` (schema-checked) and plot-data CSVs
into ``--out``. The report echoes the full effective configuration; passing
that report back through ``--config`` reproduces the run exactly.

Option precedence is built-in defaults, then the ``--config`` file, then
explicit flags. A flag that contradicts the config file wins and triggers a
warning.

Exit codes: 0 success, 2 input or validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .core import DarParams, demean_global, demean_local, rescaled_times
from .descriptive import acf, acf_by_year, rolling_ar1, rolling_mean_var, fit_ar1
from .diagnostics import cp_statistic, ljung_box, rolling_whiteness
from .estimation import (
    OptimizerOptions,
    fit_dar,
    fit_tvdar,
    local_confidence_bands,
    residuals,
)
from .exceptions import NumericalError, ValidationError
from .forecast import mspe, one_step_forecast
from .io import Report, emit_report, parse_csv, parse_labels, write_price_csv
from .core import PriceSeries
from .model import NoiseDistribution, ParamPath, simulate_dar, simulate_tvdar
from .montecarlo import ExperimentConfig, lyapunov_surface, run_estimator_density_experiment
from .stability import stability_report, xi_measure, xi_wald_test

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3

THREADS_ENV = "TVDAR_THREADS"

_DATA = {"input": None, "labels": None, "demean": "global", "demean_window": 50}
_LOCAL = {"kernel": "epanechnikov", "window": 50, "bandwidth": None, "grid_step": None, "level": 0.95}
_MODEL = {"phi": 0.7, "omega": 0.01, "alpha": 0.5, "noise": "gaussian_standard", "seed": 0, "burn_in": 500}

DEFAULTS = {
    "simulate": {
        **_MODEL,
        "T": 1361,
        "phi_end": None,
        "omega_end": None,
        "alpha_end": None,
        "level_shift": 1.0,
        "start_date": "2017-11-09",
    },
    "fit": {**_DATA},
    "fit-local": {**_DATA, **_LOCAL},
    "stability": {**_DATA, **_LOCAL, "quad_noise": "gaussian_standard", "xi0": 1.0},
    "forecast": {**_DATA, "window": 50, "level": 0.95, "interval": "parameter"},
    "test-whiteness": {**_DATA, "window": 50, "lags": 10, "level": 0.05},
    "test-homoscedasticity": {
        **_DATA,
        **_LOCAL,
        "kernel": "rectangular_asymmetric",
        "gammas": [0.7, 0.8, 0.9],
        "alpha_step": 0.001,
        "level": 0.05,
    },
    "test-xi": {**_DATA, "xi0": 1.0, "level": 0.05},
    "describe": {**_DATA, "window": 50, "level": 0.95, "ci_mode": "standard", "max_lag": 30},
    "montecarlo": {
        **_MODEL,
        "T_values": [50, 100],
        "reps": 4000,
        "targets": ["phi", "omega", "alpha", "lambda2", "xi"],
        "surface": True,
        "surface_noise": "uniform_pm1",
    },
}

# keys that locate files rather than define the computation
_NOT_ECHOED = {"out", "threads"}


def _resolve_threads(value) -> int:
    if value is None:
        env = os.environ.get(THREADS_ENV)
        if env is None:
            return 1
        try:
            value = int(env)
        except ValueError:
            raise ValidationError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    if int(value) < 1:
        raise ValidationError("threads must be >= 1")
    return int(value)


def _load_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            tree = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path}: line {exc.lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(tree, dict):
        raise ValidationError(f"config {path}: top level must be an object")
    # a previous report can be used directly as a config
    if "metadata" in tree and "config" in tree:
        tree = tree["config"]
    return dict(tree)


def effective_config(command: str, explicit: dict, config_path=None) -> dict:
    """Merge defaults, the config file and explicit flags (in that order)."""
    cfg = dict(DEFAULTS[command])
    from_file = {}
    if config_path is not None:
        from_file = _load_config_file(config_path)
        file_cmd = from_file.pop("command", command)
        if file_cmd != command:
            raise ValidationError(f"config was written for {file_cmd!r}, not {command!r}")
        unknown = set(from_file) - set(cfg) - _NOT_ECHOED
        if unknown:
            raise ValidationError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        cfg.update(from_file)
    for k, v in explicit.items():
        if k in from_file and from_file[k] != v:
            warnings.warn(f"--{k.replace('_', '-')}={v!r} overrides config value {from_file[k]!r}", UserWarning, stacklevel=2)
        cfg[k] = v
    cfg["command"] = command
    return cfg


def _check_range(cfg: dict, key: str, lo=None, hi=None, integer=False) -> None:
    v = cfg.get(key)
    if v is None:
        return
    if integer and int(v) != v:
        raise ValidationError(f"{key} must be an integer")
    if (lo is not None and v < lo) or (hi is not None and v > hi):
        raise ValidationError(f"{key}={v} outside [{lo}, {hi}]")


def _validate(cfg: dict) -> None:
    for key in ("window", "demean_window", "max_lag", "lags", "reps", "T"):
        _check_range(cfg, key, 1, None, integer=True)
    for key in ("level",):
        _check_range(cfg, key, 0, 1)
        if key in cfg and not 0 < cfg[key] < 1:
            raise ValidationError(f"{key} must lie in (0, 1)")
    _check_range(cfg, "bandwidth", 0, 1)
    _check_range(cfg, "grid_step", 0, 1)
    _check_range(cfg, "alpha_step", 0, 1)
    for g in cfg.get("gammas", []):
        if not 0 < g < 1:
            raise ValidationError("each gamma must lie in (0, 1)")
    if "input" in cfg:
        if cfg["input"] is None:
            raise ValidationError("--input is required")
        p = Path(cfg["input"]).expanduser()
        if not p.is_file():
            raise ValidationError(f"input file not found: {p}")
        cfg["input"] = str(p.resolve())
    if cfg.get("labels") is not None:
        p = Path(cfg["labels"]).expanduser()
        if not p.is_file():
            raise ValidationError(f"labels file not found: {p}")
        cfg["labels"] = str(p.resolve())
    if cfg.get("demean") not in (None, "global", "local"):
        raise ValidationError("demean must be 'global' or 'local'")


def _load(cfg: dict):
    labels = parse_labels(cfg["labels"]) if cfg.get("labels") else {}
    series = parse_csv(cfg["input"], labels)
    if cfg["demean"] == "global":
        x = demean_global(series)
    else:
        x = demean_local(series, cfg["demean_window"])
    return series, x


def _options(threads: int) -> OptimizerOptions:
    return OptimizerOptions(threads=threads)


def _local_fit(x, cfg: dict, threads: int):
    T = len(x)
    b = cfg["bandwidth"] if cfg["bandwidth"] is not None else cfg["window"] / T
    if cfg["grid_step"] is None:
        grid = rescaled_times(T)
    else:
        step = cfg["grid_step"]
        grid = np.arange(1, int(math.floor(1 / step + 1e-9)) + 1) * step
        grid = np.minimum(grid, 1.0)
    return fit_tvdar(x, grid, cfg["kernel"], b, _options(threads))


def _label_of(series: PriceSeries, d):
    return series.labels.get(d, "")


# -- commands -----------------------------------------------------------------


def cmd_simulate(cfg: dict, threads: int, out: Path) -> Report:
    p0 = DarParams(cfg["phi"], cfg["omega"], cfg["alpha"])
    ends = [cfg["phi_end"], cfg["omega_end"], cfg["alpha_end"]]
    if all(e is None for e in ends):
        x = simulate_dar(p0, cfg["T"], cfg["noise"], cfg["seed"], cfg["burn_in"])
    else:
        start = p0.as_array()
        stop = [s if e is None else e for s, e in zip(start, ends)]
        path = ParamPath.from_table([0.0, 1.0], *zip(start, stop))
        x = simulate_tvdar(path, cfg["T"], cfg["noise"], cfg["seed"], cfg["burn_in"])
    d0 = dt.date.fromisoformat(cfg["start_date"])
    dates = tuple(d0 + dt.timedelta(days=i) for i in range(cfg["T"]))
    series = PriceSeries(dates, x.values + cfg["level_shift"])
    out.mkdir(parents=True, exist_ok=True)
    write_price_csv(out / "simulated.csv", series)
    v = x.values
    return Report(
        "simulate",
        cfg,
        {
            "series_file": "simulated.csv",
            "n": len(v),
            "mean": float(np.mean(v)),
            "variance": float(np.var(v)),
            "min": float(np.min(v)),
            "max": float(np.max(v)),
        },
    )


def cmd_fit(cfg: dict, threads: int, out: Path) -> Report:
    series, x = _load(cfg)
    fit = fit_dar(x, _options(threads))
    res = fit.to_dict()
    res["mean_used"] = x.mean_used if np.isscalar(x.mean_used) else None
    res["xi"] = fit.params.xi
    return Report("fit", cfg, res)


def _local_tables(series, x, lf, level):
    bands = local_confidence_bands(lf, level)
    tables = {}
    for name in ("phi", "omega", "alpha"):
        tables[f"{name}_local"] = (
            ["c", f"{name}_hat", "lower", "upper"],
            zip(lf.grid, bands.estimate[name], bands.lower[name], bands.upper[name]),
        )
    phi, omega, alpha = lf.params_at_times()
    xv = x.values
    sigma = np.sqrt(omega[1:] + alpha[1:] * xv[:-1] ** 2)
    dates = series.timestamps[1:]
    tables["cond_volatility"] = (
        ["date", "c", "sigma"],
        list(zip(dates, rescaled_times(lf.T)[1:], sigma)),
    )
    return tables


def cmd_fit_local(cfg: dict, threads: int, out: Path) -> Report:
    series, x = _load(cfg)
    lf = _local_fit(x, cfg, threads)
    res = {
        "T": lf.T,
        "kernel": lf.kernel.kind,
        "bandwidth": lf.bandwidth.b,
        "n_grid": len(lf.grid),
        "n_estimated": int(lf.estimated.sum()),
        "summary": {
            name: {
                "min": float(np.nanmin(getattr(lf, name))),
                "median": float(np.nanmedian(getattr(lf, name))),
                "max": float(np.nanmax(getattr(lf, name))),
            }
            for name in ("phi", "omega", "alpha")
        },
    }
    return Report("fit-local", cfg, res, plot_data=_local_tables(series, x, lf, cfg["level"]))


def cmd_stability(cfg: dict, threads: int, out: Path) -> Report:
    series, x = _load(cfg)
    fit = fit_dar(x, _options(threads))
    lf = _local_fit(x, cfg, threads)
    rep = stability_report(x, fit, cfg["quad_noise"], lf, cfg["xi0"], cfg["level"])
    res = rep.to_dict()
    res.pop("local", None)
    res["params"] = fit.params.to_dict()
    lam = rep.local_lambda
    res["local_summary"] = {
        "fraction_lambda_negative": float(np.mean(lam[np.isfinite(lam)] < 0)) if np.isfinite(lam).any() else None,
        "fraction_xi_below_1": float(np.mean(rep.local_xi.xi[np.isfinite(rep.local_xi.xi)] < 1)),
    }
    tables = {
        "lambda_local": (["c", "lambda2"], zip(rep.local_grid, lam)),
        "xi_local": (["c", "xi", "lower", "upper"], zip(rep.local_grid, rep.local_xi.xi, rep.local_xi.lower, rep.local_xi.upper)),
    }
    return Report("stability", cfg, res, plot_data=tables)


def cmd_forecast(cfg: dict, threads: int, out: Path) -> Report:
    series, _ = _load(cfg)
    fc = one_step_forecast(series, cfg["window"], cfg["level"], cfg["interval"], _options(threads))
    res = {
        "n_forecasts": len(fc.records),
        "n_skipped": len(fc.skipped),
        "skipped": [str(d) for d in fc.skipped],
        "mspe": mspe(fc.records),
        "interval": cfg["interval"],
        "next": fc.records[-1].to_dict() if fc.records else None,
    }
    rows = [
        (r.date, r.y_hat, r.interval[0], r.interval[1], r.actual, _label_of(series, r.date))
        for r in fc.records
    ]
    return Report("forecast", cfg, res, plot_data={"forecast": (["date", "y_hat", "lower", "upper", "actual", "label"], rows)})


def cmd_test_whiteness(cfg: dict, threads: int, out: Path) -> Report:
    series, x = _load(cfg)
    fit = fit_dar(x, _options(threads))
    eta = residuals(x, fit.params).values
    res = {
        "global_eta": ljung_box(eta, cfg["lags"], cfg["level"]).to_dict(),
        "global_eta_sq": ljung_box(eta**2, cfg["lags"], cfg["level"]).to_dict(),
        "rolling": rolling_whiteness(x, cfg["window"], cfg["lags"], cfg["level"], _options(threads)).to_dict(),
    }
    return Report("test-whiteness", cfg, res)


def cmd_test_homoscedasticity(cfg: dict, threads: int, out: Path) -> Report:
    series, x = _load(cfg)
    lf = _local_fit(x, cfg, threads)
    res = {}
    rows = []
    for g in cfg["gammas"]:
        cp = cp_statistic(x, lf, g, cfg["alpha_step"])
        res[f"gamma_{g:g}"] = cp.test_result(cfg["level"]).to_dict()
        rows.extend((g, a, v) for a, v in cp.profile)
    return Report("test-homoscedasticity", cfg, res, plot_data={"cp_profile": (["gamma", "alpha", "value"], rows)})


def cmd_test_xi(cfg: dict, threads: int, out: Path) -> Report:
    series, x = _load(cfg)
    fit = fit_dar(x, _options(threads))
    xe = xi_measure(fit.params, fit.cov)
    t = xi_wald_test(xe.xi, xe.variance, fit.n_used, cfg["xi0"], cfg["level"])
    return Report("test-xi", cfg, {"xi": xe.xi, "variance": xe.variance, "se": xe.se, "wald": t.to_dict()})


def cmd_describe(cfg: dict, threads: int, out: Path) -> Report:
    series, x = _load(cfg)
    rs = rolling_mean_var(series, cfg["window"], cfg["level"], cfg["ci_mode"])
    ar = rolling_ar1(x, cfg["window"])
    glob = fit_ar1(x)
    a = acf(series.values, cfg["max_lag"])
    by_year = acf_by_year(series, cfg["max_lag"])
    res = {
        "n": len(series),
        "mean": float(np.mean(series.values)),
        "sd": float(np.std(series.values)),
        "min": float(np.min(series.values)),
        "max": float(np.max(series.values)),
        "ar1": {"rho": glob.rho, "sigma2": glob.sigma2},
        "acf": a,
        "acf_by_year": {str(k): v for k, v in by_year.items()},
        "ci_mode": rs.ci_mode,
    }
    tables = {
        "rolling_mean_var": (
            ["date", "mean", "var", "lower", "upper", "label"],
            [
                (d, m, v, lo, hi, _label_of(series, d))
                for d, m, v, lo, hi in zip(rs.dates, rs.local_mean, rs.local_var, rs.ci_lower, rs.ci_upper)
            ],
        ),
        "acf": (["lag", "acf"], list(enumerate(a))),
        "rolling_ar1": (
            ["date", "rho", "sigma_e"],
            [(series.timestamps[e - 1], r, s) for e, r, s in zip(ar.end, ar.rolling_rho, ar.rolling_sigma_e)],
        ),
    }
    return Report("describe", cfg, res, plot_data=tables)


def cmd_montecarlo(cfg: dict, threads: int, out: Path) -> Report:
    ec = ExperimentConfig(
        DarParams(cfg["phi"], cfg["omega"], cfg["alpha"]),
        tuple(cfg["T_values"]),
        cfg["reps"],
        NoiseDistribution(cfg["noise"]),
        cfg["seed"],
        tuple(cfg["targets"]),
        cfg["burn_in"],
    )
    er = run_estimator_density_experiment(ec, threads=threads)
    res = er.to_dict()
    rows = []
    for T, per in er.densities.items():
        for k, d in per.items():
            rows.extend((T, k, g, v) for g, v in zip(d.grid, d.density))
    tables = {"mc_densities": (["T", "target", "x", "density"], rows)}
    if cfg["surface"]:
        surf = lyapunov_surface(np.round(np.arange(-5, 6) * 0.2, 10), np.round(np.arange(11) * 0.1, 10), cfg["surface_noise"])
        tables["lyapunov_surface"] = (["phi", "alpha", "lambda"], surf.to_rows())
        res["surface"] = {"noise": surf.noise, "method": surf.method, "max": float(np.nanmax(surf.values))}
    return Report("montecarlo", cfg, res, plot_data=tables)


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "fit-local": cmd_fit_local,
    "stability": cmd_stability,
    "forecast": cmd_forecast,
    "test-whiteness": cmd_test_whiteness,
    "test-homoscedasticity": cmd_test_homoscedasticity,
    "test-xi": cmd_test_xi,
    "describe": cmd_describe,
    "montecarlo": cmd_montecarlo,
}


# -- parser -------------------------------------------------------------------

S = argparse.SUPPRESS


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="JSON config file or a previous report.json")
    p.add_argument("--out", default=S, help="output directory (default: tvdar-out)")
    p.add_argument("--threads", type=int, default=S, help=f"worker threads (default: ${THREADS_ENV} or 1)")


def _data(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", default=S, help="CSV with date,close[,volume] columns")
    p.add_argument("--labels", default=S, help="optional CSV of date,label event annotations")
    p.add_argument("--demean", choices=["global", "local"], default=S)
    p.add_argument("--demean-window", type=int, default=S)


def _local(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kernel", choices=["epanechnikov", "rectangular_asymmetric", "rectangular", "epa"], default=S)
    p.add_argument("--window", type=int, default=S, help="effective window; bandwidth = window / T")
    p.add_argument("--bandwidth", type=float, default=S, help="bandwidth b in (0, 1]; overrides --window")
    p.add_argument("--grid-step", type=float, default=S, help="grid spacing in rescaled time (default: every t/T)")
    p.add_argument("--level", type=float, default=S)


def _model(p: argparse.ArgumentParser) -> None:
    p.add_argument("--phi", type=float, default=S)
    p.add_argument("--omega", type=float, default=S)
    p.add_argument("--alpha", type=float, default=S)
    p.add_argument("--noise", choices=["gaussian_standard", "gaussian", "uniform_pm1", "uniform_standardized"], default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--burn-in", type=int, default=S)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tvdar", description="tvDAR(1) modelling of pegged-price deviations")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a DAR(1) or linearly drifting tvDAR(1) price path")
    _common(p)
    _model(p)
    p.add_argument("--T", type=int, default=S)
    p.add_argument("--phi-end", type=float, default=S)
    p.add_argument("--omega-end", type=float, default=S)
    p.add_argument("--alpha-end", type=float, default=S)
    p.add_argument("--level-shift", type=float, default=S, help="added to the path to form prices")
    p.add_argument("--start-date", default=S)

    p = sub.add_parser("fit", help="global QML fit")
    _common(p)
    _data(p)

    p = sub.add_parser("fit-local", help="kernel-weighted local QML fit")
    _common(p)
    _data(p)
    _local(p)

    p = sub.add_parser("stability", help="Lyapunov exponent and xi, global and local")
    _common(p)
    _data(p)
    _local(p)
    p.add_argument("--quad-noise", choices=["gaussian_standard", "uniform_pm1", "uniform_standardized"], default=S)
    p.add_argument("--xi0", type=float, default=S)

    p = sub.add_parser("forecast", help="rolling one-step-ahead forecasts")
    _common(p)
    _data(p)
    p.add_argument("--window", type=int, default=S)
    p.add_argument("--level", type=float, default=S)
    p.add_argument("--interval", choices=["parameter", "innovation"], default=S)

    p = sub.add_parser("test", help="diagnostic tests")
    tsub = p.add_subparsers(dest="kind", required=True)
    q = tsub.add_parser("whiteness", help="Ljung-Box on residuals, global and rolling")
    _common(q)
    _data(q)
    q.add_argument("--window", type=int, default=S)
    q.add_argument("--lags", type=int, default=S)
    q.add_argument("--level", type=float, default=S)
    q = tsub.add_parser("homoscedasticity", help="Chandler-Polonik test of a constant variance function")
    _common(q)
    _data(q)
    _local(q)
    q.add_argument("--gammas", type=float, nargs="+", default=S)
    q.add_argument("--alpha-step", type=float, default=S)
    q = tsub.add_parser("xi", help="one-sided Wald test on xi = phi^2 + alpha")
    _common(q)
    _data(q)
    q.add_argument("--xi0", type=float, default=S)
    q.add_argument("--level", type=float, default=S)

    p = sub.add_parser("describe", help="rolling moments, ACF and AR(1) baseline")
    _common(p)
    _data(p)
    p.add_argument("--window", type=int, default=S)
    p.add_argument("--level", type=float, default=S)
    p.add_argument("--ci-mode", choices=["standard", "sqrt_sd"], default=S)
    p.add_argument("--max-lag", type=int, default=S)

    p = sub.add_parser("montecarlo", help="sampling densities of the estimates and the Lyapunov surface")
    _common(p)
    _model(p)
    p.add_argument("--T-values", type=int, nargs="+", default=S)
    p.add_argument("--reps", type=int, default=S)
    p.add_argument("--targets", nargs="+", default=S)
    p.add_argument("--surface", action=argparse.BooleanOptionalAction, default=S)
    p.add_argument("--surface-noise", choices=["uniform_pm1", "gaussian_standard", "uniform_standardized"], default=S)
    return parser


def _canonical(cfg: dict) -> dict:
    out = dict(cfg)
    if out.get("kernel") in ("rectangular", "epa"):
        out["kernel"] = {"rectangular": "rectangular_asymmetric", "epa": "epanechnikov"}[out["kernel"]]
    for key in ("noise", "quad_noise"):
        if out.get(key) in ("gaussian", "normal"):
            out[key] = "gaussian_standard"
    return out


def run(argv=None) -> tuple[int, Report | None]:
    parser = build_parser()
    ns = parser.parse_args(argv)
    command = ns.command if ns.command != "test" else f"test-{ns.kind}"
    explicit = {k: v for k, v in vars(ns).items() if k not in ("command", "kind", "config")}
    out = Path(explicit.pop("out", "tvdar-out"))
    threads_flag = explicit.pop("threads", None)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            cfg = _canonical(effective_config(command, explicit, ns.config))
            _validate(cfg)
            threads = _resolve_threads(threads_flag)
            report = COMMANDS[command](cfg, threads, out)
        except (ValidationError, OSError) as exc:
            print(f"tvdar: error: {exc}", file=sys.stderr)
            return EXIT_INPUT, None
        except NumericalError as exc:
            print(f"tvdar: numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL, None
    report.version = __version__
    report.created = dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")
    report.warnings = sorted({str(w.message) for w in caught})
    for msg in report.warnings:
        print(f"tvdar: warning: {msg}", file=sys.stderr)
    try:
        path = emit_report(report, out)
    except OSError as exc:
        print(f"tvdar: error: {exc}", file=sys.stderr)
        return EXIT_INPUT, None
    print(path)
    return EXIT_OK, report


def main(argv=None) -> int:
    code, _ = run(argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
