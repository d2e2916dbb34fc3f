import datetime as dt
import json
import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tvdar import __version__
from tvdar.cli import DEFAULTS, effective_config, main, run
from tvdar.core import PriceSeries
from tvdar.exceptions import ValidationError
from tvdar.io import (
    Report,
    emit_report,
    fixture_path,
    format_float,
    load_report,
    parse_csv,
    parse_labels,
    to_jsonable,
    validate_report,
    write_price_csv,
)


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


# -- parse_csv ------------------------------------------------------------------


def test_two_row_file(tmp_path):
    s = parse_csv(_write(tmp_path / "a.csv", "date,close\n2020-01-01,1.0\n2020-01-02,0.99\n"))
    assert len(s) == 2 and s.timestamps[1] == dt.date(2020, 1, 2)
    assert s.volume is None


def test_volume_and_case_insensitive_header(tmp_path):
    s = parse_csv(_write(tmp_path / "a.csv", "Date,Close,Volume\n2020-01-01,1.0,5\n2020-01-02,0.99,6\n"))
    np.testing.assert_array_equal(s.volume, [5.0, 6.0])


@pytest.mark.parametrize(
    "body,needle",
    [
        ("date,close\n2020-01-02,1\n2020-01-01,1\n", "line 3: out-of-order"),
        ("date,close\n2020-01-01,1\n2020-01-01,1\n", "line 3: duplicate"),
        ("date,close\n2020-01-01,1\n2020-01-02,abc\n", "line 3: non-numeric close"),
        ("date,close\n2020-01-01,1\n2020-13-02,1\n", "line 3: invalid date"),
        ("date,price\n2020-01-01,1\n", "line 1: missing column(s) close"),
        ("", "empty file"),
        ("date,close\n", "no data rows"),
        ("date,close\n2020-01-01,nan\n2020-01-02,1\n", "line 2: non-finite"),
    ],
)
def test_parse_errors(tmp_path, body, needle):
    with pytest.raises(ValidationError, match=needle.replace("(", r"\(").replace(")", r"\)")):
        parse_csv(_write(tmp_path / "bad.csv", body))


def test_missing_file(tmp_path):
    with pytest.raises(ValidationError, match="cannot read"):
        parse_csv(tmp_path / "nope.csv")


def test_fixture():
    s = parse_csv(fixture_path())
    assert len(s) == 1361
    assert s.timestamps[0] == dt.date(2017, 11, 9)
    assert s.timestamps[-1] == dt.date(2021, 7, 31)
    assert abs(np.mean(s.values) - 1) < 0.01


def test_labels(tmp_path):
    lab = parse_labels(_write(tmp_path / "l.csv", "date,label\n2020-01-02,halving\n"))
    assert lab == {dt.date(2020, 1, 2): "halving"}
    with pytest.raises(ValidationError):
        parse_labels(_write(tmp_path / "m.csv", "day,text\n"))


# -- serialization -------------------------------------------------------------


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_round_trip(v):
    s = format_float(v)
    assert float(s) == v
    digits = s.lstrip("-").split("e")[0].replace(".", "").lstrip("0")
    assert len(digits) <= 17


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=20))
def test_price_csv_round_trip(tmp_path_factory, values):
    d0 = dt.date(2020, 1, 1)
    s = PriceSeries(tuple(d0 + dt.timedelta(days=i) for i in range(len(values))), np.array(values))
    p = tmp_path_factory.mktemp("rt") / "p.csv"
    write_price_csv(p, s)
    back = parse_csv(p)
    assert back.timestamps == s.timestamps
    np.testing.assert_array_equal(back.values, s.values)


def test_to_jsonable():
    tree = to_jsonable({"a": np.float64(1.5), "b": np.arange(3), "c": math.inf, "d": dt.date(2020, 1, 1), 1: np.bool_(True)})
    assert tree == {"a": 1.5, "b": [0, 1, 2], "c": None, "d": "2020-01-01", "1": True}


def test_empty_report_round_trip(tmp_path):
    rep = Report("fit", {"command": "fit"}, version="x", created="now")
    path = emit_report(rep, tmp_path)
    back = load_report(path)
    assert back.results == {} and back.command == "fit"
    assert back.tree() == rep.tree()


def test_report_round_trip_with_floats(tmp_path):
    vals = {"x": 0.1 + 0.2, "y": [1e-300, -2.5e17], "z": {"w": 1 / 3}}
    rep = Report("fit", {"command": "fit", "seed": 3}, vals, "0", "t", ["w1"], {"t": (["a", "b"], [(1.0, 2.0)])})
    emit_report(rep, tmp_path)
    back = load_report(tmp_path / "report.json")
    assert back.results == vals
    assert (tmp_path / "t.csv").read_text() == "a,b\n1.0,2.0\n"


def test_schema_rejects_bad_tree():
    with pytest.raises(ValidationError):
        validate_report({"metadata": {}, "config": {}, "results": {}})


def test_load_report_bad_json(tmp_path):
    with pytest.raises(ValidationError, match="line 1"):
        load_report(_write(tmp_path / "r.json", "{nope"))


# -- configuration -------------------------------------------------------------


def test_config_precedence(tmp_path):
    cfgfile = _write(tmp_path / "c.json", json.dumps({"command": "describe", "window": 30, "max_lag": 5}))
    with pytest.warns(UserWarning, match="overrides config value 30"):
        cfg = effective_config("describe", {"window": 40}, cfgfile)
    assert cfg["window"] == 40 and cfg["max_lag"] == 5 and cfg["level"] == DEFAULTS["describe"]["level"]


def test_config_errors(tmp_path):
    with pytest.raises(ValidationError, match="unknown"):
        effective_config("fit", {}, _write(tmp_path / "c.json", '{"bogus": 1}'))
    with pytest.raises(ValidationError, match="written for"):
        effective_config("fit", {}, _write(tmp_path / "d.json", '{"command": "describe"}'))


# -- CLI -----------------------------------------------------------------------


def _csv(tmp_path, values, name="in.csv"):
    d0 = dt.date(2020, 1, 1)
    lines = ["date,close"] + [f"{d0 + dt.timedelta(days=i)},{float(v)!r}" for i, v in enumerate(values)]
    return str(_write(tmp_path / name, "\n".join(lines) + "\n"))


def test_exit_code_validation(tmp_path, capsys):
    assert main(["fit", "--input", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "o")]) == 2
    assert "input file not found" in capsys.readouterr().err
    bad = _write(tmp_path / "bad.csv", "date,close\n2020-01-02,1\n2020-01-01,1\n")
    assert main(["fit", "--input", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["describe", "--input", str(bad), "--level", "1.5", "--out", str(tmp_path / "o")]) == 2


def test_exit_code_numerical(tmp_path, capsys):
    path = _csv(tmp_path, [1.0] * 80)
    assert main(["fit", "--input", path, "--out", str(tmp_path / "o")]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_threads_env(tmp_path, monkeypatch):
    monkeypatch.setenv("TVDAR_THREADS", "zero")
    path = _csv(tmp_path, list(1 + 0.01 * np.random.default_rng(0).normal(size=80)))
    assert main(["fit", "--input", path, "--out", str(tmp_path / "o")]) == 2
    assert main(["fit", "--input", path, "--out", str(tmp_path / "o"), "--threads", "2"]) == 0


def test_simulate_and_fit(tmp_path):
    out = tmp_path / "sim"
    code, rep = run(["simulate", "--T", "300", "--seed", "4", "--out", str(out)])
    assert code == 0
    s = parse_csv(out / "simulated.csv")
    assert len(s) == 300 and s.timestamps[0] == dt.date(2017, 11, 9)
    assert rep.config["seed"] == 4 and "out" not in rep.config
    code, rep = run(["fit", "--input", str(out / "simulated.csv"), "--out", str(tmp_path / "fit")])
    assert code == 0
    assert abs(rep.results["params"]["phi"] - 0.7) < 0.2


def test_fit_local_columns_and_rerun(tmp_path):
    sim = tmp_path / "sim"
    run(["simulate", "--T", "400", "--out", str(sim)])
    out = tmp_path / "fl"
    code, rep = run(["fit-local", "--input", str(sim / "simulated.csv"), "--grid-step", "0.1", "--kernel", "epa", "--out", str(out)])
    assert code == 0
    assert (out / "phi_local.csv").read_text().splitlines()[0] == "c,phi_hat,lower,upper"
    assert (out / "cond_volatility.csv").exists()
    assert rep.config["kernel"] == "epanechnikov"
    out2 = tmp_path / "fl2"
    code, rep2 = run(["fit-local", "--config", str(out / "report.json"), "--out", str(out2)])
    assert code == 0
    a = json.loads((out / "report.json").read_text())
    b = json.loads((out2 / "report.json").read_text())
    assert a["results"] == b["results"] and a["config"] == b["config"]
    assert (out / "phi_local.csv").read_bytes() == (out2 / "phi_local.csv").read_bytes()


@pytest.mark.parametrize(
    "argv,files",
    [
        (["describe", "--max-lag", "5"], {"rolling_mean_var.csv", "acf.csv", "rolling_ar1.csv"}),
        (["forecast", "--window", "50"], {"forecast.csv"}),
        (["test", "whiteness", "--window", "40"], set()),
        (["test", "xi"], set()),
        (["test", "homoscedasticity", "--grid-step", "0.1", "--gammas", "0.9"], {"cp_profile.csv"}),
        (["stability", "--grid-step", "0.1"], {"lambda_local.csv", "xi_local.csv"}),
    ],
)
def test_data_commands(tmp_path, argv, files):
    sim = tmp_path / "sim"
    run(["simulate", "--T", "300", "--phi", "0.5", "--alpha", "0.3", "--out", str(sim)])
    out = tmp_path / "o"
    code, rep = run(argv + ["--input", str(sim / "simulated.csv"), "--out", str(out)])
    assert code == 0
    validate_report(json.loads((out / "report.json").read_text()))
    assert files <= {p.name for p in out.iterdir()}


def test_montecarlo_command(tmp_path):
    out = tmp_path / "mc"
    code, rep = run(["montecarlo", "--reps", "30", "--T-values", "50", "--out", str(out)])
    assert code == 0
    assert {"mc_densities.csv", "lyapunov_surface.csv"} <= {p.name for p in out.iterdir()}
    assert len((out / "lyapunov_surface.csv").read_text().splitlines()) == 1 + 11 * 11


def test_labels_merged(tmp_path):
    sim = tmp_path / "sim"
    run(["simulate", "--T", "120", "--out", str(sim)])
    lab = _write(tmp_path / "lab.csv", "date,label\n2018-02-01,event\n")
    out = tmp_path / "d"
    code, _ = run(["describe", "--input", str(sim / "simulated.csv"), "--labels", str(lab), "--max-lag", "3", "--out", str(out)])
    assert code == 0
    assert "2018-02-01" in [ln.split(",")[0] for ln in (out / "rolling_mean_var.csv").read_text().splitlines() if ln.endswith("event")]


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "tvdar.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and __version__ in r.stdout
