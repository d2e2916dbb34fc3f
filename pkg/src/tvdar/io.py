"""CSV ingestion, structured reports and plot-data files."""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Sequence

import jsonschema
import numpy as np

from .core import PriceSeries
from .exceptions import ValidationError

__all__ = [
    "parse_csv",
    "parse_labels",
    "write_price_csv",
    "write_table_csv",
    "fixture_path",
    "Report",
    "REPORT_SCHEMA",
    "validate_report",
    "emit_report",
    "load_report",
    "to_jsonable",
    "format_float",
]

REQUIRED_COLUMNS = ("date", "close")


def fixture_path() -> Path:
    """Path of the bundled synthetic 1361-row price file."""
    return Path(str(resources.files("tvdar") / "data" / "synthetic_peg.csv"))


def _parse_date(text: str, line: int) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise ValidationError(f"line {line}: invalid date {text!r} (expected yyyy-mm-dd)") from None


def _parse_number(text: str, name: str, line: int) -> float:
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise ValidationError(f"line {line}: non-numeric {name} {text!r}") from None
    if not math.isfinite(v):
        raise ValidationError(f"line {line}: non-finite {name} {text!r}")
    return v


def parse_csv(path, labels: dict | None = None) -> PriceSeries:
    """Read a ``date,close[,volume]`` file with a header row.

    Errors name the offending line (the header is line 1).
    """
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        cols = [h.strip().lower() for h in header]
        missing = [c for c in REQUIRED_COLUMNS if c not in cols]
        if missing:
            raise ValidationError(f"{path}: line 1: missing column(s) {', '.join(missing)}")
        i_date, i_close = cols.index("date"), cols.index("close")
        i_vol = cols.index("volume") if "volume" in cols else None
        dates, closes, vols = [], [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(cols):
                raise ValidationError(f"{path}: line {line}: expected {len(cols)} fields, got {len(row)}")
            d = _parse_date(row[i_date], line)
            if dates and not d > dates[-1]:
                kind = "duplicate" if d == dates[-1] else "out-of-order"
                raise ValidationError(f"{path}: line {line}: {kind} date {d.isoformat()}")
            dates.append(d)
            closes.append(_parse_number(row[i_close], "close", line))
            if i_vol is not None:
                vols.append(_parse_number(row[i_vol], "volume", line))
    if not dates:
        raise ValidationError(f"{path}: no data rows")
    if len(dates) < 2:
        raise ValidationError(f"{path}: need at least 2 data rows")
    return PriceSeries(tuple(dates), np.array(closes), labels or {}, np.array(vols) if i_vol is not None else None)


def parse_labels(path) -> dict:
    """Event annotations from a ``date,label`` file."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"date", "label"} <= {f.strip().lower() for f in reader.fieldnames}:
            raise ValidationError(f"{path}: line 1: need columns date,label")
        for row in reader:
            row = {k.strip().lower(): v for k, v in row.items()}
            out[_parse_date(row["date"], reader.line_num)] = row["label"]
    return out


def format_float(v) -> str:
    """Shortest decimal string that parses back to the same double.

    Never longer than 17 significant digits.
    """
    if v is None:
        return ""
    v = float(v)
    if math.isnan(v):
        return "nan"
    return repr(v)


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    if isinstance(v, (dt.date, dt.datetime)):
        return v.isoformat()
    if v is None:
        return ""
    return str(v)


def write_table_csv(path, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def write_price_csv(path, series: PriceSeries) -> Path:
    cols = ["date", "close"] + (["volume"] if series.volume is not None else [])
    rows = (
        (d, v) + ((series.volume[i],) if series.volume is not None else ())
        for i, (d, v) in enumerate(zip(series.timestamps, series.values))
    )
    return write_table_csv(path, cols, rows)


def to_jsonable(obj):
    """Convert numpy scalars/arrays, dates and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (dt.date, dt.datetime)):
        return obj.isoformat()
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return obj


REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "tvdar report",
    "type": "object",
    "required": ["metadata", "config", "results"],
    "properties": {
        "metadata": {
            "type": "object",
            "required": ["version", "command", "created"],
            "properties": {
                "version": {"type": "string"},
                "command": {"type": "string"},
                "created": {"type": "string"},
                "plot_data": {"type": "array", "items": {"type": "string"}},
                "warnings": {"type": "array", "items": {"type": "string"}},
            },
        },
        "config": {
            "type": "object",
            "required": ["command"],
            "properties": {"command": {"type": "string"}},
        },
        "results": {"type": "object"},
    },
}


def validate_report(tree: dict) -> None:
    try:
        jsonschema.validate(tree, REPORT_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ValidationError(f"report does not match schema: {exc.message}") from None


@dataclass
class Report:
    """Result tree plus metadata; ``plot_data`` maps file stems to ``(columns, rows)``."""

    command: str
    config: dict
    results: dict = field(default_factory=dict)
    version: str = ""
    created: str = ""
    warnings: list = field(default_factory=list)
    plot_data: dict = field(default_factory=dict)

    def tree(self) -> dict:
        return {
            "metadata": {
                "version": self.version,
                "command": self.command,
                "created": self.created,
                "plot_data": sorted(f"{k}.csv" for k in self.plot_data),
                "warnings": list(self.warnings),
            },
            "config": to_jsonable(self.config),
            "results": to_jsonable(self.results),
        }

    @classmethod
    def from_tree(cls, tree: dict) -> "Report":
        validate_report(tree)
        md = tree["metadata"]
        return cls(
            command=md["command"],
            config=tree["config"],
            results=tree["results"],
            version=md["version"],
            created=md["created"],
            warnings=list(md.get("warnings", [])),
        )


def emit_report(report: Report, out_dir, name: str = "report.json") -> Path:
    """Write ``report.json`` and one CSV per plot-data table into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tree = report.tree()
    validate_report(tree)
    target = out / name
    tmp = target.with_suffix(".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(tree, fh, indent=2, allow_nan=False)
        fh.write("\n")
    os.replace(tmp, target)
    for stem, (cols, rows) in sorted(report.plot_data.items()):
        write_table_csv(out / f"{stem}.csv", cols, rows)
    return target


def load_report(path) -> Report:
    try:
        with open(path, encoding="utf-8") as fh:
            tree = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: line {exc.lineno}: invalid JSON ({exc.msg})") from None
    return Report.from_tree(tree)
