"""Report serialization.

JSON is the source of truth.  Floats are written with 17 significant digits
so regression diffs are exact; non-finite values become the strings
``"inf"``, ``"-inf"`` and ``"nan"``.  Everything that varies between
identical runs (wall-clock time) lives under the ``timestamp`` key.
"""

from __future__ import annotations

import csv
import io
import json
import math
import platform
import re
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np

_MARK = "\u0001F"
_MARK_RE = re.compile(r'"\\u0001F([^"]*)"')
CSV_FIXED = ("kind", "id", "pass", "status")


def _float_token(x: float):
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return _MARK + format(x, ".17g")


def _prepare(obj):
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _float_token(float(obj))
    if isinstance(obj, (complex, np.complexfloating)):
        return [_float_token(float(obj.real)), _float_token(float(obj.imag))]
    if isinstance(obj, np.ndarray):
        return _prepare(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): _prepare(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_prepare(v) for v in obj]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    text = json.dumps(_prepare(obj), indent=indent, sort_keys=False, ensure_ascii=True)
    return _MARK_RE.sub(lambda m: m.group(1), text)


def versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("hitgap", "numpy", "scipy"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = "unknown"
    return out


def build_report(command: str, config, seed: int, seed_source: str, records: list, errors: list,
                 timings: dict) -> dict:
    checked = [r for r in records if r.get("pass") is not None]
    failed = sum(1 for r in checked if not r["pass"])
    return {
        "tool": "hitgap",
        "command": command,
        "versions": versions(),
        "config_hash": config.digest,
        "config": config.effective,
        "seed": {
            "value": seed,
            "source": seed_source,
            "resolution_order": ["flag", "env:HITGAP_SEED", "config", "default"],
        },
        "timestamp": {
            "utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "wall_clock_seconds": timings,
        },
        "summary": {
            "records": len(records),
            "checked": len(checked),
            "passed": len(checked) - failed,
            "failed": failed,
            "errors": len(errors),
            "ok": failed == 0 and not errors,
        },
        "records": records,
        "errors": errors,
    }


def _flatten(rec: dict) -> dict:
    row = {}
    for k, v in rec.items():
        if k == "measured" and isinstance(v, dict):
            for mk, mv in v.items():
                if not isinstance(mv, (list, dict)):
                    row[f"measured.{mk}"] = mv
        elif not isinstance(v, (list, dict)):
            row[k] = v
    return row


def csv_text(records: list) -> str:
    rows = [_flatten(r) for r in records]
    extra = sorted({k for row in rows for k in row} - set(CSV_FIXED))
    columns = list(CSV_FIXED) + extra
    buf = io.StringIO()
    buf.write("# hitgap flat projection of the JSON records, one row per record\n")
    buf.write("# columns: " + ", ".join(columns) + "\n")
    buf.write("# measured.* columns copy scalar entries of each record's 'measured' block\n")
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _csv_value(row.get(k, "")) for k in columns})
    return buf.getvalue()


def _csv_value(v):
    if isinstance(v, (float, np.floating)):
        return _float_token(float(v)).replace(_MARK, "")
    return v


def emit_report(report: dict, path, formats=("json", "csv")) -> list:
    """Write ``<path>.json`` and/or ``<path>.csv``; returns the written paths."""
    base = Path(path)
    if base.suffix in (".json", ".csv"):
        base = base.with_suffix("")
    if base.parent and not base.parent.exists():
        base.parent.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in formats:
        p = base.with_suffix(".json")
        p.write_text(dumps(report) + "\n")
        written.append(p)
    if "csv" in formats:
        p = base.with_suffix(".csv")
        p.write_text(csv_text(report.get("records", [])))
        written.append(p)
    return written


def read_csv_records(path) -> list:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))
