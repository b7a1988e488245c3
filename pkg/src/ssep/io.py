"""CSV and JSON writers with deterministic formatting."""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Any, Iterable, Sequence

from . import __version__


def _cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return str(v)


def to_csv(columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _jsonable(v: Any) -> Any:
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if hasattr(v, "item"):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def to_json(columns: Sequence[str], rows: Iterable[Sequence[Any]], metadata: dict | None = None) -> str:
    meta = {"version": __version__}
    meta.update(metadata or {})
    payload = {"metadata": _jsonable(meta), "rows": [dict(zip(columns, _jsonable(list(r)))) for r in rows]}
    return json.dumps(payload, indent=2, sort_keys=False) + "\n"


def render(columns: Sequence[str], rows: Iterable[Sequence[Any]], fmt: str, metadata: dict | None = None) -> str:
    rows = list(rows)
    if fmt == "csv":
        return to_csv(columns, rows)
    if fmt == "json":
        return to_json(columns, rows, metadata)
    raise ValueError(f"unknown format {fmt!r}")


def dumps_report(report: dict) -> str:
    return json.dumps(_jsonable(report), indent=2) + "\n"
