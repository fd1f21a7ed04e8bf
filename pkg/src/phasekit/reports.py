"""Report schemas and serialization (CSV and record-lines/JSONL).

Reports are written deterministically: fixed column order, shortest
round-trip float formatting, rows sorted by utterance id, provenance header
limited to result-affecting settings. SDR-family values are capped at
SDR_CAP_DB in serialized output (the +inf sentinel for a perfect match);
undefined metrics serialize as empty CSV cells / JSON nulls.
"""

from __future__ import annotations

import io
import json
import math
from pathlib import Path

SCHEMA_VERSION = 1
SDR_CAP_DB = 99.0

_CAPPED_COLUMNS = ("sdr", "sdri")


def loss_columns(n_resolutions: int) -> list[str]:
    cols = ["id", "status", "l1"]
    for name in ("sc", "log_mag", "pl", "pcl"):
        cols += [f"{name}_{i}" for i in range(n_resolutions)]
        cols.append(f"{name}_mean")
    cols += ["total", "error"]
    return cols


def metric_columns(with_sdri: bool) -> list[str]:
    cols = ["id", "status", "snrseg", "fwsnrseg", "sdr"]
    if with_sdri:
        cols.append("sdri")
    cols += ["unrmse", "gd_rmse", "if_rmse", "voiced_frames", "error"]
    return cols


def _capped(column: str, value):
    if column in _CAPPED_COLUMNS and isinstance(value, float) and value > SDR_CAP_DB:
        return SDR_CAP_DB
    return value


def _cell(column: str, value) -> str:
    value = _capped(column, value)
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return repr(value)
    return str(value)


def _jsonable(column: str, value):
    value = _capped(column, value)
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


def jsonable_record(record: dict) -> dict:
    """Column-aware JSON form of one flat record: SDR-family caps applied,
    undefined values as null."""
    return {k: _jsonable(k, v) for k, v in record.items()}


def summarize(rows: list[dict], columns: list[str]) -> dict:
    """Arithmetic mean of each numeric column over the ok rows, ignoring
    undefined cells; serialization caps are applied before averaging so the
    summary matches what the rows show."""
    out: dict = {"id": "MEAN", "status": "summary"}
    ok_rows = [r for r in rows if r.get("status") == "ok"]
    for col in columns:
        if col in ("id", "status", "error"):
            continue
        vals = []
        for r in ok_rows:
            v = _capped(col, r.get(col))
            if v is None:
                continue
            if isinstance(v, float) and math.isnan(v):
                continue
            vals.append(float(v))
        if vals:
            out[col] = sum(vals) / len(vals)
    return out


def render_csv(header: dict, columns: list[str], rows: list[dict], summary: dict | None) -> str:
    buf = io.StringIO()
    buf.write(f"# schema_version={SCHEMA_VERSION}\n")
    for key in sorted(header):
        buf.write(f"# {key}={header[key]}\n")
    buf.write(",".join(columns) + "\n")
    for row in rows + ([summary] if summary is not None else []):
        buf.write(",".join(_cell(c, row.get(c)) for c in columns) + "\n")
    return buf.getvalue()


def render_jsonl(header: dict, columns: list[str], rows: list[dict], summary: dict | None) -> str:
    buf = io.StringIO()
    head = {"record": "header", "schema_version": SCHEMA_VERSION, "columns": columns,
            "config": {k: header[k] for k in sorted(header)}}
    buf.write(json.dumps(head, allow_nan=False) + "\n")
    for row in rows:
        body = {c: _jsonable(c, row.get(c)) for c in columns}
        buf.write(json.dumps({"record": "row", **body}, allow_nan=False) + "\n")
    if summary is not None:
        body = {c: _jsonable(c, summary.get(c)) for c in columns if c in summary}
        buf.write(json.dumps({"record": "summary", **body}, allow_nan=False) + "\n")
    return buf.getvalue()


def write_report(
    out_path,
    fmt: str,
    header: dict,
    columns: list[str],
    rows: list[dict],
    summary: dict | None,
) -> str:
    text = (render_csv if fmt == "csv" else render_jsonl)(header, columns, rows, summary)
    if out_path is not None:
        Path(out_path).write_text(text)
    return text
