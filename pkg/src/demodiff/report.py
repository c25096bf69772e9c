"""Audit reports: canonical JSON, CSV tables, markdown and plot data.

The JSON form is the source of truth. It has sorted keys, a fixed layout
validated against :data:`REPORT_SCHEMA`, and encodes non-finite reals as
the strings ``"inf"``, ``"-inf"`` and ``"nan"``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Iterable

import jsonschema

from .errors import ConfigError, DataError
from .stats import TestResult

SCHEMA_VERSION = "1.0"
FORMATS = ("json", "csv", "md", "plot")

_real = {"anyOf": [{"type": "number"}, {"enum": ["inf", "-inf", "nan"]}]}
_opt_real = {"anyOf": [_real, {"type": "null"}]}
_test = {
    "type": "object",
    "required": ["test", "statistic", "df", "p_value", "alpha", "reject", "critical_value", "degenerate"],
    "additionalProperties": False,
    "properties": {
        "test": {"enum": ["two_prop_z", "welch_t", "anova_f"]},
        "statistic": _real,
        "df": {"anyOf": [{"type": "null"}, _real, {"type": "array", "items": _real, "minItems": 2, "maxItems": 2}]},
        "p_value": _real,
        "alpha": {"type": "number"},
        "reject": {"type": "boolean"},
        "critical_value": _real,
        "degenerate": {"type": "boolean"},
    },
}
_pair_test = {
    "type": "object",
    "required": ["pair", "result"],
    "additionalProperties": False,
    "properties": {
        "pair": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2},
        "result": {"anyOf": [_test, {"type": "null"}]},
        "note": {"type": "string"},
    },
}
_row_list = {"type": "array", "items": {"type": "object"}}

REPORT_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "demodiff audit report",
    "type": "object",
    "required": ["schema_version", "kind", "config", "inputs"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "kind": {"enum": ["verify", "ident", "summaries", "sensitivity", "quality"]},
        "config": {"type": "object"},
        "inputs": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "sha256", "bytes", "rows", "rejected"],
                "properties": {
                    "name": {"type": "string"},
                    "sha256": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
                    "bytes": {"type": "integer", "minimum": 0},
                    "rows": {"type": "integer", "minimum": 0},
                    "rejected": {"type": "integer", "minimum": 0},
                },
            },
        },
        "threshold": {
            "type": "object",
            "required": ["value", "source"],
            "properties": {
                "value": _real,
                "source": {"enum": ["fixed", "target_fmr", "target_fnir"]},
                "target": _opt_real,
                "achieved": _opt_real,
                "ref_group": {"type": ["string", "null"]},
            },
        },
        "estimates": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["group", "metric", "mean", "std", "m", "unit"],
                "properties": {
                    "group": {"type": "string"},
                    "metric": {"enum": ["tmr", "fpir", "fnir", "tpir"]},
                    "mean": _real,
                    "std": _real,
                    "m": {"type": "integer", "minimum": 2},
                    "unit": {"enum": ["fraction", "percent"]},
                    "point": _opt_real,
                    "n": {"type": "integer"},
                },
            },
        },
        "point_rates": _row_list,
        "tests": {"type": "array", "items": _pair_test},
        "point_tests": {"type": "array", "items": _pair_test},
        "anova": {
            "type": "object",
            "properties": {
                "groups": {"type": "array", "items": {"type": "string"}},
                "unweighted": {"anyOf": [_test, {"type": "null"}]},
                "pooled": {"anyOf": [_test, {"type": "null"}]},
                "pooled_grand_mean": _opt_real,
                "note": {"type": "string"},
            },
        },
        "identification": {
            "type": "object",
            "properties": {
                "rank": {"type": "integer", "minimum": 1},
                "groups": _row_list,
                "sweep": _row_list,
            },
        },
        "diagnostics": {
            "type": "object",
            "properties": {
                "outliers": _row_list,
                "flips": _row_list,
                "quality": {"type": "object"},
            },
        },
        "warnings": {"type": "array", "items": {"type": "string"}},
    },
}


def real(x) -> float | str | None:
    """JSON-safe real: non-finite values become strings."""
    if x is None:
        return None
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def unreal(x):
    """Inverse of :func:`real`."""
    if isinstance(x, str) and x in ("inf", "-inf", "nan"):
        return float(x)
    return x


def result_dict(result: TestResult | None) -> dict | None:
    if result is None:
        return None
    df = result.df
    if isinstance(df, tuple):
        df = [real(d) for d in df]
    else:
        df = real(df)
    return {
        "test": result.test_kind.value,
        "statistic": real(result.statistic),
        "df": df,
        "p_value": real(result.p_value),
        "alpha": float(result.alpha),
        "reject": bool(result.reject),
        "critical_value": real(result.critical_value),
        "degenerate": bool(result.degenerate),
    }


class AuditReport:
    """A schema-checked report plus plot data kept outside the JSON body."""

    def __init__(self, data: dict, plots: dict[str, list[dict]] | None = None):
        self.data = data
        self.plots = plots or {}

    def validate(self) -> AuditReport:
        try:
            jsonschema.validate(self.data, REPORT_SCHEMA)
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path)
            raise DataError(f"report fails schema at /{path}: {exc.message}") from None
        return self

    def to_json(self) -> str:
        self.validate()
        return json.dumps(self.data, sort_keys=True, indent=2, allow_nan=False, ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> AuditReport:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataError(f"report is not JSON: {exc.msg}", line=exc.lineno) from None
        return cls(data).validate()

    def __eq__(self, other):
        return isinstance(other, AuditReport) and self.data == other.data

    # tables

    def tables(self) -> dict[str, tuple[list[str], list[list]]]:
        d = self.data
        out: dict[str, tuple[list[str], list[list]]] = {}
        if d.get("estimates"):
            cols = ["group", "metric", "mean", "std", "m", "unit", "point", "n"]
            out["estimates"] = (cols, [[e.get(c) for c in cols] for e in d["estimates"]])
        if d.get("point_rates"):
            cols = sorted({k for r in d["point_rates"] for k in r}, key=_col_order)
            out["point_rates"] = (cols, [[r.get(c) for c in cols] for r in d["point_rates"]])
        for name in ("tests", "point_tests"):
            if name in d:
                out[name] = _test_table(d[name])
        if d.get("anova"):
            rows = []
            for mode in ("unweighted", "pooled"):
                res = d["anova"].get(mode)
                if res is not None:
                    rows.append([mode] + _test_row(res))
            out["anova"] = (["grand_mean"] + _TEST_COLS, rows)
        ident = d.get("identification")
        if ident:
            cols = sorted({k for r in ident["groups"] for k in r}, key=_col_order)
            out["identification"] = (cols, [[r.get(c) for c in cols] for r in ident["groups"]])
            if ident.get("sweep"):
                out["sweep"] = (["group", "threshold", "fpir", "fnir"],
                                [[r["group"], r["threshold"], r["fpir"], r["fnir"]] for r in ident["sweep"]])
        diag = d.get("diagnostics") or {}
        for name in ("outliers", "flips"):
            if diag.get(name):
                cols = sorted({k for r in diag[name] for k in r}, key=_col_order)
                out[name] = (cols, [[_cell(r.get(c)) for c in cols] for r in diag[name]])
        q = diag.get("quality")
        if q:
            cols = ["group", "n_samples", "mean", "median", "std"]
            out["quality"] = (cols, [[s[c] for c in cols] for s in q["summaries"]])
            out["quality_tests"] = _test_table(q["tests"])
        return out

    def to_markdown(self) -> str:
        d = self.data
        lines = [f"# Audit report ({d['kind']})", ""]
        th = d.get("threshold")
        if th:
            desc = f"Threshold: {_fmt(th['value'])} ({th['source']}"
            if th.get("target") is not None:
                desc += f", target {_fmt(th['target'])}, achieved {_fmt(th.get('achieved'))}"
            if th.get("ref_group"):
                desc += f", reference group {th['ref_group']}"
            lines += [desc + ")", ""]
        titles = {
            "estimates": "Bootstrap estimates",
            "point_rates": "Point estimates",
            "tests": "Pairwise Welch tests",
            "point_tests": "Pairwise two-proportion z tests",
            "anova": "ANOVA",
            "identification": "Identification",
            "sweep": "FPIR/FNIR sweep",
            "outliers": "Genuine scores below threshold",
            "flips": "Minimal flips",
            "quality": "Quality summaries",
            "quality_tests": "Quality tests",
        }
        for name, (cols, rows) in self.tables().items():
            lines += [f"## {titles.get(name, name)}", ""]
            lines.append("| " + " | ".join(cols) + " |")
            lines.append("|" + "|".join("---" for _ in cols) + "|")
            for row in rows:
                lines.append("| " + " | ".join(_fmt(v) for v in row) + " |")
            lines.append("")
        for w in d.get("warnings", []):
            lines.append(f"> warning: {w}")
        return "\n".join(lines).rstrip() + "\n"

    def emit(self, out_dir, formats: Iterable[str] = ("json",), stem: str = "report") -> list[Path]:
        """Write the requested formats into ``out_dir``; returns written paths."""
        formats = list(formats)
        bad = [f for f in formats if f not in FORMATS]
        if bad:
            raise ConfigError(f"unknown report format {bad[0]!r}; choose from {FORMATS}")
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        if "json" in formats:
            written.append(_write_text(out / f"{stem}.json", self.to_json()))
        if "md" in formats:
            written.append(_write_text(out / f"{stem}.md", self.to_markdown()))
        if "csv" in formats:
            for name, (cols, rows) in self.tables().items():
                written.append(_write_text(out / f"{name}.csv", _csv_text(cols, rows)))
        if "plot" in formats:
            for name, rows in sorted(self.plots.items()):
                cols = list(rows[0]) if rows else []
                written.append(_write_text(out / f"plot_{name}.csv",
                                           _csv_text(cols, [[r[c] for c in cols] for r in rows])))
        return written


_TEST_COLS = ["test", "statistic", "df", "p_value", "alpha", "reject", "critical_value", "degenerate"]
_ORDER = ["group", "pair", "metric", "threshold"]


def _col_order(c):
    return (_ORDER.index(c) if c in _ORDER else len(_ORDER), c)


def _test_row(res: dict) -> list:
    df = res["df"]
    if isinstance(df, list):
        df = ";".join(_fmt(v) for v in df)
    return [res["test"], res["statistic"], df, res["p_value"], res["alpha"], res["reject"],
            res["critical_value"], res["degenerate"]]


def _test_table(entries: list[dict]):
    rows = []
    for e in entries:
        res = e["result"]
        row = [f"{e['pair'][0]}/{e['pair'][1]}"]
        row += _test_row(res) if res is not None else [None] * len(_TEST_COLS)
        rows.append(row + [e.get("note", "")])
    return (["pair"] + _TEST_COLS + ["note"], rows)


def _cell(v):
    if isinstance(v, list):
        return "/".join(str(x) for x in v)
    return v


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _csv_text(cols, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for row in rows:
        writer.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in row])
    return buf.getvalue()


def _write_text(path: Path, text: str) -> Path:
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from None
    return path


def schema_json() -> str:
    return json.dumps(REPORT_SCHEMA, sort_keys=True, indent=2) + "\n"
