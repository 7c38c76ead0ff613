"""Run reports with fixed field order and 17-significant-digit numbers.

JSON schema (keys in this order)::

    {"command": str, "config": str, "seed": int, "pass": bool,
     "checks": [{"name", "anchor", "pass", "value", "bound", "key", "detail"}, ...],
     "measured": {...}, "kappa": {...}, "max_ratio": {...}, "worst": {...}}

CSV schema: one row per check with columns ``name, anchor, pass, value,
bound, key, detail``.  Non-finite numbers render as ``inf``, ``-inf`` or
``nan`` (strings in JSON).  Runtime is kept on the object but left out of
both renderings so identical runs give identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = ["CheckRow", "RunReport", "format_number", "render_json", "CSV_COLUMNS"]

CSV_COLUMNS = ("name", "anchor", "pass", "value", "bound", "key", "detail")


def format_number(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _render(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        s = format_number(obj)
        return s if math.isfinite(float(obj)) else json.dumps(s)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_render(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [f"{pad}{_render(v, indent, level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot render {type(obj).__name__}")


def render_json(obj, indent: int = 2) -> str:
    """JSON text with insertion-ordered keys and ``.17g`` floats."""
    return _render(obj, indent, 0) + "\n"


@dataclass
class CheckRow:
    """One pass/fail entry; ``key`` names the frozen constant behind ``bound`` (if any)."""

    name: str
    anchor: str
    passed: bool
    value: float
    bound: Optional[float] = None
    key: Optional[str] = None
    detail: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "anchor": self.anchor, "pass": bool(self.passed), "value": float(self.value),
                "bound": None if self.bound is None else float(self.bound), "key": self.key, "detail": self.detail}


@dataclass
class RunReport:
    command: str
    config: str
    seed: int
    checks: list = field(default_factory=list)
    measured: dict = field(default_factory=dict)
    kappa: dict = field(default_factory=dict)
    max_ratio: dict = field(default_factory=dict)
    worst: dict = field(default_factory=dict)
    runtime: float = 0.0
    artifacts: dict = field(default_factory=dict, repr=False)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def check(self, name: str) -> CheckRow:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config": self.config,
            "seed": int(self.seed),
            "pass": self.passed,
            "checks": [c.to_dict() for c in self.checks],
            "measured": self.measured,
            "kappa": self.kappa,
            "max_ratio": self.max_ratio,
            "worst": self.worst,
        }

    def to_json(self) -> str:
        return render_json(self.to_dict())

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(CSV_COLUMNS)
        for c in self.checks:
            d = c.to_dict()
            wr.writerow([d["name"], d["anchor"], "true" if d["pass"] else "false", format_number(d["value"]),
                         "" if d["bound"] is None else format_number(d["bound"]), d["key"] or "", d["detail"]])
        return buf.getvalue()

    def render(self, fmt: str = "json") -> str:
        if fmt == "json":
            return self.to_json()
        if fmt == "csv":
            return self.to_csv()
        raise ValueError(f"unknown format {fmt!r}")
