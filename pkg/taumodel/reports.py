"""
JSON reports for CLI runs.

Responsibilities
- Render Scalars losslessly: exact values as "num/den" strings, floats as repr decimals
- Persist reports as sorted, indented JSON under a process-wide lock
- Keep the deterministic part of a report ("command", "result") apart from "timings"
"""

from __future__ import annotations

import json
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from threading import RLock
from typing import Any, Dict, Iterator

import numpy as np

_lock = RLock()


def format_scalar(value: Any) -> Any:
    """Fraction -> "n" or "num/den"; float -> shortest round-trip decimal string."""
    if isinstance(value, Fraction):
        return str(value.numerator) if value.denominator == 1 else f"{value.numerator}/{value.denominator}"
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return str(value)
        return repr(value)
    return value


def format_matrix(rows) -> list:
    return [[format_scalar(v) for v in row] for row in rows]


def to_jsonable(value: Any) -> Any:
    """Recursively convert results (dataclasses with to_dict, Fractions, arrays) for json.dumps."""
    if hasattr(value, "to_dict"):
        return to_jsonable(value.to_dict())
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    return format_scalar(value)


@dataclass
class Report:
    """One CLI run: the command, its deterministic result and wall-clock timings."""
    command: str
    result: Dict[str, Any] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)

    @contextmanager
    def timed(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = round(time.perf_counter() - start, 6)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "result": to_jsonable(self.result),
            "timings": dict(self.timings),
        }

    def deterministic_json(self) -> str:
        """The report without timings, as saved text."""
        data = self.to_dict()
        data.pop("timings")
        return json.dumps(data, indent=2, sort_keys=True)


def save_report(report: Report, path: Path) -> Path:
    """Persist a report."""
    path = Path(path)
    with _lock:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_report(path: Path) -> Dict[str, Any]:
    with _lock:
        return json.loads(Path(path).read_text(encoding="utf-8"))
