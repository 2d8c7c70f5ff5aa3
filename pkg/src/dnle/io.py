"""CSV and JSON writers with 17 significant digits; readers for the round trip."""
from __future__ import annotations

import datetime as _dt
import json
import math
from pathlib import Path

import numpy as np

FLOAT_FMT = "%.17g"
TIMESTAMP_KEY = "generated_at"


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    s = FLOAT_FMT % x
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, bool):
        return "null" if obj is None else ("true" if obj else "false")
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{_encode(str(k), indent, level + 1)}: {_encode(v, indent, level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.number)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    return _encode(obj, indent, 0) + "\n"


def write_json(path, payload: dict, timestamp: bool = True) -> Path:
    """Write a report; the wall-clock time lives under a single key so reports diff cleanly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = dict(payload)
    if timestamp:
        body[TIMESTAMP_KEY] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    path.write_text(dumps(body))
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def write_csv(path, columns: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], dtype=float) for k in names])
    np.savetxt(path, data, fmt=FLOAT_FMT, delimiter=",", header=",".join(names), comments="")
    return path


def read_csv(path) -> dict:
    path = Path(path)
    with path.open() as fh:
        names = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {k: data[:, i] for i, k in enumerate(names)}
