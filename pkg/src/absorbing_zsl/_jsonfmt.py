"""JSON output with floats written at 17 significant digits.

The stdlib encoder always uses ``float.__repr__`` (shortest round-trip), so
floats are formatted here by hand. Output is still valid JSON and is read
back with :func:`json.loads`.
"""

from __future__ import annotations

import json
import math
from typing import Any

import numpy as np


def format_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot encode non-finite float {x!r} as JSON")
    text = format(x, ".17g")
    # keep a float-looking literal so the value reloads as float, not int
    if not any(c in text for c in ".en"):
        text += ".0"
    return text


def dumps(obj: Any, indent: int | None = 2) -> str:
    return _encode(obj, indent, 0)


def _encode(obj: Any, indent: int | None, level: int) -> str:
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()

    if indent is None:
        sep, pad, pad_close = ", ", "", ""
    else:
        sep = ",\n"
        pad = "\n" + " " * (indent * (level + 1))
        pad_close = "\n" + " " * (indent * level)

    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f"{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()
        ]
        inner = (sep + " " * (indent * (level + 1))) if indent is not None else sep
        return "{" + pad + inner.join(items) + pad_close + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        # short scalar lists stay on one line
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_encode(v, None, 0) for v in obj) + "]"
        items = [_encode(v, indent, level + 1) for v in obj]
        inner = (sep + " " * (indent * (level + 1))) if indent is not None else sep
        return "[" + pad + inner.join(items) + pad_close + "]"
    raise TypeError(f"object of type {type(obj).__name__} is not JSON serializable")
