"""Canonical JSON rendering for reports.

Key order is insertion order, floats are formatted with 9 significant
digits, so identical report content always serializes to identical bytes.
Model artifacts do NOT use this (they need exact float round-trips).
"""

import math


def dumps(obj, indent: int = 0) -> str:
    return _render(obj, indent, 0)


def _render(obj, indent, level):
    pad = " " * (indent * (level + 1)) if indent else ""
    end_pad = " " * (indent * level) if indent else ""
    nl = "\n" if indent else ""
    sep = "," + nl
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, float):
        if math.isnan(obj) or math.isinf(obj):
            raise ValueError(f"non-finite float {obj} in report")
        if obj == int(obj) and abs(obj) < 1e15:
            return f"{obj:.1f}"
        return f"{obj:.9g}"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, str):
        return _escape(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = sep.join(
            f"{pad}{_escape(str(k))}: {_render(v, indent, level + 1)}"
            for k, v in obj.items())
        return "{" + nl + items + nl + end_pad + "}"
    if isinstance(obj, (list, tuple)):
        if not len(obj):
            return "[]"
        items = sep.join(f"{pad}{_render(v, indent, level + 1)}" for v in obj)
        return "[" + nl + items + nl + end_pad + "]"
    if hasattr(obj, "item"):          # numpy scalar
        return _render(obj.item(), indent, level)
    if hasattr(obj, "tolist"):        # numpy array
        return _render(obj.tolist(), indent, level)
    raise TypeError(f"cannot render {type(obj).__name__} as JSON")


_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\r": "\\r", "\t": "\\t"}


def _escape(s: str) -> str:
    out = []
    for ch in s:
        if ch in _ESCAPES:
            out.append(_ESCAPES[ch])
        elif ord(ch) < 0x20:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    return '"' + "".join(out) + '"'
