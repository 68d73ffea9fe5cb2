"""Deterministic text serialisation: floats with 17 significant digits, sorted JSON keys."""
from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np


def fmt_float(x):
    """``x`` with 17 significant digits (round-trips every double exactly)."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _encode(obj, indent, level):
    pad = "\n" + " " * (indent * (level + 1)) if indent else ""
    end = "\n" + " " * (indent * level) if indent else ""
    sep = "," if indent else ", "
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        # JSON has no nan/inf literal
        return fmt_float(x) if math.isfinite(x) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, Path):
        return json.dumps(str(obj))
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(obj[k], indent, level + 1)}" for k in sorted(obj, key=str)]
        return "{" + sep.join(items) + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else obj
        if len(seq) == 0:
            return "[]"
        items = [f"{pad}{_encode(v, indent, level + 1)}" for v in seq]
        return "[" + sep.join(items) + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj, indent=2):
    """JSON text with sorted keys and 17-significant-digit floats; non-finite floats become ``null``."""
    return _encode(obj, indent, 0)


def write_json(path, obj, indent=2):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj, indent) + "\n")
    return path


def sha256_file(path):
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_columns(path, columns, header=None):
    """Whitespace-separated columns readable by gnuplot; ``header`` becomes a ``#`` comment line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = [np.asarray(c, float).ravel() for c in columns]
    lines = [] if header is None else ["# " + header]
    for row in zip(*cols):
        lines.append(" ".join(fmt_float(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path
