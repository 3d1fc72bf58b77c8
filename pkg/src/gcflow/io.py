"""Deterministic file output: fixed float format, LF endings, content digests."""
from __future__ import annotations

import hashlib
import json
import math
import os

import numpy as np


def fmt_float(x) -> str:
    """17 significant digits; integers and booleans pass through unchanged."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def write_csv(path, header: str, columns) -> str:
    """Write equally long columns under ``header``; returns the path."""
    cols = [np.asarray(c).ravel() for c in columns]
    n = len(cols[0]) if cols else 0
    if any(len(c) != n for c in cols):
        raise ValueError("CSV columns differ in length")
    if len(header.split(",")) != len(cols):
        raise ValueError("header does not match the column count")
    lines = [header]
    for row in zip(*cols):
        lines.append(",".join(fmt_float(v) for v in row))
    write_text(path, "\n".join(lines) + "\n")
    return os.fspath(path)


def read_csv(path):
    """Header and a float array (rows x columns)."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return header, data


def write_text(path, text: str):
    path = os.fspath(path)
    try:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _clean(o):
    # JSON has no inf/nan; encode them as strings
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, np.ndarray):
        return _clean(o.tolist())
    if isinstance(o, np.generic):
        o = o.item()
    if isinstance(o, float) and not math.isfinite(o):
        return repr(o)
    return o


def write_json(path, obj) -> str:
    text = json.dumps(_clean(obj), indent=2, sort_keys=True, default=_json_default)
    write_text(path, text + "\n")
    return os.fspath(path)
