"""Deterministic file output: 6-significant-digit numbers, atomic writes."""

from __future__ import annotations

import json
import math
import os
import tempfile


def round_sig(x: float, digits: int = 6) -> float:
    """Round to ``digits`` significant digits (stable golden-file floats)."""
    if x == 0 or not math.isfinite(x):
        return x
    return round(x, digits - 1 - int(math.floor(math.log10(abs(x)))))


def round_tree(obj, digits: int = 6):
    """Recursively round every float in a JSON-ish structure."""
    if isinstance(obj, float):
        return round_sig(obj, digits)
    if isinstance(obj, dict):
        return {k: round_tree(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_tree(v, digits) for v in obj]
    return obj


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file + rename so readers never see partial output."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj) -> None:
    """Sorted-key JSON with floats rounded to 6 significant digits."""
    text = json.dumps(round_tree(obj), sort_keys=True, indent=2) + "\n"
    atomic_write_text(path, text)
