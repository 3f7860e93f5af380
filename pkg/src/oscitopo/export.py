"""Deterministic JSON/CSV rendering and atomic file output.

Floats are written with 17 significant digits so values round-trip exactly.
JSON keys are sorted and nothing time-dependent is emitted, so identical
inputs give byte-identical files.
"""

from __future__ import annotations

import enum
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np


def fmt_float(x: float) -> str:
    return format(float(x), ".16e")


def _render(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return "null" if obj is None else ("true" if obj else "false")
    if isinstance(obj, enum.Enum):
        return _render(obj.value, indent, level)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, (complex, np.complexfloating)):
        return _render([obj.real, obj.imag], indent, level)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, np.ndarray):
        return _render(obj.tolist(), indent, level)
    if hasattr(obj, "to_dict"):
        return _render(obj.to_dict(), indent, level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = sorted((str(k), v) for k, v in obj.items())
        body = (",\n").join(f"{pad}{json.dumps(k)}: {_render(v, indent, level + 1)}" for k, v in items)
        return "{\n" + body + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.number, str, bool)) or v is None for v in obj):
            return "[" + ", ".join(_render(v, indent, level + 1) for v in obj) + "]"
        body = (",\n").join(pad + _render(v, indent, level + 1) for v in obj)
        return "[\n" + body + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def to_json(obj, indent: int = 2) -> str:
    """Render ``obj`` as JSON with sorted keys and 17-digit floats."""
    return _render(obj, indent, 0) + "\n"


def write_atomic(path, text: str) -> Path:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if v is None:
                cells.append("")
            elif isinstance(v, (float, np.floating)):
                cells.append(fmt_float(v) if math.isfinite(v) else "nan")
            else:
                cells.append(str(v.value if isinstance(v, enum.Enum) else v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def trajectory_csv(traj) -> str:
    return _csv(("t", "x", "y", "z"), ((t, *s) for t, s in zip(traj.t, traj.states)))


def trajectory_meta(traj, extra: dict | None = None) -> dict:
    meta = {
        "params": traj.params.to_dict() if traj.params is not None else None,
        "config": traj.cfg.to_dict() if traj.cfg is not None else None,
        "reverse": traj.reverse,
        "fate": traj.fate.to_dict() if traj.fate is not None else None,
        "n_samples": int(len(traj.t)),
        "t_start": traj.t0,
        "t_end": traj.t_end,
    }
    if extra:
        meta.update(extra)
    return meta


def section_csv(points) -> str:
    return _csv(("t", "x", "z", "speed", "kind"), ((p.t, p.x, p.z, p.speed, p.kind) for p in points))


def sweep_csv(curve) -> str:
    rows = []
    for r in curve.records:
        st = r.exit_state if r.exit_state is not None else (None, None, None)
        rows.append((r.s, r.t_exit, r.exit_surface, *st))
    return _csv(("s", "t_exit", "exit_surface", "x", "y", "z"), rows)
