"""Deterministic file formats: JSON and CSV writers with fixed layout.

All numeric output carries 17 significant digits so that re-reading a
file reproduces the original float64 bit patterns exactly; identical
inputs therefore produce byte-identical files.  CSVs use '.' decimals,
',' separators and a header row, independent of locale.
"""

from __future__ import annotations

import hashlib
import math
from pathlib import Path

import numpy as np

from .dual_solver import DualGrid
from .errors import ConfigError
from .params import ProblemSpec
from .policy import PolicyTable

__all__ = [
    "fmt_float",
    "json_dumps",
    "write_json",
    "write_dual_csv",
    "read_dual_csv",
    "write_policy_csv",
    "read_policy_csv",
    "sha256_bytes",
    "sha256_file",
]


def fmt_float(x: float) -> str:
    """17-significant-digit decimal form of a finite float."""
    if not math.isfinite(x):
        raise ValueError(f"refusing to serialize non-finite float {x}")
    s = f"{x:.17g}"
    if not any(ch in s for ch in ".eE"):
        s += ".0"
    return s


def _json_encode(obj, pieces: list, indent: int):
    pad = " " * indent
    if obj is None:
        pieces.append("null")
    elif obj is True:
        pieces.append("true")
    elif obj is False:
        pieces.append("false")
    elif isinstance(obj, str):
        pieces.append('"' + obj.replace("\\", "\\\\").replace('"', '\\"') + '"')
    elif isinstance(obj, (int, np.integer)):
        pieces.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        pieces.append(fmt_float(float(obj)))
    elif isinstance(obj, dict):
        if not obj:
            pieces.append("{}")
            return
        pieces.append("{\n")
        for i, (key, val) in enumerate(obj.items()):
            if not isinstance(key, str):
                raise ValueError("JSON object keys must be strings")
            pieces.append(pad + "  " + '"' + key + '": ')
            _json_encode(val, pieces, indent + 2)
            pieces.append(",\n" if i < len(obj) - 1 else "\n")
        pieces.append(pad + "}")
    elif isinstance(obj, (list, tuple)):
        if not len(obj):
            pieces.append("[]")
            return
        pieces.append("[\n")
        for i, val in enumerate(obj):
            pieces.append(pad + "  ")
            _json_encode(val, pieces, indent + 2)
            pieces.append(",\n" if i < len(obj) - 1 else "\n")
        pieces.append(pad + "]")
    else:
        raise ValueError(f"cannot serialize {type(obj).__name__}")


def json_dumps(obj) -> str:
    pieces: list[str] = []
    _json_encode(obj, pieces, 0)
    pieces.append("\n")
    return "".join(pieces)


def write_json(path: str | Path, obj) -> bytes:
    data = json_dumps(obj).encode("utf-8")
    Path(path).write_bytes(data)
    return data


def _csv_row(values) -> str:
    return ",".join(f"{v:.16e}" for v in values)


def write_dual_csv(path: str | Path, grid: DualGrid) -> bytes:
    lines = ["y,v,v_y,v_yy"]
    for row in zip(grid.y, grid.v, grid.v_y, grid.v_yy):
        lines.append(_csv_row(row))
    data = ("\n".join(lines) + "\n").encode("utf-8")
    Path(path).write_bytes(data)
    return data


def read_dual_csv(path: str | Path) -> dict[str, np.ndarray]:
    cols = _read_csv(path, ("y", "v", "v_y", "v_yy"))
    return {name: np.asarray(vals, dtype=float) for name, vals in cols.items()}


def write_policy_csv(path: str | Path, table: PolicyTable) -> bytes:
    lines = ["x,V,V_x,V_xx,c_star,pi_star,region"]
    for i in range(table.n_nodes):
        nums = (table.x[i], table.V[i], table.V_x[i], table.V_xx[i],
                table.c_star[i], table.pi_star[i])
        lines.append(_csv_row(nums) + "," + str(table.region[i]))
    data = ("\n".join(lines) + "\n").encode("utf-8")
    Path(path).write_bytes(data)
    return data


def read_policy_csv(path: str | Path, spec: ProblemSpec,
                    x_star_list=()) -> PolicyTable:
    """Rebuild a PolicyTable from file without revalidating invariants
    (verification checks are the place corrupted data should surface)."""
    names = ("x", "V", "V_x", "V_xx", "c_star", "pi_star", "region")
    cols = _read_csv(path, names)
    return PolicyTable(
        spec=spec,
        x=np.asarray(cols["x"], dtype=float),
        V=np.asarray(cols["V"], dtype=float),
        V_x=np.asarray(cols["V_x"], dtype=float),
        V_xx=np.asarray(cols["V_xx"], dtype=float),
        c_star=np.asarray(cols["c_star"], dtype=float),
        pi_star=np.asarray(cols["pi_star"], dtype=float),
        region=np.asarray(cols["region"]),
        x_star_list=tuple(x_star_list),
    )


def _read_csv(path: str | Path, expected_header: tuple[str, ...]) -> dict[str, list]:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or tuple(lines[0].split(",")) != expected_header:
        raise ConfigError(f"{path}: expected header {','.join(expected_header)}")
    cols: dict[str, list] = {name: [] for name in expected_header}
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(expected_header):
            raise ConfigError(f"{path}: malformed row {ln!r}")
        for name, part in zip(expected_header, parts):
            cols[name].append(part if name == "region" else float(part))
    return cols


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    return sha256_bytes(Path(path).read_bytes())
