"""Text serialization of fields, masks and reports.

Field dumps are a one-line grid header followed by one value per line in C
order, written with ``repr`` so that reading back is bit-exact.
"""

from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path
from typing import Any, Union

import numpy as np

from .lattice import Grid, RegionMask, ScalarField

PathLike = Union[str, Path]


def format_field(field: ScalarField) -> str:
    body = "\n".join(repr(float(v)) for v in field.values.ravel(order="C"))
    return field.grid.header() + "\n" + body + "\n"


def parse_header(line: str) -> Grid:
    if not line.startswith("#"):
        raise ValueError("field dump must start with a '# dim=...' header")
    items = dict(tok.split("=", 1) for tok in line[1:].split())
    try:
        n = int(items["dim"])
        dims = tuple(int(d) for d in items["dims"].split(","))
        extent = tuple(float(e) for e in items["extent"].split(","))
        spacing = float(items["spacing"])
    except KeyError as exc:
        raise ValueError(f"header is missing {exc.args[0]!r}") from None
    grid = Grid(n, extent, spacing)
    if grid.dims != dims:
        raise ValueError(f"header dims {dims} disagree with extent/spacing {grid.dims}")
    return grid


def parse_field(text: str) -> ScalarField:
    lines = text.splitlines()
    if not lines:
        raise ValueError("empty field dump")
    grid = parse_header(lines[0])
    vals = np.array([float(t) for t in lines[1:] if t.strip()], dtype=float)
    if vals.size != grid.size:
        raise ValueError(f"expected {grid.size} values, found {vals.size}")
    return ScalarField(grid, vals.reshape(grid.dims, order="C"))


def write_field(path: PathLike, field: ScalarField) -> Path:
    path = Path(path)
    path.write_text(format_field(field))
    return path


def read_field(path: PathLike) -> ScalarField:
    return parse_field(Path(path).read_text())


def format_mask(mask: RegionMask) -> str:
    """One row per cell center (C order) with its membership bit."""
    grid = mask.grid
    cols = ",".join(f"x{d}" for d in range(grid.n)) + ",member"
    centers = grid.centers().reshape(-1, grid.n)
    bits = mask.membership.ravel(order="C")
    rows = [grid.header(), cols]
    rows.extend(",".join(repr(float(c)) for c in xc) + f",{int(b)}"
                for xc, b in zip(centers, bits))
    return "\n".join(rows) + "\n"


def parse_mask(text: str) -> RegionMask:
    lines = text.splitlines()
    grid = parse_header(lines[0])
    bits = [int(row.rsplit(",", 1)[1]) for row in lines[2:] if row.strip()]
    if len(bits) != grid.size:
        raise ValueError(f"expected {grid.size} rows, found {len(bits)}")
    return RegionMask(grid, np.array(bits, dtype=bool).reshape(grid.dims, order="C"))


def to_jsonable(obj: Any) -> Any:
    """Dataclasses, numpy scalars/arrays and non-finite floats made JSON-safe."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)
                if f.repr}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        val = float(obj)
        if math.isnan(val):
            return "nan"
        if math.isinf(val):
            return "inf" if val > 0 else "-inf"
        return val
    return obj


def dump_json(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path: PathLike, obj: Any) -> Path:
    path = Path(path)
    path.write_text(dump_json(obj))
    return path


def rows_to_csv(header: list[str], rows) -> str:
    """CSV with ``repr`` floats; ``None`` becomes an empty cell."""
    def cell(v):
        if v is None:
            return ""
        if isinstance(v, (bool, np.bool_)):
            return "true" if v else "false"
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        return str(v)

    out = [",".join(header)]
    for row in rows:
        out.append(",".join(cell(v) for v in row))
    return "\n".join(out) + "\n"
