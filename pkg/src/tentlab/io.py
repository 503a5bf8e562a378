"""Field serialization.

Binary layout (all little-endian float64):

* field record: ``dim, N, L, components`` followed by the physical values in C
  order, components first (``components`` is 1, ``n`` or ``n*n``);
* space-time file: ``count, t_min, ratio`` followed by ``count`` field records.

JSON stores the same header keys and nested value lists; it is meant for small
fields.
"""
from __future__ import annotations

import json

import numpy as np

from .grid import Field, Grid, SpaceTimeField, TimeGrid

__all__ = ["field_to_bytes", "field_from_bytes", "write_field", "read_field",
           "write_spacetime", "read_spacetime", "field_to_json", "field_from_json"]

_LE = np.dtype("<f8")


def _comp_shape(dim: int, components: int) -> tuple:
    for shape in ((), (dim,), (dim, dim)):
        if int(np.prod(shape)) == components:
            return shape
    raise ValueError(f"{components} components do not form a scalar, vector or tensor in {dim}D")


def field_to_bytes(f: Field) -> bytes:
    g = f.grid
    comps = int(np.prod(f.components)) if f.rank else 1
    header = np.array([g.dim, g.size, g.box, comps], dtype=_LE)
    return header.tobytes() + np.ascontiguousarray(f.values, dtype=_LE).tobytes()


def _parse_record(buf: np.ndarray, pos: int) -> tuple[Field, int]:
    dim, size, box, comps = buf[pos : pos + 4]
    dim, size, comps = int(dim), int(size), int(comps)
    grid = Grid(dim, size, float(box))
    shape = _comp_shape(dim, comps) + grid.shape
    count = int(np.prod(shape))
    start = pos + 4
    if start + count > len(buf):
        raise ValueError("truncated field record")
    vals = buf[start : start + count].reshape(shape)
    return Field.from_values(grid, vals), start + count


def field_from_bytes(data: bytes) -> Field:
    buf = np.frombuffer(data, dtype=_LE)
    f, end = _parse_record(buf, 0)
    if end != len(buf):
        raise ValueError("trailing data after field record")
    return f


def write_field(path, f: Field) -> None:
    with open(path, "wb") as fh:
        fh.write(field_to_bytes(f))


def read_field(path) -> Field:
    with open(path, "rb") as fh:
        return field_from_bytes(fh.read())


def write_spacetime(path, u: SpaceTimeField) -> None:
    T = u.times
    with open(path, "wb") as fh:
        fh.write(np.array([T.count, T.t_min, T.ratio], dtype=_LE).tobytes())
        for j in range(T.count):
            fh.write(field_to_bytes(u.slice(j)))


def read_spacetime(path) -> SpaceTimeField:
    with open(path, "rb") as fh:
        buf = np.frombuffer(fh.read(), dtype=_LE)
    count, t_min, ratio = buf[:3]
    times = TimeGrid(float(t_min), float(ratio), int(count))
    pos, slices = 3, []
    for _ in range(times.count):
        f, pos = _parse_record(buf, pos)
        slices.append(f)
    if pos != len(buf):
        raise ValueError("trailing data after space-time records")
    return SpaceTimeField.from_slices(times, slices)


def field_to_json(f: Field) -> str:
    g = f.grid
    comps = int(np.prod(f.components)) if f.rank else 1
    return json.dumps({"dim": g.dim, "N": g.size, "L": g.box, "components": comps,
                       "values": f.values.tolist()})


def field_from_json(text: str) -> Field:
    d = json.loads(text)
    grid = Grid(int(d["dim"]), int(d["N"]), float(d["L"]))
    vals = np.asarray(d["values"], dtype=float)
    expected = _comp_shape(grid.dim, int(d["components"])) + grid.shape
    if vals.shape != expected:
        raise ValueError(f"values have shape {vals.shape}, expected {expected}")
    return Field.from_values(grid, vals)
