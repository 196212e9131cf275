"""File formats: the .smesh text mesh, JSON fields, legacy VTK and JSONL logs.

A ``.smesh`` file looks like::

    dim 2
    vertices 4
    0 0 1
    1 0 1
    1 1 1
    0 1 1
    cells 2
    0 1 2 1
    0 2 3 3

Each vertex line holds the coordinates and a boundary flag (0 or 1).  Each
cell line holds ``dim + 1`` vertex indices, followed in 2D by the apex
index.  Blank lines and text after ``#`` are ignored.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from ..cones.field import WavespeedField
from ..errors import InvalidArgument, ParseError
from ..mesh_core import SpaceMesh
from ..spacetime import INFLOW, OUTFLOW

VTK_TRIANGLE = 5
VTK_TETRA = 10


def _lines(path):
    text = Path(path).read_text()
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield no, line.split()


def _header(path, it, word):
    try:
        no, tok = next(it)
    except StopIteration:
        raise ParseError(path, "EOF", f"expected '{word} <n>'") from None
    if len(tok) != 2 or tok[0] != word:
        raise ParseError(path, no, f"expected '{word} <n>', got {' '.join(tok)!r}")
    try:
        value = int(tok[1])
    except ValueError:
        raise ParseError(path, no, f"{word} count must be an integer") from None
    if value < 0:
        raise ParseError(path, no, f"{word} count must be non-negative")
    return value


def _row(path, it, what):
    try:
        return next(it)
    except StopIteration:
        raise ParseError(path, "EOF", f"file ends before all {what} were read") from None


def load_mesh(path) -> SpaceMesh:
    """Read a ``.smesh`` file.

    Raises:
        ParseError: on any malformed line; the message names the line.
    """
    it = _lines(path)
    dim = _header(path, it, "dim")
    if dim not in (1, 2):
        raise ParseError(path, 1, f"dim must be 1 or 2, got {dim}")
    n = _header(path, it, "vertices")
    points, boundary = [], []
    for _ in range(n):
        no, tok = _row(path, it, "vertices")
        if len(tok) != dim + 1:
            raise ParseError(path, no, f"vertex line needs {dim} coordinates and a boundary flag")
        try:
            points.append([float(v) for v in tok[:dim]])
        except ValueError:
            raise ParseError(path, no, "vertex coordinate is not a number") from None
        if tok[dim] not in ("0", "1"):
            raise ParseError(path, no, f"boundary flag must be 0 or 1, got {tok[dim]!r}")
        boundary.append(tok[dim] == "1")
    m = _header(path, it, "cells")
    width = dim + 1 + (1 if dim == 2 else 0)
    cells, apex = [], []
    for _ in range(m):
        no, tok = _row(path, it, "cells")
        if len(tok) != width:
            raise ParseError(path, no, f"cell line needs {width} integers, got {len(tok)}")
        try:
            ids = [int(v) for v in tok]
        except ValueError:
            raise ParseError(path, no, "cell index is not an integer") from None
        cell = ids[: dim + 1]
        if any(not 0 <= v < n for v in cell):
            raise ParseError(path, no, f"cell index out of range 0..{n - 1}")
        if len(set(cell)) != len(cell):
            raise ParseError(path, no, "cell repeats a vertex")
        if dim == 2:
            if ids[3] not in cell:
                raise ParseError(path, no, f"apex {ids[3]} is not a vertex of the cell")
            apex.append(ids[3])
        cells.append(cell)
    extra = next(it, None)
    if extra is not None:
        raise ParseError(path, extra[0], "unexpected trailing content")
    try:
        return SpaceMesh(dim, np.array(points, dtype=float).reshape(n, dim),
                         np.array(cells, dtype=np.int64).reshape(m, dim + 1),
                         boundary=np.array(boundary, dtype=bool),
                         apex=np.array(apex, dtype=np.int64) if dim == 2 else None)
    except InvalidArgument as exc:
        raise ParseError(path, 1, str(exc)) from None


def dump_mesh(mesh: SpaceMesh) -> str:
    """Text of ``mesh`` in ``.smesh`` form; floats use ``repr`` so reading back is exact."""
    out = [f"dim {mesh.dim}", f"vertices {mesh.n_vertices}"]
    for x, b in zip(mesh.points, mesh.boundary):
        out.append(" ".join([*(repr(float(v)) for v in x), "1" if b else "0"]))
    out.append(f"cells {len(mesh.cells)}")
    for i, cell in enumerate(mesh.cells):
        ids = [int(v) for v in cell]
        if mesh.dim == 2:
            ids.append(int(mesh.apex[i]))
        out.append(" ".join(map(str, ids)))
    return "\n".join(out) + "\n"


def save_mesh(mesh: SpaceMesh, path) -> None:
    Path(path).write_text(dump_mesh(mesh))


def _finite_or_none(data):
    if isinstance(data, dict):
        return {k: _finite_or_none(v) for k, v in data.items()
                if not (isinstance(v, float) and math.isinf(v))}
    if isinstance(data, list):
        return [_finite_or_none(v) for v in data]
    return data


def load_field(path) -> WavespeedField:
    """Read a field from JSON (``default`` plus ``regions``; later regions win)."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, exc.msg) from None
    try:
        return WavespeedField.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(path, 1, f"bad field description: {exc}") from None


def save_field(field: WavespeedField, path) -> None:
    Path(path).write_text(json.dumps(_finite_or_none(field.to_dict()), indent=2) + "\n")


def write_vtk(mesh, path, title: str = "tentpitcher spacetime mesh") -> None:
    """Write a spacetime mesh as a legacy ASCII VTK unstructured grid.

    Time is the last coordinate; 1D x time meshes are written in the
    ``z = 0`` plane as triangles, 2D x time meshes as tetrahedra.  Each
    cell carries its step and patch numbers and the local index of the
    corner opposite its outflow and inflow facets as cell data.
    """
    pts, conn = mesh.vertex_table()
    k = mesh.dim + 2
    ctype = VTK_TETRA if mesh.dim == 2 else VTK_TRIANGLE
    title = title.replace("\n", " ")[:255]
    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {len(pts)} double"]
    for row in pts:
        xyz = list(row) + [0.0] * (3 - len(row))
        out.append(" ".join(repr(float(v)) for v in xyz))
    out.append(f"CELLS {len(conn)} {len(conn) * (k + 1)}")
    for row in conn:
        out.append(" ".join(map(str, [k, *row])))
    out.append(f"CELL_TYPES {len(conn)}")
    out.extend([str(ctype)] * len(conn))
    if conn:
        out.append(f"CELL_DATA {len(conn)}")
        for name in ("step", "patch"):
            out.append(f"SCALARS {name} int 1")
            out.append("LOOKUP_TABLE default")
            out.extend(str(getattr(el, name)) for el in mesh.elements)
        for label in (OUTFLOW, INFLOW):
            out.append(f"SCALARS {label} int 1")
            out.append("LOOKUP_TABLE default")
            out.extend(str(el.labels.index(label) if label in el.labels else -1)
                       for el in mesh.elements)
    Path(path).write_text("\n".join(out) + "\n")


def read_vtk(path) -> dict:
    """Read back what :func:`write_vtk` writes.

    Returns a dict with ``title``, ``points`` (n x 3), ``cells`` (list of
    index lists), ``types`` and ``cell_data`` (name to list of ints).
    """
    lines = Path(path).read_text().splitlines()
    if len(lines) < 4 or not lines[0].startswith("# vtk DataFile"):
        raise ParseError(path, 1, "not a legacy VTK file")
    if lines[2].strip() != "ASCII":
        raise ParseError(path, 3, "only ASCII VTK is supported")
    out = {"title": lines[1], "points": np.empty((0, 3)), "cells": [], "types": [],
           "cell_data": {}}
    i = 3
    n_cells = 0
    while i < len(lines):
        tok = lines[i].split()
        i += 1
        if not tok:
            continue
        key = tok[0]
        try:
            if key == "POINTS":
                n = int(tok[1])
                out["points"] = np.array([[float(v) for v in lines[i + j].split()]
                                          for j in range(n)]).reshape(n, 3)
                i += n
            elif key == "CELLS":
                n_cells = int(tok[1])
                out["cells"] = [[int(v) for v in lines[i + j].split()[1:]] for j in range(n_cells)]
                i += n_cells
            elif key == "CELL_TYPES":
                n = int(tok[1])
                out["types"] = [int(lines[i + j]) for j in range(n)]
                i += n
            elif key == "SCALARS":
                i += 1
                out["cell_data"][tok[1]] = [int(lines[i + j]) for j in range(n_cells)]
                i += n_cells
        except (ValueError, IndexError):
            raise ParseError(path, i, f"malformed {key} section") from None
    return out


def write_events(events, path) -> None:
    """Write the event log as JSON lines, one object per step, keys sorted."""
    with open(path, "w") as fh:
        for ev in events:
            fh.write(json.dumps(_finite_or_none(dict(ev)), sort_keys=True) + "\n")


def read_events(path) -> list:
    out = []
    for no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            out.append(json.loads(raw))
        except json.JSONDecodeError as exc:
            raise ParseError(path, no, exc.msg) from None
    return out


__all__ = [
    "VTK_TETRA",
    "VTK_TRIANGLE",
    "dump_mesh",
    "load_field",
    "load_mesh",
    "read_events",
    "read_vtk",
    "save_field",
    "save_mesh",
    "write_events",
    "write_vtk",
]
