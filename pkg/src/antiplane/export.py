"""Plain-text result files: CSV tables and legacy VTK.

Floats are written with ``repr`` so identical runs give identical bytes.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np


def fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(value)


def write_table(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_table(path):
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]


def write_field_csv(path, mesh, values):
    """One row per vertex: vertex_id,x,y,value."""
    values = np.asarray(values, dtype=float)
    if values.shape != (mesh.n_vertices,):
        raise ValueError(f"field has shape {values.shape}, mesh has {mesh.n_vertices} vertices")
    rows = ((i, x, y, v) for i, ((x, y), v) in enumerate(zip(mesh.vertices, values)))
    return write_table(path, ["vertex_id", "x", "y", "value"], rows)


def read_field_csv(path, n_vertices=None):
    header, rows = read_table(path)
    if header != ["vertex_id", "x", "y", "value"]:
        raise ValueError(f"{path}: expected header vertex_id,x,y,value")
    ids = np.array([int(r[0]) for r in rows])
    vals = np.array([float(r[3]) for r in rows])
    n = (ids.max() + 1 if ids.size else 0) if n_vertices is None else n_vertices
    out = np.zeros(n)
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise ValueError(f"{path}: vertex id out of range")
    out[ids] = vals
    return out


def write_vtk(path, mesh, fields, title="antiplane field"):
    """Legacy ASCII unstructured grid with the given per-vertex POINT_DATA."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_vertices} double"]
    lines += [f"{fmt(x)} {fmt(y)} 0.0" for x, y in mesh.vertices]
    m = mesh.n_triangles
    lines.append(f"CELLS {m} {4 * m}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {m}")
    lines += ["5"] * m
    lines.append(f"POINT_DATA {mesh.n_vertices}")
    for name, values in fields.items():
        values = np.asarray(values, dtype=float)
        if values.shape != (mesh.n_vertices,):
            raise ValueError(f"field {name!r} has the wrong length")
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [fmt(v) for v in values]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_beta_csv(path, grid, contact_vertices, beta):
    """Trajectory rows t,vertex_id,beta in time-major order."""
    beta = np.asarray(beta, dtype=float)
    rows = ((t, int(v), b) for t, row in zip(grid.nodes, beta) for v, b in zip(contact_vertices, row))
    return write_table(path, ["t", "vertex_id", "beta"], rows)


def write_convergence_csv(path, report):
    return write_table(path, ["iteration", "e_u", "e_beta", "ratio", "inner_iterations", "picard_iterations"],
                       report.rows())


def write_summary_csv(path, items):
    return write_table(path, ["key", "value"], items)
