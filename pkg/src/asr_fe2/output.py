"""History records, CSV emission and legacy VTK field dumps."""
from __future__ import annotations

import csv
import io
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ParameterError

HISTORY_HEADER = ("t_days", "strain_x", "strain_y", "crack_density_aggregate",
                  "crack_density_mortar", "rel_stiffness_x", "rel_stiffness_y", "n_damaged")


@dataclass(frozen=True)
class HistoryRecord:
    t_days: float
    strain_x: float
    strain_y: float
    crack_density_aggregate: float
    crack_density_mortar: float
    rel_stiffness_x: float
    rel_stiffness_y: float
    n_damaged: int


def history_to_csv(history):
    """CSV text; floats are written with repr so parsing gives them back exactly."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HISTORY_HEADER)
    for rec in history:
        writer.writerow([repr(float(v)) if not isinstance(v, int) else str(v)
                         for v in astuple(rec)])
    return buf.getvalue()


def history_from_csv(text):
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != HISTORY_HEADER:
        raise ParameterError("unexpected history header")
    kinds = [f.type for f in fields(HistoryRecord)]
    out = []
    for row in reader:
        if not row:
            continue
        if len(row) != len(HISTORY_HEADER):
            raise ParameterError(f"history row has {len(row)} columns")
        out.append(HistoryRecord(*[int(v) if k == "int" else float(v)
                                   for v, k in zip(row, kinds)]))
    return out


def write_history(path, history):
    Path(path).write_text(history_to_csv(history))


def read_history(path):
    return history_from_csv(Path(path).read_text())


def write_vtk(path, mesh, cell_data, title="asr_fe2 fields"):
    """Legacy ASCII VTK (v3.0) unstructured grid of triangles with scalar cell data."""
    n_el = mesh.n_elements
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_nodes} double"]
    lines += [f"{x!r} {y!r} 0.0" for x, y in mesh.nodes.tolist()]
    lines.append(f"CELLS {n_el} {4 * n_el}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
    lines.append(f"CELL_TYPES {n_el}")
    lines += ["5"] * n_el
    lines.append(f"CELL_DATA {n_el}")
    for name, values in cell_data.items():
        values = np.asarray(values)
        if values.shape != (n_el,):
            raise ParameterError(f"cell field {name!r} has shape {values.shape}")
        kind = "int" if np.issubdtype(values.dtype, np.integer) else "double"
        lines.append(f"SCALARS {name} {kind} 1")
        lines.append("LOOKUP_TABLE default")
        lines += [repr(v) for v in values.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")
