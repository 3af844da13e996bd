"""Result export: convergence tables (CSV/JSON) and legacy VTK field files.

All writers are deterministic: fixed column order, fixed float formats, no
timestamps, and key-sorted JSON, so identical inputs produce byte-identical
files.  The VTK writer emits a legacy 3.0 ASCII unstructured grid carrying
cell data only, because the H(div)/H(curl) solution fields have no
single-valued nodal representation.
"""

from __future__ import annotations

import json

import numpy as np

from .mesh import Mesh

CSV_COLUMNS = (
    "h", "e_J", "ord_J", "e_phi", "ord_phi",
    "e_Acurl", "ord_Acurl", "e_AL2", "ord_AL2", "divJ",
)

_ORDER_COLUMNS = frozenset(c for c in CSV_COLUMNS if c.startswith("ord_"))


def _cell_text(column: str, value) -> str:
    if value is None:
        return ""
    if column in _ORDER_COLUMNS:
        return f"{value:.4f}"
    return f"{value:.10e}"


def convergence_csv(rows: list[dict]) -> str:
    """Render convergence rows (one per mesh level) to CSV text."""
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join(_cell_text(c, row.get(c)) for c in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def write_convergence_csv(rows: list[dict], path: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(convergence_csv(rows))


def iteration_csv(runs: list[dict]) -> str:
    """Render preconditioner-study runs (one per mesh/Rm pair) to CSV text."""
    lines = ["n,rm,iterations,converged"]
    for run in runs:
        lines.append(
            f"{run['n']},{run['rm']:.10e},{run['iterations']},{str(bool(run['converged'])).lower()}"
        )
    return "\n".join(lines) + "\n"


def write_iteration_csv(runs: list[dict], path: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(iteration_csv(runs))


def canonical_json(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(payload, path: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(canonical_json(payload))


def _fmt3(v) -> str:
    return f"{v[0]:.10e} {v[1]:.10e} {v[2]:.10e}"


def vtk_unstructured(mesh: Mesh, cell_data: dict[str, np.ndarray], title: str = "mhdkin fields") -> str:
    """Legacy VTK 3.0 ASCII unstructured grid with per-cell arrays.

    ``cell_data`` maps array names to per-cell values: shape (C,) arrays
    become SCALARS sections, (C, 3) arrays VECTORS sections, written in
    insertion order.
    """
    C = mesh.num_cells
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.num_vertices} double",
    ]
    lines.extend(_fmt3(v) for v in mesh.vertices)
    lines.append(f"CELLS {C} {5 * C}")
    lines.extend("4 " + " ".join(str(i) for i in cell) for cell in mesh.cells)
    lines.append(f"CELL_TYPES {C}")
    lines.extend("10" for _ in range(C))
    if cell_data:
        lines.append(f"CELL_DATA {C}")
        for name, values in cell_data.items():
            values = np.asarray(values)
            if values.shape == (C,):
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(f"{v:.10e}" for v in values)
            elif values.shape == (C, 3):
                lines.append(f"VECTORS {name} double")
                lines.extend(_fmt3(v) for v in values)
            else:
                raise ValueError(f"cell array {name!r} has shape {values.shape}, need ({C},) or ({C}, 3)")
    return "\n".join(lines) + "\n"


def write_vtk(mesh: Mesh, cell_data: dict[str, np.ndarray], path: str, title: str = "mhdkin fields") -> None:
    with open(path, "w", newline="") as fh:
        fh.write(vtk_unstructured(mesh, cell_data, title=title))
