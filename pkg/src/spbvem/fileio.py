"""Legacy VTK export of solved fields and run provenance records."""
from __future__ import annotations

import json
import platform
import subprocess
import sys
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from .forms import Discretization
from .mesh import PolygonalMesh
from .solver import SolutionState

VTK_POLYGON = 7


def write_vtk(path, mesh: PolygonalMesh, point_data: dict | None = None, cell_data: dict | None = None,
              title: str = "spbvem solution") -> None:
    """ASCII legacy-VTK unstructured grid with POLYGON cells."""
    point_data = point_data or {}
    cell_data = cell_data or {}
    nv, nc = mesh.n_vertices, mesh.n_cells
    size = sum(len(c) + 1 for c in mesh.cells)
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {nv} double"]
    lines += [f"{x:.16e} {y:.16e} 0.0" for x, y in mesh.vertices]
    lines.append(f"CELLS {nc} {size}")
    lines += [" ".join(map(str, (len(c), *c))) for c in mesh.cells]
    lines.append(f"CELL_TYPES {nc}")
    lines += [str(VTK_POLYGON)] * nc
    for header, count, data in (("POINT_DATA", nv, point_data), ("CELL_DATA", nc, cell_data)):
        if not data:
            continue
        lines.append(f"{header} {count}")
        for name, values in data.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (count,):
                raise ValueError(f"{name}: expected {count} values, got shape {values.shape}")
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [f"{v:.16e}" for v in values]
    Path(path).write_text("\n".join(lines) + "\n")


def read_vtk_header(path) -> dict:
    """Minimal re-parser: point/cell counts, cell types and array names."""
    out = {"arrays": []}
    tokens = Path(path).read_text().split("\n")
    i = 0
    while i < len(tokens):
        parts = tokens[i].split()
        if parts and parts[0] == "POINTS":
            out["n_points"] = int(parts[1])
        elif parts and parts[0] == "CELLS":
            out["n_cells"] = int(parts[1])
        elif parts and parts[0] == "CELL_TYPES":
            n = int(parts[1])
            out["cell_types"] = sorted({int(t) for t in tokens[i + 1:i + 1 + n]})
            i += n
        elif parts and parts[0] == "SCALARS":
            out["arrays"].append(parts[1])
        i += 1
    return out


def vertex_field(disc: Discretization, coeff_mats, values) -> np.ndarray:
    """Vertex values of an element-wise polynomial projection, averaged over adjacent elements."""
    acc = np.zeros(disc.mesh.n_vertices)
    cnt = np.zeros(disc.mesh.n_vertices)
    for e, cell in enumerate(disc.mesh.cells):
        ws = disc.workspaces[e]
        c = coeff_mats[e] @ values[disc.dofmap.element_dofs[e]]
        acc[list(cell)] += ws.basis.values(ws.coords) @ c
        cnt[list(cell)] += 1
    return acc / np.maximum(cnt, 1)


def solution_point_data(disc: Discretization, state: SolutionState) -> dict:
    pnab = [p.Pnab for p in disc.projectors]
    p0 = [p.P0 for p in disc.projectors]
    u1 = vertex_field(disc, pnab, state.u[0])
    u2 = vertex_field(disc, pnab, state.u[1])
    nv = disc.mesh.n_vertices
    return {
        "velocity_magnitude": np.hypot(u1, u2),
        "velocity_x": u1,
        "velocity_y": u2,
        "pressure": vertex_field(disc, p0, state.p),
        "potential": state.psi[:nv],
    }


def code_version() -> str:
    try:
        version = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        version = "unknown"
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).parent, timeout=5).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        rev = ""
    return f"{version}+{rev}" if rev else version


def write_provenance(outdir, config: dict, argv=None) -> Path:
    record = {
        "config": config,
        "argv": list(sys.argv if argv is None else argv),
        "code_version": code_version(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }
    path = Path(outdir) / "run.json"
    path.write_text(json.dumps(record, indent=2, sort_keys=True))
    return path
