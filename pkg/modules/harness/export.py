"""
Point-data sampling of solved fields and legacy ASCII VTK output.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd

from modules.core import config
from modules.geometry.multipatch import DIRICHLET, TRACTION

logger = logging.getLogger(__name__)

VTK_HEADER = "# vtk DataFile Version 3.0"


def stress_magnitude(sigma: np.ndarray) -> np.ndarray:
    """sqrt(s11^2 + 2 s12^2 + s22^2) with s12 the mean of the off-diagonals."""
    s12 = 0.5 * (sigma[:, 0, 1] + sigma[:, 1, 0])
    return np.sqrt(sigma[:, 0, 0] ** 2 + 2.0 * s12 ** 2 + sigma[:, 1, 1] ** 2)


def sample_patch(solution, patch: int, per_element: int = None) -> Tuple[pd.DataFrame, Tuple[int, int]]:
    """Fields on a uniform grid of one patch; rows in x-fastest grid order."""
    per_element = per_element or config.VTK_POINTS_PER_ELEMENT
    bp1, bp2 = solution.breakpoints(patch)
    z1 = np.linspace(0.0, 1.0, per_element * (bp1.size - 1) + 1)
    z2 = np.linspace(0.0, 1.0, per_element * (bp2.size - 1) + 1)
    f = solution.fields(patch, z1, z2)
    sigma = f["sigma"]
    frame = pd.DataFrame({
        "x": f["x"][:, 0],
        "y": f["x"][:, 1],
        "u_x": f["u"][:, 0],
        "u_y": f["u"][:, 1],
        "sigma_xx": sigma[:, 0, 0],
        "sigma_xy": 0.5 * (sigma[:, 0, 1] + sigma[:, 1, 0]),
        "sigma_yy": sigma[:, 1, 1],
        "stress_magnitude": stress_magnitude(sigma),
    })
    return frame, (z1.size, z2.size)


def write_vtk(path, frame: pd.DataFrame, shape: Tuple[int, int], title: str = "isoelast") -> Path:
    """Structured grid with displacement vectors and stress scalars as point data."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = len(frame)
    zeros = np.zeros(n)
    with path.open("w") as fh:
        fh.write(f"{VTK_HEADER}\n{title}\nASCII\nDATASET STRUCTURED_GRID\n")
        fh.write(f"DIMENSIONS {shape[0]} {shape[1]} 1\nPOINTS {n} double\n")
        pd.DataFrame({"x": frame["x"], "y": frame["y"], "z": zeros}).to_csv(
            fh, sep=" ", header=False, index=False, float_format="%.10e")
        fh.write(f"POINT_DATA {n}\nVECTORS displacement double\n")
        pd.DataFrame({"x": frame["u_x"], "y": frame["u_y"], "z": zeros}).to_csv(
            fh, sep=" ", header=False, index=False, float_format="%.10e")
        for name in ("sigma_xx", "sigma_xy", "sigma_yy", "stress_magnitude"):
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            frame[[name]].to_csv(fh, sep=" ", header=False, index=False, float_format="%.10e")
    return path


def export_solution(solution, out_dir, stem: str) -> List[Path]:
    paths = []
    for patch in range(solution.npatches):
        frame, shape = sample_patch(solution, patch)
        paths.append(write_vtk(Path(out_dir) / f"{stem}_patch{patch}.vtk", frame, shape, title=f"{stem} patch {patch}"))
    logger.debug(f"wrote {len(paths)} VTK file(s) for {stem}")
    return paths


# ==========================================
# STRESS MAGNITUDE REPORT
# ==========================================

def junction_points(topo, tags: Dict) -> np.ndarray:
    """Physical points where a displacement edge meets a traction edge."""
    ends = {DIRICHLET: [], TRACTION: []}
    for (patch, edge), tag in tags.items():
        gmap = topo.patches[patch]
        for s in (0.0, 1.0):
            z1, z2 = edge.point(np.array([s]))
            ends[tag].append(gmap(z1, z2)[0])
    out = []
    for a in ends[DIRICHLET]:
        for b in ends[TRACTION]:
            if np.linalg.norm(a - b) < 1e-9 and not any(np.linalg.norm(a - c) < 1e-9 for c in out):
                out.append(a)
    return np.array(out).reshape(-1, 2)


def stress_report(solution, topo, tags: Dict, radius: float = None) -> Dict:
    """Location and value of the largest stress magnitude, and maxima near Gamma_D / Gamma_t junctions."""
    radius = radius or config.JUNCTION_RADIUS
    frames = [sample_patch(solution, p)[0] for p in range(solution.npatches)]
    data = pd.concat(frames, ignore_index=True)
    top = data["stress_magnitude"].idxmax()
    report = {
        "max_stress_magnitude": float(data.loc[top, "stress_magnitude"]),
        "max_location": [float(data.loc[top, "x"]), float(data.loc[top, "y"])],
        "junctions": [],
    }
    xy = data[["x", "y"]].to_numpy()
    for point in junction_points(topo, tags):
        near = np.linalg.norm(xy - point, axis=1) <= radius
        value = float(data.loc[near, "stress_magnitude"].max()) if near.any() else float("nan")
        report["junctions"].append({"point": [float(point[0]), float(point[1])], "max_stress_magnitude": value})
    return report
