"""
Patch geometry files.

Schema (JSON object):

    {
      "patches": [
        {"kind": "analytic", "name": "curved-square"},
        {"kind": "spline" | "rational", "name": "...",
         "degrees": [p1, p2], "knots": [[...], [...]],
         "control_points": [["x", "y"], ...],       # i1 + n1 * i2 order
         "weights": ["w", ...]}                      # rational only
      ],
      "interfaces": [{"patch_a": 0, "edge_a": "EAST", "patch_b": 1, "edge_b": "WEST", "reversed": false}],
      "boundary": [{"patch": 0, "edge": "WEST", "tag": "dirichlet"}]
    }

Real numbers are written as ``repr`` strings so loading restores them bit for bit.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from modules.geometry.maps import (
    AnalyticMap, GeometryMap, RationalSplineMap, SplineMap, curved_square_map, identity_map,
)
from modules.geometry.multipatch import MultiPatchTopology, build_multipatch
from modules.splines.bspline import KnotVector, TensorSplineSpace

logger = logging.getLogger(__name__)

ANALYTIC_MAPS = {
    "identity": identity_map,
    "curved-square": curved_square_map,
}


def _num(x: float) -> str:
    return repr(float(x))


def _encode_patch(gmap: GeometryMap) -> dict:
    if isinstance(gmap, AnalyticMap):
        if gmap.name not in ANALYTIC_MAPS:
            raise ValueError(f"analytic map {gmap.name!r} has no file representation")
        return {"kind": "analytic", "name": gmap.name}
    entry = {
        "kind": gmap.kind,
        "name": gmap.name,
        "degrees": [kv.p for kv in gmap.space.kvs],
        "knots": [[_num(k) for k in kv.knots] for kv in gmap.space.kvs],
        "control_points": [[_num(x), _num(y)] for x, y in gmap.control_points],
    }
    if isinstance(gmap, RationalSplineMap):
        entry["weights"] = [_num(w) for w in gmap.weights]
    return entry


def _decode_patch(entry: dict) -> GeometryMap:
    kind = entry.get("kind")
    if kind == "analytic":
        name = entry["name"]
        if name not in ANALYTIC_MAPS:
            raise ValueError(f"unknown analytic map {name!r}")
        return ANALYTIC_MAPS[name]()
    if kind not in ("spline", "rational"):
        raise ValueError(f"unknown patch kind {kind!r}")
    kvs = [KnotVector(int(p), [float(k) for k in knots]) for p, knots in zip(entry["degrees"], entry["knots"])]
    space = TensorSplineSpace(kvs)
    cp = np.array([[float(x), float(y)] for x, y in entry["control_points"]])
    if kind == "rational":
        weights = np.array([float(w) for w in entry["weights"]])
        return RationalSplineMap(space, cp, weights, name=entry.get("name"))
    return SplineMap(space, cp, name=entry.get("name"))


def topology_to_dict(topo: MultiPatchTopology) -> dict:
    return {
        "patches": [_encode_patch(g) for g in topo.patches],
        "interfaces": [
            {
                "patch_a": i.patch_a, "edge_a": i.edge_a.name,
                "patch_b": i.patch_b, "edge_b": i.edge_b.name,
                "reversed": bool(i.reversed),
            }
            for i in topo.interfaces
        ],
        "boundary": [
            {"patch": patch, "edge": edge.name, "tag": tag}
            for (patch, edge), tag in sorted(topo.boundary.items())
        ],
    }


def topology_from_dict(data: dict) -> MultiPatchTopology:
    if "patches" not in data:
        raise ValueError("geometry file has no 'patches' entry")
    return build_multipatch({
        "patches": [_decode_patch(e) for e in data["patches"]],
        "interfaces": list(data.get("interfaces", [])),
        "boundary": {(b["patch"], b["edge"]): b["tag"] for b in data.get("boundary", [])},
    })


def save_topology(topo: MultiPatchTopology, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(topology_to_dict(topo), indent=2), encoding="utf-8")
    logger.info(f"geometry written to {path}")
    return path


def load_topology(path) -> MultiPatchTopology:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: invalid JSON ({e})") from e
    return topology_from_dict(data)
