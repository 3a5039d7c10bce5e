"""
Builtin geometries used by the manufactured cases and demos.
"""
from __future__ import annotations

import numpy as np

from modules.geometry.maps import (
    RationalSplineMap, SplineMap, curved_square_map, identity_map,
)
from modules.geometry.multipatch import (
    DIRICHLET, TRACTION, Interface, MultiPatchTopology, build_multipatch,
)
from modules.splines.bspline import Edge, TensorSplineSpace, make_open_knots

# Offset of the mid-edge control points that bend the four-patch interfaces
FOURPATCH_BEND = 0.15

DISK_RADIUS = 2.0
# Half-width of the inner square before the 45 degree rotation
DISK_INNER = 0.7


def bezier_space(degree: int = 2) -> TensorSplineSpace:
    kv = make_open_knots(degree, [0.0, 1.0], degree - 1)
    return TensorSplineSpace([kv, kv])


def curved_square_spline() -> SplineMap:
    """The curved square (z1, z1^2 + z2) written exactly as a biquadratic net."""
    g = np.array([0.0, 0.5, 1.0])
    s = np.array([0.0, 0.0, 1.0])    # Bernstein coefficients of z1^2
    cp = [(g[i1], s[i1] + g[i2]) for i2 in range(3) for i1 in range(3)]
    return SplineMap(bezier_space(2), cp, name="curved-square-spline")


def _grid_net(x0: float, y0: float, size: float):
    return np.array([[x0 + 0.5 * size * i1, y0 + 0.5 * size * i2] for i2 in range(3) for i1 in range(3)])


def fourpatch_square(bend: float = FOURPATCH_BEND) -> MultiPatchTopology:
    """
    [-1,1]^2 split into four biquadratic patches. The interior interfaces are
    S-shaped curves through the origin; parametric axes follow x and y.
    """
    c = bend
    ll = _grid_net(-1.0, -1.0, 1.0)
    lr = _grid_net(0.0, -1.0, 1.0)
    ul = _grid_net(-1.0, 0.0, 1.0)
    ur = _grid_net(0.0, 0.0, 1.0)
    # index i1 + 3 * i2
    ll[2 + 3 * 1] = (c, -0.5)       # east middle
    ll[1 + 3 * 2] = (-0.5, c)       # north middle
    lr[0 + 3 * 1] = (c, -0.5)       # west middle
    lr[1 + 3 * 2] = (0.5, -c)       # north middle
    ul[2 + 3 * 1] = (-c, 0.5)       # east middle
    ul[1 + 3 * 0] = (-0.5, c)       # south middle
    ur[0 + 3 * 1] = (-c, 0.5)       # west middle
    ur[1 + 3 * 0] = (0.5, -c)       # south middle
    space = bezier_space(2)
    patches = [
        SplineMap(space, ll, name="fourpatch-ll"),
        SplineMap(space, lr, name="fourpatch-lr"),
        SplineMap(space, ul, name="fourpatch-ul"),
        SplineMap(space, ur, name="fourpatch-ur"),
    ]
    interfaces = [
        Interface(0, Edge.EAST, 1, Edge.WEST),
        Interface(0, Edge.NORTH, 2, Edge.SOUTH),
        Interface(1, Edge.NORTH, 3, Edge.SOUTH),
        Interface(2, Edge.EAST, 3, Edge.WEST),
    ]
    return build_multipatch({"patches": patches, "interfaces": interfaces})


def _rotate(points: np.ndarray, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    R = np.array([[c, -s], [s, c]])
    return points @ R.T


def disk_patches(radius: float = DISK_RADIUS, inner: float = DISK_INNER):
    """
    Five rational biquadratic patches: a central square and four ring patches,
    everything rotated by 45 degrees so that the ring patches span the quarter arcs
    [0, 90], [90, 180], [180, 270], [270, 360] degrees.

    Ring patch: zeta1 runs from the inner square edge to the arc, zeta2
    counter-clockwise. Returns (patches, interfaces).
    """
    a = inner
    w_arc = 1.0 / np.sqrt(2.0)
    corner = radius / np.sqrt(2.0)
    # unrotated ring patch centred on the positive x-axis
    inner_row = np.array([[a, -a], [a, 0.0], [a, a]])
    outer_row = np.array([[corner, -corner], [radius * np.sqrt(2.0), 0.0], [corner, corner]])
    mid_row = 0.5 * (inner_row + outer_row)
    rows = [inner_row, mid_row, outer_row]      # indexed by i1
    cp = np.array([rows[i1][i2] for i2 in range(3) for i1 in range(3)])
    w_mid = 0.5 * (1.0 + w_arc)
    wts = np.array([[1.0, 1.0, 1.0], [1.0, w_mid, 1.0], [1.0, w_arc, 1.0]])   # [i1][i2]
    weights = np.array([wts[i1][i2] for i2 in range(3) for i1 in range(3)])

    space = bezier_space(2)
    patches = []
    centre = _grid_net(-a, -a, 2.0 * a)
    patches.append(SplineMap(space, _rotate(centre, np.pi / 4.0), name="disk-centre"))
    for k in range(4):
        angle = np.pi / 4.0 + k * np.pi / 2.0
        patches.append(RationalSplineMap(space, _rotate(cp, angle), weights, name=f"disk-ring{k}"))

    interfaces = [
        # centre edges against the inner edges of the ring patches
        Interface(0, Edge.EAST, 1, Edge.WEST, False),
        Interface(0, Edge.NORTH, 2, Edge.WEST, True),
        Interface(0, Edge.WEST, 3, Edge.WEST, True),
        Interface(0, Edge.SOUTH, 4, Edge.WEST, False),
        # radial edges between consecutive ring patches
        Interface(1, Edge.NORTH, 2, Edge.SOUTH, False),
        Interface(2, Edge.NORTH, 3, Edge.SOUTH, False),
        Interface(3, Edge.NORTH, 4, Edge.SOUTH, False),
        Interface(4, Edge.NORTH, 1, Edge.SOUTH, False),
    ]
    return patches, interfaces


def loaded_disk() -> MultiPatchTopology:
    """Disk of radius 2: traction on the upper half of the rim, clamped lower half."""
    patches, interfaces = disk_patches()
    boundary = {
        (1, Edge.EAST): TRACTION,
        (2, Edge.EAST): TRACTION,
        (3, Edge.EAST): DIRICHLET,
        (4, Edge.EAST): DIRICHLET,
    }
    return build_multipatch({"patches": patches, "interfaces": interfaces, "boundary": boundary})


GEOMETRIES = {
    "identity": lambda: build_multipatch({"patches": [identity_map()]}),
    "curved-square": lambda: build_multipatch({"patches": [curved_square_map()]}),
    "curved-square-spline": lambda: build_multipatch({"patches": [curved_square_spline()]}),
    "fourpatch-square": fourpatch_square,
    "disk": loaded_disk,
}


def builtin_geometry(name: str) -> MultiPatchTopology:
    if name not in GEOMETRIES:
        raise KeyError(f"unknown geometry {name!r}; choose from {sorted(GEOMETRIES)}")
    return GEOMETRIES[name]()
