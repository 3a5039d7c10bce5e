"""
Multi-patch topology and interface DOF identification.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from modules.core import config
from modules.core.exceptions import ConformityError, BoundaryLayoutError
from modules.geometry.maps import GeometryMap
from modules.splines.bspline import Edge

logger = logging.getLogger(__name__)

DIRICHLET = "dirichlet"
TRACTION = "traction"


@dataclass(frozen=True)
class Interface:
    patch_a: int
    edge_a: Edge
    patch_b: int
    edge_b: Edge
    reversed: bool = False

    def match(self, s):
        """Edge parameter on patch b for edge parameter s on patch a."""
        return 1.0 - s if self.reversed else s


@dataclass
class MultiPatchTopology:
    patches: List[GeometryMap]
    interfaces: List[Interface] = field(default_factory=list)
    boundary: Dict[Tuple[int, Edge], str] = field(default_factory=dict)

    @property
    def npatches(self) -> int:
        return len(self.patches)

    def boundary_edges(self, tag: str = None) -> List[Tuple[int, Edge]]:
        return [key for key, t in self.boundary.items() if tag is None or t == tag]

    def interface_samples(self, iface: Interface, samples: int) -> float:
        s = np.linspace(0.0, 1.0, samples)
        xa = self.patches[iface.patch_a](*iface.edge_a.point(s))
        xb = self.patches[iface.patch_b](*iface.edge_b.point(iface.match(s)))
        return float(np.abs(xa - xb).max())


def build_multipatch(description) -> MultiPatchTopology:
    """
    Validate a topology description.

    ``description`` is a dict with ``patches`` (GeometryMap list), ``interfaces``
    (tuples or dicts: patch_a, edge_a, patch_b, edge_b, reversed) and ``boundary``
    ({(patch, edge): tag}). Untagged outer edges default to Dirichlet.
    """
    patches = list(description["patches"])
    if not patches:
        raise ConformityError("topology needs at least one patch")
    for gmap in patches:
        gmap.check_diffeomorphism()

    interfaces = []
    used = set()
    for raw in description.get("interfaces", []):
        if isinstance(raw, Interface):
            iface = raw
        elif isinstance(raw, dict):
            iface = Interface(int(raw["patch_a"]), Edge.parse(raw["edge_a"]),
                              int(raw["patch_b"]), Edge.parse(raw["edge_b"]),
                              bool(raw.get("reversed", False)))
        else:
            a, ea, b, eb, *rest = raw
            iface = Interface(int(a), Edge.parse(ea), int(b), Edge.parse(eb), bool(rest[0]) if rest else False)
        for key in ((iface.patch_a, iface.edge_a), (iface.patch_b, iface.edge_b)):
            if key in used:
                raise ConformityError(f"edge {key[1].name} of patch {key[0]} appears in two interfaces")
            used.add(key)
        interfaces.append(iface)

    topo = MultiPatchTopology(patches=patches, interfaces=interfaces)
    for iface in interfaces:
        gap = topo.interface_samples(iface, config.INTERFACE_SAMPLES)
        if gap > config.INTERFACE_TOL:
            raise ConformityError(
                f"interface {iface.patch_a}:{iface.edge_a.name} / {iface.patch_b}:{iface.edge_b.name} "
                f"does not match (gap {gap:.2e})"
            )

    tags = {}
    for key, tag in dict(description.get("boundary", {})).items():
        patch, edge = key
        key = (int(patch), Edge.parse(edge))
        if key in used:
            raise BoundaryLayoutError(f"edge {key[1].name} of patch {key[0]} is an interface")
        if tag not in (DIRICHLET, TRACTION):
            raise BoundaryLayoutError(f"unknown boundary tag {tag!r}")
        tags[key] = tag
    for p in range(len(patches)):
        for edge in Edge:
            if (p, edge) not in used:
                tags.setdefault((p, edge), DIRICHLET)
    topo.boundary = tags
    logger.debug(f"topology: {len(patches)} patches, {len(interfaces)} interfaces")
    return topo


def single_patch(gmap: GeometryMap, boundary=None) -> MultiPatchTopology:
    return build_multipatch({"patches": [gmap], "boundary": boundary or {}})


# ==========================================
# DOF IDENTIFICATION
# ==========================================

class DofMap:
    """
    Global numbering for per-patch local DOFs with signed identifications.

    ``glob[p][i]`` is the global index of local DOF i on patch p (-1 if dropped)
    and ``sign[p][i]`` the factor relating the two.
    """

    def __init__(self, local_sizes: Sequence[int], pairs=(), dropped=None):
        self.local_sizes = list(local_sizes)
        offsets = np.concatenate(([0], np.cumsum(self.local_sizes)))
        total = int(offsets[-1])
        parent = np.arange(total)
        parity = np.ones(total)   # sign relative to parent

        def find(i):
            s = 1.0
            root = i
            while parent[root] != root:
                s *= parity[root]
                root = parent[root]
            # path compression
            j, sj = i, s
            while parent[j] != root:
                nxt = parent[j]
                pj = parity[j]
                parent[j] = root
                parity[j] = sj
                sj *= pj
                j = nxt
            return root, s

        for (pa, ia, pb, ib, s) in pairs:
            a = offsets[pa] + ia
            b = offsets[pb] + ib
            ra, sa = find(a)
            rb, sb = find(b)
            if ra == rb:
                if not np.isclose(sa * sb, s):
                    raise ConformityError("inconsistent orientation in DOF identification")
                continue
            # value_b = s * value_a ; value_x = s_x * value_root
            parent[rb] = ra
            parity[rb] = s * sa * sb

        drop = np.zeros(total, dtype=bool)
        for (p, idx) in (dropped or {}).items():
            drop[offsets[p] + np.asarray(idx, dtype=int)] = True

        roots = np.empty(total, dtype=int)
        signs = np.empty(total)
        for i in range(total):
            roots[i], signs[i] = find(i)
        # a dropped DOF drops its whole class
        dropped_roots = set(roots[drop].tolist())
        numbering = {}
        glob = np.full(total, -1)
        for i in range(total):
            r = roots[i]
            if r in dropped_roots:
                continue
            if r not in numbering:
                numbering[r] = len(numbering)
            glob[i] = numbering[r]
        self.size = len(numbering)
        self.glob = [glob[offsets[p]:offsets[p + 1]] for p in range(len(self.local_sizes))]
        self.sign = [signs[offsets[p]:offsets[p + 1]] for p in range(len(self.local_sizes))]

    def prolongation(self, patch: int) -> sp.csr_matrix:
        """Sparse (n_local, n_global) matrix P with local = P @ global."""
        g = self.glob[patch]
        keep = np.nonzero(g >= 0)[0]
        return sp.csr_matrix(
            (self.sign[patch][keep], (keep, g[keep])),
            shape=(self.local_sizes[patch], self.size),
        )


def edge_pairs(iface: Interface, dofs_a: np.ndarray, dofs_b: np.ndarray, sign: float):
    """Pairs (patch_a, i, patch_b, j, sign) matching edge DOFs in edge order."""
    if dofs_a.size != dofs_b.size:
        raise ConformityError("interface trace spaces differ in size")
    order_b = dofs_b[::-1] if iface.reversed else dofs_b
    return [(iface.patch_a, int(i), iface.patch_b, int(j), sign) for i, j in zip(dofs_a, order_b)]
