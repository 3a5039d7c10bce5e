"""
Boundary data per patch edge: prescribed displacement on Gamma_D, traction on Gamma_t.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from modules.core.exceptions import BoundaryLayoutError
from modules.geometry.multipatch import DIRICHLET, TRACTION, MultiPatchTopology
from modules.splines.bspline import Edge

logger = logging.getLogger(__name__)

EdgeKey = Tuple[int, Edge]


def zero_field(x) -> np.ndarray:
    return np.zeros((np.asarray(x).shape[0], 2))


@dataclass
class BoundarySpec:
    """
    ``displacement`` and ``traction`` map physical points (N, 2) to (N, 2) vectors;
    None stands for homogeneous data. ``tags`` assigns every outer edge.
    """

    tags: Dict[EdgeKey, str]
    displacement: Optional[Callable] = None
    traction: Optional[Callable] = None

    @classmethod
    def from_topology(cls, topo: MultiPatchTopology, displacement=None, traction=None) -> "BoundarySpec":
        spec = cls(dict(topo.boundary), displacement, traction)
        spec.validate(topo)
        return spec

    def validate(self, topo: MultiPatchTopology) -> None:
        outer = set(topo.boundary)
        if set(self.tags) != outer:
            missing = sorted(outer - set(self.tags))
            extra = sorted(set(self.tags) - outer)
            raise BoundaryLayoutError(f"boundary tags must cover the outer edges exactly (missing {missing}, extra {extra})")
        if not self.dirichlet_edges():
            raise BoundaryLayoutError("at least one edge must carry a displacement condition")

    def dirichlet_edges(self) -> List[EdgeKey]:
        return sorted(k for k, t in self.tags.items() if t == DIRICHLET)

    def traction_edges(self) -> List[EdgeKey]:
        return sorted(k for k, t in self.tags.items() if t == TRACTION)

    @property
    def homogeneous_traction(self) -> bool:
        return self.traction is None

    def displacement_at(self, x) -> np.ndarray:
        return zero_field(x) if self.displacement is None else np.asarray(self.displacement(x), dtype=float)

    def traction_at(self, x) -> np.ndarray:
        return zero_field(x) if self.traction is None else np.asarray(self.traction(x), dtype=float)
