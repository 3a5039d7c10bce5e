"""
Saddle-point systems and the direct solver.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import structural_rank

from modules.core import config
from modules.core.exceptions import RankDeficiencyError
from modules.solve.sparse import block_offsets

logger = logging.getLogger(__name__)


@dataclass
class BlockSaddleSystem:
    """
    Global matrix K and right-hand side split into named fields.

    ``prolongations[p]`` maps global unknowns to the local unknowns of patch p
    (all fields stacked) and ``lifts[p]`` holds the local values of eliminated
    DOFs, so patch solutions are P_p z + lift_p.
    """

    field_names: Sequence[str]
    field_sizes: Sequence[int]
    matrix: sp.csr_matrix
    rhs: np.ndarray
    prolongations: List[sp.csr_matrix] = field(default_factory=list)
    lifts: List[np.ndarray] = field(default_factory=list)
    meta: Dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return int(sum(self.field_sizes))

    @property
    def slices(self) -> Dict[str, slice]:
        offs = block_offsets(self.field_sizes)
        return {name: offs[k] for k, name in enumerate(self.field_names)}

    def block(self, row: str, col: str) -> sp.csr_matrix:
        s = self.slices
        return self.matrix[s[row], :][:, s[col]].tocsr()

    def split(self, z: np.ndarray) -> Dict[str, np.ndarray]:
        return {name: z[sl] for name, sl in self.slices.items()}

    def asymmetry(self) -> float:
        """max |K - K^T| relative to max |K|."""
        if self.matrix.nnz == 0:
            return 0.0
        return float(abs(self.matrix - self.matrix.T).max() / abs(self.matrix).max())

    def local_solution(self, z: np.ndarray, patch: int) -> np.ndarray:
        if not self.prolongations:
            return z.copy()
        return self.prolongations[patch] @ z + self.lifts[patch]


@dataclass
class SolveReport:
    solution: np.ndarray
    fields: Dict[str, np.ndarray]
    residual: float
    seconds: float
    factor_nnz: int
    infsup: Optional[float] = None


def _offending_block(system: BlockSaddleSystem) -> str:
    """First field whose column block is structurally rank deficient."""
    K = system.matrix.tocsc()
    for name, sl in system.slices.items():
        cols = K[:, sl]
        if cols.shape[1] and structural_rank(cols.tocsr()) < cols.shape[1]:
            return name
    return "global"


def solve_direct(system: BlockSaddleSystem) -> SolveReport:
    K = system.matrix
    if K.shape[0] != K.shape[1] or K.shape[0] != system.rhs.size:
        raise ValueError(f"system is not square/consistent: K {K.shape}, rhs {system.rhs.size}")
    if K.shape[0] == 0:
        return SolveReport(np.zeros(0), system.split(np.zeros(0)), 0.0, 0.0, 0)

    t0 = time.perf_counter()
    try:
        lu = spla.splu(K.tocsc(), permc_spec="COLAMD")
    except RuntimeError as e:
        block = _offending_block(system)
        raise RankDeficiencyError(f"factorization failed ({e}); rank deficiency in block '{block}'", block=block) from e
    z = lu.solve(system.rhs)
    seconds = time.perf_counter() - t0

    r = K @ z - system.rhs
    scale = np.linalg.norm(system.rhs)
    residual = float(np.linalg.norm(r) / scale) if scale > 0 else float(np.linalg.norm(r))
    if not np.isfinite(residual) or residual > config.SOLVER_RESIDUAL_TOL:
        logger.warning(f"⚠️ relative residual {residual:.2e} exceeds {config.SOLVER_RESIDUAL_TOL:.0e}")
    logger.debug(f"solved {K.shape[0]} unknowns in {seconds:.2f}s (residual {residual:.2e})")
    return SolveReport(
        solution=z,
        fields=system.split(z),
        residual=residual,
        seconds=seconds,
        factor_nnz=int(lu.L.nnz + lu.U.nnz),
    )
