"""
Discrete inf-sup constants by dense generalized eigenvalue problems.

    beta^2 = min nonzero lambda  with  B G^-1 B^T q = lambda M q

G is the Gram matrix of the norm on the "velocity" side, M the one on the
multiplier side.
"""
from __future__ import annotations

import logging
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from modules.core import config
from modules.core.exceptions import DofBudgetError
from modules.geometry.maps import GeometryMap, identity_map
from modules.spaces.derham import DiscreteDeRhamSpaces, GridCollocation, mass_matrix
from modules.splines.bspline import Edge
from modules.splines.quadrature import TensorRule

logger = logging.getLogger(__name__)


def _dense(m) -> np.ndarray:
    return m.toarray() if sp.issparse(m) else np.asarray(m, dtype=float)


def estimate_infsup(B, G=None, M=None, null_tol: float = 1e-10) -> float:
    """
    Square root of the smallest nonzero generalized eigenvalue. Eigenvalues below
    ``null_tol`` times the largest are treated as the kernel (e.g. constant
    pressures) and skipped.
    """
    B = _dense(B)
    m, n = B.shape
    if m + n > config.INFSUP_MAX_DOFS:
        raise DofBudgetError(f"inf-sup probe with {m + n} DOFs exceeds the budget of {config.INFSUP_MAX_DOFS}")
    G = np.eye(n) if G is None else _dense(G)
    M = np.eye(m) if M is None else _dense(M)
    S = B @ sla.solve(G, B.T, assume_a="pos")
    S = 0.5 * (S + S.T)
    eig = sla.eigh(S, M, eigvals_only=True)
    top = eig.max()
    if top <= 0.0:
        return 0.0
    nonzero = eig[eig > null_tol * top]
    return float(np.sqrt(nonzero.min()))


def _probe_setup(p: int, r: int, n: int, gmap: Optional[GeometryMap]):
    spaces = DiscreteDeRhamSpaces.build(p, r, n)
    gmap = gmap or identity_map()
    rule = TensorRule(spaces.v1.kvs[0].breakpoints, spaces.v1.kvs[1].breakpoints, p + 2)
    coll = GridCollocation.on_rule(spaces, gmap, rule)
    return spaces, coll, coll.physical_weights(rule.weights)


def taylor_hood_infsup(p: int, r: int, n: int, gmap: GeometryMap = None) -> float:
    """Velocity (S^{r,r}_{p,p})^2 with zero boundary values in the H1 seminorm, pressure in L2."""
    spaces, coll, w = _probe_setup(p, r, n, gmap)
    boundary = np.unique(np.concatenate([spaces.v1.boundary_dofs(e) for e in Edge]))
    interior = np.setdiff1d(np.arange(spaces.v1.dim), boundary)
    _, (gx, gy) = coll.v1
    gx, gy = gx[:, interior], gy[:, interior]
    stiff = mass_matrix(gx, w) + mass_matrix(gy, w)
    G = sp.block_diag([stiff, stiff])
    q, _ = coll.pressure
    W = sp.diags(w)
    B = sp.hstack([q.T @ W @ gx, q.T @ W @ gy])
    M = mass_matrix(q, w)
    beta = estimate_infsup(B, G, M)
    logger.debug(f"Taylor-Hood inf-sup p={p} r={r} n={n}: {beta:.4f}")
    return beta


def divergence_infsup(p: int, r: int, n: int, gmap: GeometryMap = None) -> float:
    """V2 in the H(div) norm against V3 in L2."""
    spaces, coll, w = _probe_setup(p, r, n, gmap)
    (vx, vy), div = coll.v2
    G = mass_matrix(vx, w) + mass_matrix(vy, w) + mass_matrix(div, w)
    B = coll.v3.T @ sp.diags(w) @ div
    M = mass_matrix(coll.v3, w)
    beta = estimate_infsup(B, G, M)
    logger.debug(f"V2/V3 inf-sup p={p} r={r} n={n}: {beta:.4f}")
    return beta
