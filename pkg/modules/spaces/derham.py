"""
Planar de Rham pullbacks and the compatible spline spaces built on them.
=======================================================================

Pullbacks (J = DF, adjJ = det(J) J^-1):

    Y1 q = q o F              Y2 v = J^T (v o F)
    Y3 v = adjJ (v o F)       Y4 q = det(J) (q o F)

Discrete spaces for degree p and regularity r on an n x n parametric mesh:

    V1 = S^{r,r}_{p,p}                       (Y1)
    V2 = S^{r,r-1}_{p,p-1} x S^{r-1,r}_{p-1,p} (Y3, components stored one after the other)
    V3 = S^{r-1,r-1}_{p-1,p-1}               (Y4)
    TH = (S^{r,r}_{p,p})^2 / S^{r,r}_{p-1,p-1} (Taylor-Hood pair, Y1 for both)

Physical divergences always go through the parametric side: div v = det(J)^-1 div^(Y3 v).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from modules.core.exceptions import GeometryDegeneracyError, SpaceParameterError
from modules.geometry.maps import GeometryBundle, GeometryMap, adjugate, eval_geometry
from modules.splines.bspline import Edge, TensorSplineSpace, basis_matrix, derived_space
from modules.splines.quadrature import TensorRule

logger = logging.getLogger(__name__)


# ==========================================
# PULLBACKS
# ==========================================

class PullbackKind(Enum):
    Y1 = "scalar"
    Y2 = "covariant"
    Y3 = "piola-div"
    Y4 = "integral-scalar"


def pullback_apply(kind: PullbackKind, bundle: GeometryBundle, values, inverse: bool = False) -> np.ndarray:
    """
    Apply a pullback (or its inverse) pointwise.

    ``values`` has the points on the first axis; vector kinds act on the last axis,
    so stacks of row vectors (N, k, 2) are transformed row by row.
    """
    v = np.asarray(values, dtype=float)
    if np.any(bundle.detJ <= 0.0):
        raise GeometryDegeneracyError("pullback on a degenerate Jacobian")
    det = bundle.detJ.reshape((-1,) + (1,) * (v.ndim - 1))
    if kind is PullbackKind.Y1:
        return v.copy()
    if kind is PullbackKind.Y4:
        return v / det if inverse else v * det
    if kind is PullbackKind.Y2:
        # Y2 v = J^T v ; inverse J^-T v
        mat = np.swapaxes(bundle.invJ, -1, -2) if inverse else np.swapaxes(bundle.J, -1, -2)
    else:
        # Y3 v = adjJ v ; inverse J v / detJ
        mat = bundle.J / bundle.detJ[:, None, None] if inverse else bundle.adjJ
    if v.ndim == 2:
        return np.einsum("qij,qj->qi", mat, v)
    return np.einsum("qij,qkj->qki", mat, v)


# ==========================================
# SPACES
# ==========================================

@dataclass(frozen=True)
class DiscreteDeRhamSpaces:
    """Parametric spline spaces of the discrete planar de Rham sequence."""

    p: int
    r: int
    v1: TensorSplineSpace
    v2: Tuple[TensorSplineSpace, TensorSplineSpace]
    v3: TensorSplineSpace
    th_pressure: Optional[TensorSplineSpace]

    @classmethod
    def build(cls, p: int, r: int, n_elements) -> "DiscreteDeRhamSpaces":
        if not (p > r >= 0):
            raise SpaceParameterError(f"de Rham spaces need p > r >= 0 (got p={p}, r={r})")
        v1 = TensorSplineSpace.uniform((p, p), (r, r), n_elements)
        v2 = (
            derived_space(v1, (0, -1), (0, -1)),
            derived_space(v1, (-1, 0), (-1, 0)),
        )
        v3 = derived_space(v1, (-1, -1), (-1, -1))
        pressure = derived_space(v1, (-1, -1), (0, 0)) if r <= p - 2 else None
        return cls(p=p, r=r, v1=v1, v2=v2, v3=v3, th_pressure=pressure)

    @property
    def n_elements(self) -> Tuple[int, int]:
        return tuple(kv.nspans for kv in self.v1.kvs)

    @property
    def v2_dim(self) -> int:
        return self.v2[0].dim + self.v2[1].dim

    def v2_offset(self, comp: int) -> int:
        return 0 if comp == 0 else self.v2[0].dim

    def v2_normal_dofs(self, edge: Edge) -> np.ndarray:
        """V2 functions with nonzero normal trace on the edge, in edge order."""
        edge = Edge.parse(edge)
        comp = edge.axis
        return self.v2_offset(comp) + self.v2[comp].boundary_dofs(edge)

    def pressure_space(self) -> TensorSplineSpace:
        if self.th_pressure is None:
            raise SpaceParameterError(
                f"Taylor-Hood pressure space S^(r,r)_(p-1,p-1) needs r <= p-2 (p={self.p}, r={self.r})"
            )
        return self.th_pressure


@dataclass(frozen=True)
class WeakSymSpaces:
    """
    Stress rows in V2 x V2, displacement in V3 x V3, multiplier Skew(q) with
    q in S^{r,r}_{p-1,p-1}. Stress DOFs: row 0 block then row 1 block.
    """

    derham: DiscreteDeRhamSpaces

    @classmethod
    def build(cls, p: int, r: int, n_elements) -> "WeakSymSpaces":
        if p < 2:
            raise SpaceParameterError(f"weak-symmetry spaces need p >= 2 (got {p})")
        derham = DiscreteDeRhamSpaces.build(p, r, n_elements)
        derham.pressure_space()
        if r not in (0, p - 2):
            logger.warning(f"regularity r={r} outside the tested regimes r=0 and r=p-2 (p={p})")
        return cls(derham)

    @property
    def stress_dim(self) -> int:
        return 2 * self.derham.v2_dim

    @property
    def displacement_dim(self) -> int:
        return 2 * self.derham.v3.dim

    @property
    def multiplier_dim(self) -> int:
        return self.derham.th_pressure.dim

    @property
    def field_sizes(self) -> Tuple[int, int, int]:
        return self.stress_dim, self.displacement_dim, self.multiplier_dim

    def stress_normal_dofs(self, edge: Edge) -> np.ndarray:
        """Normal-trace stress DOFs of both rows on the edge (row 0 first)."""
        base = self.derham.v2_normal_dofs(edge)
        return np.concatenate((base, base + self.derham.v2_dim))

    def multiplier_edge_dofs(self, edge: Edge) -> np.ndarray:
        return self.derham.th_pressure.boundary_dofs(edge)


# ==========================================
# COLLOCATION ON QUADRATURE GRIDS
# ==========================================

def _diag(values: np.ndarray) -> sp.dia_matrix:
    return sp.diags(np.asarray(values, dtype=float))


class GridCollocation:
    """
    Physical basis values of the de Rham spaces on a tensor grid z1 x z2.

    Every matrix is (npoints, ndofs) CSR with point order q1 + len(z1) * q2.
    """

    def __init__(self, spaces: DiscreteDeRhamSpaces, gmap: GeometryMap, z1, z2):
        self.spaces = spaces
        self.gmap = gmap
        self.z1 = np.asarray(z1, dtype=float)
        self.z2 = np.asarray(z2, dtype=float)
        pts1, pts2 = np.tile(self.z1, self.z2.size), np.repeat(self.z2, self.z1.size)
        self.bundle = eval_geometry(gmap, pts1, pts2)

    @classmethod
    def on_rule(cls, spaces: DiscreteDeRhamSpaces, gmap: GeometryMap, rule: TensorRule) -> "GridCollocation":
        return cls(spaces, gmap, rule.z1, rule.z2)

    @property
    def npoints(self) -> int:
        return self.z1.size * self.z2.size

    @cached_property
    def v2(self):
        """([v_x, v_y], div) for V2: v = J e_c B / detJ, div = d^_c B / detJ."""
        J, inv_det = self.bundle.J, 1.0 / self.bundle.detJ
        comps, divs = [], []
        for c, space in enumerate(self.spaces.v2):
            base = space.grid_matrix(self.z1, self.z2)
            dbase = space.grid_matrix(self.z1, self.z2, d1=int(c == 0), d2=int(c == 1))
            comps.append([_diag(J[:, j, c] * inv_det) @ base for j in range(2)])
            divs.append(_diag(inv_det) @ dbase)
        values = [sp.hstack([comps[0][j], comps[1][j]], format="csr") for j in range(2)]
        return values, sp.hstack(divs, format="csr")

    @cached_property
    def v3(self) -> sp.csr_matrix:
        base = self.spaces.v3.grid_matrix(self.z1, self.z2)
        return (_diag(1.0 / self.bundle.detJ) @ base).tocsr()

    def _scalar_h1(self, space: TensorSplineSpace):
        value = space.grid_matrix(self.z1, self.z2)
        d1 = space.grid_matrix(self.z1, self.z2, d1=1)
        d2 = space.grid_matrix(self.z1, self.z2, d2=1)
        invJ = self.bundle.invJ
        # grad = J^-T grad^
        grad = [
            (_diag(invJ[:, 0, j]) @ d1 + _diag(invJ[:, 1, j]) @ d2).tocsr()
            for j in range(2)
        ]
        return value, grad

    @cached_property
    def v1(self):
        return self._scalar_h1(self.spaces.v1)

    @cached_property
    def pressure(self):
        return self._scalar_h1(self.spaces.pressure_space())

    def physical_weights(self, weights: np.ndarray) -> np.ndarray:
        return np.asarray(weights) * self.bundle.detJ


def _matrix_column(M: sp.spmatrix, index: int) -> np.ndarray:
    return np.asarray(M[:, index].todense()).ravel()


# ==========================================
# SINGLE BASIS FUNCTIONS
# ==========================================

@dataclass
class BasisValue:
    value: np.ndarray          # (N,) scalar or (N, 2) vector
    derivative: np.ndarray     # gradient (N, 2) or divergence (N,)


def _tensor_basis(space: TensorSplineSpace, index: int, z1, z2, d1: int = 0, d2: int = 0) -> np.ndarray:
    i1, i2 = space.multi_index(index)
    b1 = basis_matrix(space.kvs[0], z1, d1)[:, int(i1)]
    b2 = basis_matrix(space.kvs[1], z2, d2)[:, int(i2)]
    return b1 * b2


def physical_basis_eval(spaces: DiscreteDeRhamSpaces, kind: str, index: int,
                        gmap: GeometryMap, z1, z2) -> BasisValue:
    """
    Physical value of one basis function at scattered parametric points.

    kind: "V1" / "TH" (velocity component) and "P" (pressure) return gradients,
    "V2" the divergence, "V3" the value only (derivative left empty).
    """
    z1 = np.atleast_1d(np.asarray(z1, dtype=float))
    z2 = np.atleast_1d(np.asarray(z2, dtype=float))
    bundle = eval_geometry(gmap, z1, z2)
    if kind in ("V1", "TH", "P"):
        space = spaces.v1 if kind != "P" else spaces.pressure_space()
        val = _tensor_basis(space, index, z1, z2)
        ghat = np.stack((_tensor_basis(space, index, z1, z2, 1, 0),
                         _tensor_basis(space, index, z1, z2, 0, 1)), axis=-1)
        return BasisValue(val, pullback_apply(PullbackKind.Y2, bundle, ghat, inverse=True))
    if kind == "V2":
        comp = 0 if index < spaces.v2[0].dim else 1
        local = index - spaces.v2_offset(comp)
        space = spaces.v2[comp]
        vhat = np.zeros((z1.size, 2))
        vhat[:, comp] = _tensor_basis(space, local, z1, z2)
        dhat = _tensor_basis(space, local, z1, z2, int(comp == 0), int(comp == 1))
        return BasisValue(
            pullback_apply(PullbackKind.Y3, bundle, vhat, inverse=True),
            pullback_apply(PullbackKind.Y4, bundle, dhat, inverse=True),
        )
    if kind == "V3":
        val = _tensor_basis(spaces.v3, index, z1, z2)
        return BasisValue(pullback_apply(PullbackKind.Y4, bundle, val, inverse=True), np.zeros(0))
    raise ValueError(f"unknown space kind {kind!r}")


# ==========================================
# STRUCTURE CHECKS
# ==========================================

def commuting_diagram_residual(gmap: GeometryMap, vector_field: Callable, scalar_field: Callable,
                               z1, z2) -> Tuple[float, float]:
    """
    Max-norm residuals of div^(Y3 v) - Y4(div v) and curl^(Y1 phi) - Y3(curl phi).

    ``vector_field(x) -> (v (N,2), grad v (N,2,2) with [i, j] = d_j v_i)``;
    ``scalar_field(x) -> (phi (N,), grad phi (N,2))``.
    """
    z1 = np.atleast_1d(np.asarray(z1, dtype=float))
    z2 = np.atleast_1d(np.asarray(z2, dtype=float))
    bundle = eval_geometry(gmap, z1, z2)
    H = gmap.hessian(z1, z2)
    J, det = bundle.J, bundle.detJ

    v, gv = vector_field(bundle.x)
    # d^_a adjJ = adj(d^_a J), d^_a J[m, j] = H[m, j, a]
    dadj = [adjugate(H[:, :, :, a]) for a in range(2)]
    div_hat = sum(np.einsum("qk,qk->q", dadj[i][:, i, :], v) for i in range(2))
    # adjJ[i, k] d_m v_k J[m, i]
    div_hat = div_hat + np.einsum("qik,qkm,qmi->q", bundle.adjJ, gv, J)
    div_phys = np.trace(gv, axis1=1, axis2=2)
    res_div = np.abs(div_hat - det * div_phys).max()

    _, gphi = scalar_field(bundle.x)
    ghat = np.einsum("qm,qmj->qj", gphi, J)
    curl_hat = np.stack((ghat[:, 1], -ghat[:, 0]), axis=-1)
    curl_phys = np.stack((gphi[:, 1], -gphi[:, 0]), axis=-1)
    res_curl = np.abs(curl_hat - pullback_apply(PullbackKind.Y3, bundle, curl_phys)).max()
    return float(res_div), float(res_curl)


def mass_matrix(values: sp.spmatrix, weights: np.ndarray) -> sp.csr_matrix:
    return (values.T @ _diag(weights) @ values).tocsr()


def l2_projection(values: sp.spmatrix, weights: np.ndarray, target: np.ndarray):
    """
    Coefficients c minimising sum_q w_q (values c - target)_q^2 and the weighted
    L2 norm of the remainder.
    """
    M = mass_matrix(values, weights).tocsc()
    rhs = values.T @ (weights * target)
    coef = spla.spsolve(M, rhs)
    remainder = values @ coef - target
    return coef, float(np.sqrt(np.sum(weights * remainder ** 2)))


def divergence_inclusion_residual(spaces: DiscreteDeRhamSpaces, npts: int = None) -> float:
    """
    Largest L2 distance between the parametric divergence of a V2 basis function
    and its projection onto V3.
    """
    npts = npts or spaces.p + 2
    bp = spaces.v1.kvs[0].breakpoints, spaces.v1.kvs[1].breakpoints
    rule = TensorRule(bp[0], bp[1], npts)
    w = rule.weights
    target_space = spaces.v3.grid_matrix(rule.z1, rule.z2)
    M = mass_matrix(target_space, w).tocsc()
    solve = spla.factorized(M)
    worst = 0.0
    for comp, space in enumerate(spaces.v2):
        D = space.grid_matrix(rule.z1, rule.z2, d1=int(comp == 0), d2=int(comp == 1)).toarray()
        rhs = target_space.T @ (w[:, None] * D)
        coef = np.column_stack([solve(rhs[:, k]) for k in range(rhs.shape[1])])
        remainder = target_space @ coef - D
        worst = max(worst, float(np.sqrt((w[:, None] * remainder ** 2).sum(axis=0)).max()))
    return worst


def identity_stress_residual(spaces: DiscreteDeRhamSpaces, gmap: GeometryMap, npts: int = None) -> float:
    """L2 residual of projecting the identity matrix field onto the stress space V2 x V2."""
    npts = npts or spaces.p + 2
    rule = TensorRule(spaces.v1.kvs[0].breakpoints, spaces.v1.kvs[1].breakpoints, npts)
    coll = GridCollocation.on_rule(spaces, gmap, rule)
    w = coll.physical_weights(rule.weights)
    (vx, vy), _ = coll.v2
    stacked = sp.vstack([vx, vy], format="csr")
    ww = np.concatenate((w, w))
    total = 0.0
    for row in range(2):
        target = np.concatenate((np.full(coll.npoints, float(row == 0)), np.full(coll.npoints, float(row == 1))))
        _, res = l2_projection(stacked, ww, target)
        total += res ** 2
    return float(np.sqrt(total))
