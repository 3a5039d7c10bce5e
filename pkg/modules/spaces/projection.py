"""
Spline quasi-interpolants and their commuting variants.

Each coefficient functional realizes lambda_i(B_j) = delta_ij by a local L2 fit on
one knot span inside the support of B_i: on that span the p+1 active splines span
the polynomials, so the fit reproduces every spline exactly.

Levels on a base space S^r_p:
    0  Pi v          = sum_i lambda_i(v) B_i                   -> S^r_p
    1  Pi^{c,1} v    = d/dz Pi( int_0^z v )                    -> S^{r-1}_{p-1}
    2  Pi^{c,2} v    = d^2/dz^2 Pi( int_0^z int_0^t v )        -> S^{r-2}_{p-2}

Every projector is stored as a node set plus a matrix, so tensor products are
two matrix products on a grid of samples.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Tuple, Union

import numpy as np

from modules.core.exceptions import BoundaryLayoutError, SpaceParameterError
from modules.geometry.maps import GeometryMap
from modules.splines.bspline import (
    Edge, KnotVector, basis_matrix, derivative, evaluate_spline, make_open_knots,
    uniform_breakpoints,
)
from modules.splines.quadrature import element_rule, gauss_legendre, segment_rule

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplineFunction:
    """A univariate spline given by knot vector and coefficients."""
    kv: KnotVector
    coefficients: np.ndarray

    def __call__(self, x) -> np.ndarray:
        return evaluate_spline(self.kv, self.coefficients, x)


Univariate = Union[Callable, SplineFunction]


# ==========================================
# DUAL FUNCTIONALS
# ==========================================

def _support_span(kv: KnotVector, i: int) -> int:
    """Index mu of a nondegenerate span [knots[mu], knots[mu+1]] inside supp B_i, near its middle."""
    spans = [mu for mu in range(i, i + kv.p + 1) if kv.knots[mu + 1] > kv.knots[mu]]
    return spans[len(spans) // 2]


@dataclass(frozen=True)
class DualFunctionalSet:
    """lambda_i(v) = matrix[i] @ v(nodes)."""
    kv: KnotVector
    nodes: np.ndarray
    matrix: np.ndarray

    def apply(self, values: np.ndarray) -> np.ndarray:
        return self.matrix @ values


@lru_cache(maxsize=128)
def dual_functionals(kv: KnotVector, extra_points: int = 3) -> DualFunctionalSet:
    p, n = kv.p, kv.n
    gx, gw = gauss_legendre(p + 1 + extra_points)
    mus = sorted({_support_span(kv, i) for i in range(n)})
    local = {}
    nodes = []
    for mu in mus:
        a, b = kv.knots[mu], kv.knots[mu + 1]
        x = a + (b - a) * gx
        w = (b - a) * gw
        B = basis_matrix(kv, x)[:, mu - p:mu + 1]                 # (nq, p+1)
        gram = B.T @ (w[:, None] * B)
        # row k: coefficient of the k-th active spline in the local L2 fit
        local[mu] = (len(nodes) * gx.size, np.linalg.solve(gram, (B * w[:, None]).T))
        nodes.append(x)
    nodes = np.concatenate(nodes)
    matrix = np.zeros((n, nodes.size))
    for i in range(n):
        mu = _support_span(kv, i)
        start, fit = local[mu]
        matrix[i, start:start + gx.size] = fit[i - (mu - p)]
    return DualFunctionalSet(kv, nodes, matrix)


# ==========================================
# UNIVARIATE PROJECTORS
# ==========================================

@dataclass(frozen=True)
class UnivariateProjector:
    """coefficients = matrix @ v(nodes), in the knot vector ``target``."""
    level: int
    base: KnotVector
    target: KnotVector
    nodes: np.ndarray
    matrix: np.ndarray

    def __call__(self, v: Univariate) -> np.ndarray:
        return self.matrix @ np.asarray(v(self.nodes), dtype=float)


def _check_level(level: int, kv: KnotVector) -> None:
    if level == 0:
        return
    if level == 1 and (kv.r < 0 or kv.p < 1):
        raise SpaceParameterError(f"level-1 projector needs r >= 0, p >= 1 (got p={kv.p}, r={kv.r})")
    if level == 2 and (kv.r < 1 or kv.p < 2):
        raise SpaceParameterError(f"level-2 projector needs r >= 1, p >= 2 (got p={kv.p}, r={kv.r})")
    if level not in (0, 1, 2):
        raise SpaceParameterError(f"projector level must be 0, 1 or 2 (got {level})")


def _derivative_matrix(kv: KnotVector) -> Tuple[KnotVector, np.ndarray]:
    return derivative(kv, np.eye(kv.n))


@lru_cache(maxsize=128)
def univariate_projector(level: int, kv: KnotVector, extra_points: int = 3) -> UnivariateProjector:
    _check_level(level, kv)
    duals = dual_functionals(kv, extra_points)
    if level == 0:
        return UnivariateProjector(0, kv, kv, duals.nodes, duals.matrix)

    # samples of the (iterated) integral at the dual nodes, as a map from v(segment nodes)
    seg_nodes, W = segment_rule(kv.breakpoints, duals.nodes, kv.p + 1 + extra_points)
    W = W.toarray()
    if level == 1:
        sampler = W
    else:
        # int_0^z int_0^t v = int_0^z (z - t) v(t) dt
        sampler = duals.nodes[:, None] * W - W * seg_nodes[None, :]
    matrix = duals.matrix @ sampler
    target = kv
    for _ in range(level):
        target, D = _derivative_matrix(target)
        matrix = D @ matrix
    return UnivariateProjector(level, kv, target, seg_nodes, matrix)


def project_univariate(level: int, kv: KnotVector, v: Univariate) -> np.ndarray:
    """Coefficients of the level-0/1/2 projection of v; ``kv`` is the base space S^r_p."""
    return univariate_projector(level, kv)(v)


def commutation_residual(kv: KnotVector, v: Univariate, dv: Univariate, samples: int = 401):
    """
    Max residuals of Pi^{c,1} v' - (Pi v)' and Pi^{c,2} v' - (Pi^{c,1} v)' on a grid.
    The second entry is None when the base space has r < 1.
    """
    x = np.linspace(0.0, 1.0, samples)
    lowered = kv.lowered()
    c0 = project_univariate(0, kv, v)
    lhs1 = evaluate_spline(lowered, project_univariate(1, kv, dv), x)
    rhs1 = evaluate_spline(kv, c0, x, order=1)
    res1 = float(np.abs(lhs1 - rhs1).max())
    if kv.r < 1 or kv.p < 2:
        return res1, None
    c1 = project_univariate(1, kv, v)
    lhs2 = evaluate_spline(lowered.lowered(), project_univariate(2, kv, dv), x)
    rhs2 = evaluate_spline(lowered, c1, x, order=1)
    return res1, float(np.abs(lhs2 - rhs2).max())


# ==========================================
# TENSOR PROJECTORS FOR THE SYMMETRIC SPACES
# ==========================================

def strong_base_knots(p: int, r: int, n_elements: int) -> KnotVector:
    """Base space S^{r+1}_{p+1} whose level 0/1/2 projectors build the symmetric spaces."""
    if not (p > r >= 1):
        raise SpaceParameterError(f"symmetric spline spaces need p > r >= 1 (got p={p}, r={r})")
    return make_open_knots(p + 1, uniform_breakpoints(n_elements), r + 1)


def _tensor_apply(P1: UnivariateProjector, P2: UnivariateProjector, fn: Callable) -> np.ndarray:
    """Coefficients flattened as i1 + n1 * i2 of (P1 x P2) fn, fn(z1, z2) on scattered points."""
    z1 = np.tile(P1.nodes, P2.nodes.size)
    z2 = np.repeat(P2.nodes, P1.nodes.size)
    values = np.asarray(fn(z1, z2), dtype=float).reshape(P2.nodes.size, P1.nodes.size)
    coef = P1.matrix @ values.T @ P2.matrix.T        # (n1, n2)
    return coef.T.ravel()


# (ζ1 level, ζ2 level) per component
SYM_LEVELS = {"s11": (0, 2), "s12": (1, 1), "s22": (2, 0)}
DIV_LEVELS = {"v1": (1, 2), "v2": (2, 1)}


def project_tensor_strong(kind: int, p: int, r: int, n_elements: int, fields) -> dict:
    """
    kind 2: ``fields(z1, z2) -> (S11, S12, S22)`` projected with
            (Pi_{p+1} x Pi^{c,2}, Pi^{c,1} x Pi^{c,1}, Pi^{c,2} x Pi_{p+1});
    kind 3: ``fields(z1, z2) -> (v1, v2)`` projected with
            (Pi^{c,1} x Pi^{c,2}, Pi^{c,2} x Pi^{c,1}).
    Returns a dict of coefficient vectors keyed by component name.
    """
    base = strong_base_knots(p, r, n_elements)
    if kind == 2:
        levels, names = SYM_LEVELS, ("s11", "s12", "s22")
    elif kind == 3:
        levels, names = DIV_LEVELS, ("v1", "v2")
    else:
        raise SpaceParameterError(f"projector kind must be 2 or 3 (got {kind})")
    out = {}
    for k, name in enumerate(names):
        l1, l2 = levels[name]
        P1, P2 = univariate_projector(l1, base), univariate_projector(l2, base)
        out[name] = _tensor_apply(P1, P2, lambda a, b, k=k: fields(a, b)[k])
    return out


# ==========================================
# TRACTION DATA ON BOUNDARY EDGES
# ==========================================

def project_boundary_traction(gmap: GeometryMap, edge: Edge, trace_kv: KnotVector,
                              traction: Callable, npts: Optional[int] = None) -> np.ndarray:
    """
    L2 projection onto the normal-trace space of the stress rows on one edge.

    For row k the normal trace of a stress field with edge coefficients c is
    eps * sum_i c_i B_i(s) per unit parameter length (eps the outward sign), so
    matching t_k |dF/ds| gives c = eps * M^-1 int B_j t_k(F(s)) |dF/ds| ds.
    Returns an array (2, n_edge): row k holds the coefficients for stress row k.
    """
    edge = Edge.parse(edge)
    npts = npts or trace_kv.p + 3
    s, w = element_rule(trace_kv.breakpoints, npts)
    z1, z2 = edge.point(s)
    x = gmap(z1, z2)
    jac = gmap.jacobian(z1, z2)
    tangent = jac[:, :, 1 - edge.axis]
    speed = np.linalg.norm(tangent, axis=-1)
    t = np.asarray(traction(x), dtype=float)
    if t.shape != (s.size, 2):
        raise BoundaryLayoutError(f"traction callback returned shape {t.shape}, expected ({s.size}, 2)")
    B = basis_matrix(trace_kv, s)
    mass = B.T @ (w[:, None] * B)
    rhs = B.T @ (w[:, None] * speed[:, None] * t)
    return edge.outward_sign * np.linalg.solve(mass, rhs).T


def check_traction_edges(edges, boundary_tags) -> None:
    """Every traction region key must be an outer (patch, edge) of the topology."""
    for key in edges:
        if key not in boundary_tags:
            raise BoundaryLayoutError(f"traction region {key} is not a boundary edge of the topology")
