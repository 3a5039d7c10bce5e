"""
Integral-corrected transformations for symmetric stress fields.
================================================================

Notation on the parametric square (0-based indices, summation over repeated ones):

    J = DF, Jt = adj(J), G = Jt^-1 = J / det J, d1 X = d/dzeta1 X
    Airy^(F_n)  rotated Hessian of F_n in zeta,  Airy(Finv_k) the same for F^-1 in x

    Y2G1(S)  = Jt S Jt^T + Airy^(F_0) int_0^z1 Jt_1l S_1l  -  Airy^(F_1) int_0^z1 Jt_1l S_0l
    Y2G1^-1  = G S~ G^T  + Airy(Finv_0) int_0^z1 S~_11    -  Airy(Finv_1) int_0^z1 S~_10
    Y3(v)    = det J Jt v + d1 Jt int_0^z1 det J v
    Y3^-1    = (G v~ + d1 G int_0^z1 v~) / det J
    Y2       = Y2G1 - diag(Y2A_00, Y2A_11), with w(z2) = S(0, z2) Jt(0, z2)^T e_0:
               Y2A_00 = [(Jt(z) - Jt(0, z2)) w]_0,  Y2A_11 = int_0^z2 [d1 Jt(z1, t) w(t)]_1 dt

The inverse of Y2 subtracts a diagonal field D built from the trace s = S~(0, z2) e_0:
with E(z1, t) = Jt(z1, t) G(0, t) - I,

    D_00 = -[E s]_0,  D_11 = -int_0^z2 [d1 E s]_1 dt,  c = -int_0^z2 [E s]_1 dt
    Y2^-1(S~) = G (S~ - D) G^T + Airy(Finv_0) (int_0^z1 S~_11 - c) - Airy(Finv_1) int_0^z1 S~_10

Physical callables take points x (N, 2); parametric callables take (z1, z2). All
transforms are evaluated at parametric points; line integrals use composite
Gauss rules on the knot spans intersected with the integration segment.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from modules.geometry.maps import GeometryMap, adjugate, eval_geometry, second_derivatives
from modules.splines.bspline import uniform_breakpoints
from modules.splines.quadrature import segment_rule

logger = logging.getLogger(__name__)

_EYE = np.eye(2)


@dataclass
class LocalGeometry:
    """Geometry factors at a set of parametric points."""
    x: np.ndarray
    J: np.ndarray
    detJ: np.ndarray
    Jt: np.ndarray
    G: np.ndarray
    dJt: Optional[np.ndarray] = None
    dG: Optional[np.ndarray] = None
    airy_hat: Optional[np.ndarray] = None   # (N, 2, 2, 2), [:, n] = Airy^(F_n)
    airy_inv: Optional[np.ndarray] = None   # (N, 2, 2, 2), [:, k] = Airy(Finv_k)


def _points(z1, z2):
    z1 = np.atleast_1d(np.asarray(z1, dtype=float))
    z2 = np.atleast_1d(np.asarray(z2, dtype=float))
    z1, z2 = np.broadcast_arrays(z1, z2)
    return z1.copy(), z2.copy()


def segment_owner(weights) -> np.ndarray:
    """Row (integration point) owning each node of a ``segment_rule`` weight matrix."""
    coo = weights.tocoo()
    owner = np.zeros(weights.shape[1], dtype=int)
    owner[coo.col] = coo.row
    return owner


@dataclass(eq=False)
class TransformContext:
    """
    A patch map plus the line-integral policy: breakpoints per direction on which
    partial segments are split, and Gauss points per span.
    """

    gmap: GeometryMap
    breakpoints: Sequence[np.ndarray]
    npts: int

    @classmethod
    def uniform(cls, gmap: GeometryMap, n_elements: int = 8, npts: int = 10) -> "TransformContext":
        bp = uniform_breakpoints(n_elements)
        return cls(gmap, (bp, bp), npts)

    def geometry(self, z1, z2, second: bool = True) -> LocalGeometry:
        z1, z2 = _points(z1, z2)
        bundle = eval_geometry(self.gmap, z1, z2)
        geo = LocalGeometry(
            x=bundle.x, J=bundle.J, detJ=bundle.detJ, Jt=bundle.adjJ,
            G=bundle.J / bundle.detJ[:, None, None],
        )
        if not second:
            return geo
        sd = second_derivatives(self.gmap, z1, z2)
        dJ = sd.hess[:, :, 0, :]
        det = bundle.detJ
        ddet = np.einsum("qij,qji->q", bundle.adjJ, dJ)
        geo.dJt = adjugate(dJ)
        geo.dG = dJ / det[:, None, None] - bundle.J * (ddet / det ** 2)[:, None, None]
        geo.airy_hat = np.stack([sd.airy_hat(n) for n in range(2)], axis=1)
        geo.airy_inv = np.stack([sd.airy_inverse(k) for k in range(2)], axis=1)
        return geo

    def integrate(self, z1, z2, integrand: Callable, axis: int = 0) -> np.ndarray:
        """
        int_0^{z_axis} integrand along the parametric direction ``axis`` for every
        point. ``integrand(t1, t2, owner)`` receives the node coordinates and the
        index of the point each node belongs to and returns (M, ...) values.
        """
        z1, z2 = _points(z1, z2)
        uppers = z1 if axis == 0 else z2
        nodes, W = segment_rule(self.breakpoints[axis], uppers, self.npts)
        owner = segment_owner(W)
        if nodes.size == 0:
            sample = np.asarray(integrand(z1[:1] * 0.0, z2[:1] * 0.0, np.zeros(1, dtype=int)))
            return np.zeros((z1.size,) + sample.shape[1:])
        if axis == 0:
            t1, t2 = nodes, z2[owner]
        else:
            t1, t2 = z1[owner], nodes
        vals = np.asarray(integrand(t1, t2, owner), dtype=float)
        flat = W @ vals.reshape(vals.shape[0], -1)
        return np.asarray(flat).reshape((z1.size,) + vals.shape[1:])


def _sandwich(A: np.ndarray, S: np.ndarray) -> np.ndarray:
    """A S A^T for stacks."""
    return np.einsum("qab,qbc,qdc->qad", A, S, A)


def _airy_combination(airy_pair: np.ndarray, c0: np.ndarray, c1: np.ndarray) -> np.ndarray:
    return airy_pair[:, 0] * c0[:, None, None] + airy_pair[:, 1] * c1[:, None, None]


# ==========================================
# Y2,G1 AND ITS INVERSE
# ==========================================

def y2g1_apply(ctx: TransformContext, S: Callable, z1, z2) -> np.ndarray:
    z1, z2 = _points(z1, z2)
    geo = ctx.geometry(z1, z2)
    main = _sandwich(geo.Jt, np.asarray(S(geo.x), dtype=float))

    def integrand(t1, t2, owner):
        g = ctx.geometry(t1, t2, second=False)
        St = np.asarray(S(g.x), dtype=float)
        return np.stack((
            np.einsum("ql,ql->q", g.Jt[:, 1, :], St[:, 1, :]),
            -np.einsum("ql,ql->q", g.Jt[:, 1, :], St[:, 0, :]),
        ), axis=-1)

    c = ctx.integrate(z1, z2, integrand, axis=0)
    return main + _airy_combination(geo.airy_hat, c[:, 0], c[:, 1])


def _inverse_line_terms(ctx: TransformContext, St: Callable, z1, z2) -> np.ndarray:
    """(int_0^z1 S~_11, -int_0^z1 S~_10) per point."""
    def integrand(t1, t2, owner):
        vals = np.asarray(St(t1, t2), dtype=float)
        return np.stack((vals[:, 1, 1], -vals[:, 1, 0]), axis=-1)
    return ctx.integrate(z1, z2, integrand, axis=0)


def y2g1_inverse(ctx: TransformContext, St: Callable, z1, z2) -> np.ndarray:
    """Physical value at x = F(z1, z2) of Y2G1^-1 applied to a parametric field."""
    z1, z2 = _points(z1, z2)
    geo = ctx.geometry(z1, z2)
    main = _sandwich(geo.G, np.asarray(St(z1, z2), dtype=float))
    c = _inverse_line_terms(ctx, St, z1, z2)
    return main + _airy_combination(geo.airy_inv, c[:, 0], c[:, 1])


# ==========================================
# Y3 AND ITS INVERSE
# ==========================================

def y3_apply(ctx: TransformContext, v: Callable, z1, z2) -> np.ndarray:
    z1, z2 = _points(z1, z2)
    geo = ctx.geometry(z1, z2)
    vals = np.asarray(v(geo.x), dtype=float)
    main = geo.detJ[:, None] * np.einsum("qij,qj->qi", geo.Jt, vals)

    def integrand(t1, t2, owner):
        g = ctx.geometry(t1, t2, second=False)
        return g.detJ[:, None] * np.asarray(v(g.x), dtype=float)

    integral = ctx.integrate(z1, z2, integrand, axis=0)
    return main + np.einsum("qij,qj->qi", geo.dJt, integral)


def y3_inverse(ctx: TransformContext, vt: Callable, z1, z2) -> np.ndarray:
    z1, z2 = _points(z1, z2)
    geo = ctx.geometry(z1, z2)
    vals = np.asarray(vt(z1, z2), dtype=float)
    integral = ctx.integrate(z1, z2, lambda t1, t2, owner: np.asarray(vt(t1, t2), dtype=float), axis=0)
    out = np.einsum("qij,qj->qi", geo.G, vals) + np.einsum("qij,qj->qi", geo.dG, integral)
    return out / geo.detJ[:, None]


# ==========================================
# Y2 = Y2G1 - Y2A AND ITS INVERSE
# ==========================================

def _west_weight(ctx: TransformContext, S: Callable, z2) -> np.ndarray:
    """w(z2) = S(F(0, z2)) Jt(0, z2)^T e_0."""
    g0 = ctx.geometry(np.zeros_like(z2), z2, second=False)
    return np.einsum("qil,ql->qi", np.asarray(S(g0.x), dtype=float), g0.Jt[:, 0, :])


def y2a_apply(ctx: TransformContext, S: Callable, z1, z2) -> np.ndarray:
    z1, z2 = _points(z1, z2)
    geo = ctx.geometry(z1, z2, second=False)
    g0 = ctx.geometry(np.zeros_like(z2), z2, second=False)
    w = _west_weight(ctx, S, z2)
    a00 = np.einsum("qi,qi->q", (geo.Jt - g0.Jt)[:, 0, :], w)

    def integrand(t1, t2, owner):
        g = ctx.geometry(t1, t2)
        return np.einsum("qi,qi->q", g.dJt[:, 1, :], _west_weight(ctx, S, t2))

    a11 = ctx.integrate(z1, z2, integrand, axis=1)
    out = np.zeros((z1.size, 2, 2))
    out[:, 0, 0] = a00
    out[:, 1, 1] = a11
    return out


def y2_apply(ctx: TransformContext, S: Callable, z1, z2) -> np.ndarray:
    return y2g1_apply(ctx, S, z1, z2) - y2a_apply(ctx, S, z1, z2)


def west_trace_correction(ctx: TransformContext, St: Callable, z1, z2):
    """The diagonal field D (N, 2, 2) and the scalar c (N,) of the Y2 inverse."""
    z1, z2 = _points(z1, z2)
    geo = ctx.geometry(z1, z2, second=False)
    g0 = ctx.geometry(np.zeros_like(z2), z2, second=False)
    s = np.asarray(St(np.zeros_like(z2), z2), dtype=float)[:, :, 0]
    E = np.einsum("qab,qbc->qac", geo.Jt, g0.G) - _EYE

    def integrand(t1, t2, owner):
        g = ctx.geometry(t1, t2)
        gw = ctx.geometry(np.zeros_like(t2), t2, second=False)
        st = np.asarray(St(np.zeros_like(t2), t2), dtype=float)[:, :, 0]
        Et = np.einsum("qab,qbc->qac", g.Jt, gw.G) - _EYE
        dEt = np.einsum("qab,qbc->qac", g.dJt, gw.G)
        return np.stack((
            -np.einsum("qb,qb->q", dEt[:, 1, :], st),
            -np.einsum("qb,qb->q", Et[:, 1, :], st),
        ), axis=-1)

    r = ctx.integrate(z1, z2, integrand, axis=1)
    D = np.zeros((z1.size, 2, 2))
    D[:, 0, 0] = -np.einsum("qb,qb->q", E[:, 0, :], s)
    D[:, 1, 1] = r[:, 0]
    return D, r[:, 1]


def y2_inverse(ctx: TransformContext, St: Callable, z1, z2) -> np.ndarray:
    """Physical value at x = F(z1, z2) of the inverse of Y2."""
    z1, z2 = _points(z1, z2)
    geo = ctx.geometry(z1, z2)
    D, c = west_trace_correction(ctx, St, z1, z2)
    main = _sandwich(geo.G, np.asarray(St(z1, z2), dtype=float) - D)
    lines = _inverse_line_terms(ctx, St, z1, z2)
    return main + _airy_combination(geo.airy_inv, lines[:, 0] - c, lines[:, 1])


def parametric_points(ctx: TransformContext, x) -> np.ndarray:
    """zeta = F^-1(x) for evaluating the inverse transforms at physical points."""
    return ctx.gmap.invert(np.asarray(x, dtype=float))
