"""
Patch parametrizations F: (0,1)^2 -> Omega and their Jacobian machinery.
=======================================================================

Array conventions (points always first):
  derivatives(z1, z2, k)  -> (N, k+1, k+1, 2), D[q, a, b, m] = d1^a d2^b F_m
  Jacobian J              -> (N, 2, 2),        J[q, m, j]    = d_j F_m
  Hessian H               -> (N, 2, 2, 2),     H[q, m, a, b] = d_a d_b F_m

Three kinds are supported: closed-form (analytic) maps, tensor B-spline control
nets and rational (weighted) control nets. Inversion uses damped Newton seeded
from the nearest point of a sample grid.
"""
from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from math import comb

import numpy as np

from modules.core import config
from modules.core.exceptions import GeometryDegeneracyError, InversionError
from modules.splines.bspline import TensorSplineSpace, basis_matrix

logger = logging.getLogger(__name__)


# ==========================================
# 2x2 MATRIX HELPERS
# ==========================================

def adjugate(J: np.ndarray) -> np.ndarray:
    """adj(J) = [[J22, -J12], [-J21, J11]] for stacks (..., 2, 2)."""
    adj = np.empty_like(J)
    adj[..., 0, 0] = J[..., 1, 1]
    adj[..., 0, 1] = -J[..., 0, 1]
    adj[..., 1, 0] = -J[..., 1, 0]
    adj[..., 1, 1] = J[..., 0, 0]
    return adj


def determinant(J: np.ndarray) -> np.ndarray:
    return J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]


def inverse(J: np.ndarray) -> np.ndarray:
    return adjugate(J) / determinant(J)[..., None, None]


def airy(hess_component: np.ndarray) -> np.ndarray:
    """Rotated Hessian [[d22, -d12], [-d21, d11]] of a scalar, stacks (..., 2, 2)."""
    return adjugate(hess_component)


# ==========================================
# MAP KINDS
# ==========================================

class GeometryMap(ABC):
    """A smooth patch map on the closed unit square."""

    kind = "abstract"
    max_order = 2

    def __init__(self, name: str = None):
        self.name = name or self.kind
        self._seed = None

    @abstractmethod
    def _derivatives(self, z1: np.ndarray, z2: np.ndarray, order: int) -> np.ndarray:
        ...

    def derivatives(self, z1, z2, order: int = 1) -> np.ndarray:
        if order > self.max_order:
            raise ValueError(f"{self.kind} map supports derivatives up to order {self.max_order}")
        z1 = np.atleast_1d(np.asarray(z1, dtype=float))
        z2 = np.atleast_1d(np.asarray(z2, dtype=float))
        return self._derivatives(z1, z2, order)

    def __call__(self, z1, z2) -> np.ndarray:
        return self.derivatives(z1, z2, 0)[:, 0, 0, :]

    def jacobian(self, z1, z2) -> np.ndarray:
        D = self.derivatives(z1, z2, 1)
        return np.stack((D[:, 1, 0, :], D[:, 0, 1, :]), axis=-1)

    def hessian(self, z1, z2) -> np.ndarray:
        D = self.derivatives(z1, z2, 2)
        H = np.empty((D.shape[0], 2, 2, 2))
        H[:, :, 0, 0] = D[:, 2, 0, :]
        H[:, :, 0, 1] = D[:, 1, 1, :]
        H[:, :, 1, 0] = D[:, 1, 1, :]
        H[:, :, 1, 1] = D[:, 0, 2, :]
        return H

    # ------------------------------------------------------------------
    def _seed_grid(self):
        if self._seed is None:
            g = np.linspace(0.0, 1.0, config.INVERSION_GRID)
            s1, s2 = np.tile(g, g.size), np.repeat(g, g.size)
            self._seed = (s1, s2, self(s1, s2))
        return self._seed

    def invert(self, x) -> np.ndarray:
        """
        zeta with F(zeta) = x for points x (N, 2), by damped Newton from the nearest
        seed-grid sample. Iterates are kept inside the closed unit square.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        s1, s2, sx = self._seed_grid()
        dist = ((x[:, None, :] - sx[None, :, :]) ** 2).sum(axis=-1)
        nearest = dist.argmin(axis=1)
        zeta = np.stack((s1[nearest], s2[nearest]), axis=-1)

        res = self(zeta[:, 0], zeta[:, 1]) - x
        norm = np.linalg.norm(res, axis=-1)
        active = norm > config.NEWTON_TOL
        for _ in range(config.NEWTON_MAX_ITER):
            if not active.any():
                break
            idx = np.nonzero(active)[0]
            J = self.jacobian(zeta[idx, 0], zeta[idx, 1])
            step = -np.einsum("qij,qj->qi", inverse(J), res[idx])
            damping = np.ones(idx.size)
            accepted = np.zeros(idx.size, dtype=bool)
            trial = zeta[idx].copy()
            trial_res = res[idx].copy()
            for _halving in range(30):
                pending = ~accepted
                cand = np.clip(zeta[idx] + damping[:, None] * step, 0.0, 1.0)
                cres = self(cand[:, 0], cand[:, 1]) - x[idx]
                better = np.linalg.norm(cres, axis=-1) < norm[idx]
                take = pending & better
                trial[take] = cand[take]
                trial_res[take] = cres[take]
                accepted |= take
                if accepted.all():
                    break
                damping[~accepted] *= 0.5
            zeta[idx] = trial
            res[idx] = trial_res
            norm[idx] = np.linalg.norm(trial_res, axis=-1)
            # stalled points (no decrease possible) are left for the final check
            active[idx] = (norm[idx] > config.NEWTON_TOL) & accepted
        bad = norm > config.NEWTON_TOL
        if bad.any():
            raise InversionError(
                f"{self.name}: Newton inversion failed for {int(bad.sum())} point(s), "
                f"max residual {norm.max():.2e}"
            )
        return zeta

    def check_diffeomorphism(self, samples: int = None) -> float:
        """Minimum det J over a sample grid; raises if it is not positive."""
        m = samples or config.DEGENERACY_GRID
        g = np.linspace(0.0, 1.0, m)
        z1, z2 = np.tile(g, m), np.repeat(g, m)
        det = determinant(self.jacobian(z1, z2))
        if det.min() <= 0.0:
            raise GeometryDegeneracyError(f"{self.name}: det J = {det.min():.3e} <= 0 on the sample grid")
        return float(det.min())


class AnalyticMap(GeometryMap):
    """Closed-form map given by a derivative callback up to order 3."""

    kind = "analytic"
    max_order = 3

    def __init__(self, derivative_fn, name: str):
        super().__init__(name)
        self._fn = derivative_fn

    def _derivatives(self, z1, z2, order):
        return self._fn(z1, z2, order)


def _affine_fn(origin, matrix):
    origin = np.asarray(origin, dtype=float)
    A = np.asarray(matrix, dtype=float)

    def fn(z1, z2, order):
        D = np.zeros((z1.size, order + 1, order + 1, 2))
        D[:, 0, 0, :] = origin[None, :] + z1[:, None] * A[:, 0] + z2[:, None] * A[:, 1]
        if order >= 1:
            D[:, 1, 0, :] = A[:, 0]
            D[:, 0, 1, :] = A[:, 1]
        return D
    return fn


def affine_map(origin=(0.0, 0.0), matrix=((1.0, 0.0), (0.0, 1.0)), name: str = "affine") -> AnalyticMap:
    return AnalyticMap(_affine_fn(origin, matrix), name)


def identity_map() -> AnalyticMap:
    return affine_map(name="identity")


def _curved_square_fn(z1, z2, order):
    D = np.zeros((z1.size, order + 1, order + 1, 2))
    D[:, 0, 0, 0] = z1
    D[:, 0, 0, 1] = z1 ** 2 + z2
    if order >= 1:
        D[:, 1, 0, 0] = 1.0
        D[:, 1, 0, 1] = 2.0 * z1
        D[:, 0, 1, 1] = 1.0
    if order >= 2:
        D[:, 2, 0, 1] = 2.0
    return D


def curved_square_map() -> AnalyticMap:
    """F(z1, z2) = (z1, z1^2 + z2)."""
    return AnalyticMap(_curved_square_fn, "curved-square")


class SplineMap(GeometryMap):
    """Tensor B-spline control net; control_points flattened as i1 + n1 * i2."""

    kind = "spline"

    def __init__(self, space: TensorSplineSpace, control_points, name: str = None):
        super().__init__(name)
        self.space = space
        cp = np.asarray(control_points, dtype=float)
        if cp.shape != (space.dim, 2):
            raise ValueError(f"expected {space.dim} control points, got {cp.shape}")
        self.control_points = cp
        self.max_order = max(3, min(space.degrees))

    def _basis(self, z1, z2, order):
        b1 = [basis_matrix(self.space.kvs[0], z1, a) for a in range(order + 1)]
        b2 = [basis_matrix(self.space.kvs[1], z2, b) for b in range(order + 1)]
        return b1, b2

    def _net(self, values):
        n1, n2 = self.space.shape
        return values.reshape(n2, n1, *values.shape[1:])

    def _derivatives(self, z1, z2, order):
        b1, b2 = self._basis(z1, z2, order)
        net = self._net(self.control_points)
        D = np.zeros((z1.size, order + 1, order + 1, 2))
        for a in range(order + 1):
            for b in range(order + 1 - a):
                D[:, a, b, :] = np.einsum("ki,kj,jim->km", b1[a], b2[b], net)
        return D


class RationalSplineMap(SplineMap):
    """Weighted control net; derivatives by the quotient-rule recursion."""

    kind = "rational"

    def __init__(self, space: TensorSplineSpace, control_points, weights, name: str = None):
        super().__init__(space, control_points, name)
        w = np.asarray(weights, dtype=float)
        if w.shape != (space.dim,) or np.any(w <= 0):
            raise ValueError("weights must be positive, one per control point")
        self.weights = w

    def _derivatives(self, z1, z2, order):
        b1, b2 = self._basis(z1, z2, order)
        wnet = self._net(self.weights)
        anet = self._net(self.control_points * self.weights[:, None])
        N = z1.size
        A = np.zeros((N, order + 1, order + 1, 2))
        W = np.zeros((N, order + 1, order + 1))
        for a in range(order + 1):
            for b in range(order + 1 - a):
                A[:, a, b, :] = np.einsum("ki,kj,jim->km", b1[a], b2[b], anet)
                W[:, a, b] = np.einsum("ki,kj,ji->k", b1[a], b2[b], wnet)
        S = np.zeros_like(A)
        for k in range(order + 1):
            for l in range(order + 1 - k):
                v = A[:, k, l, :].copy()
                for j in range(1, l + 1):
                    v -= comb(l, j) * W[:, 0, j, None] * S[:, k, l - j, :]
                for i in range(1, k + 1):
                    v -= comb(k, i) * W[:, i, 0, None] * S[:, k - i, l, :]
                    for j in range(1, l + 1):
                        v -= comb(k, i) * comb(l, j) * W[:, i, j, None] * S[:, k - i, l - j, :]
                S[:, k, l, :] = v / W[:, 0, 0, None]
        return S


# ==========================================
# EVALUATION BUNDLES
# ==========================================

@dataclass
class GeometryBundle:
    x: np.ndarray        # (N, 2)
    J: np.ndarray        # (N, 2, 2)
    detJ: np.ndarray     # (N,)
    adjJ: np.ndarray     # (N, 2, 2)

    @property
    def invJ(self) -> np.ndarray:
        return self.adjJ / self.detJ[:, None, None]


def eval_geometry(gmap: GeometryMap, z1, z2) -> GeometryBundle:
    D = gmap.derivatives(z1, z2, 1)
    J = np.stack((D[:, 1, 0, :], D[:, 0, 1, :]), axis=-1)
    det = determinant(J)
    if np.any(det <= 0.0):
        raise GeometryDegeneracyError(f"{gmap.name}: det J = {det.min():.3e} <= 0")
    return GeometryBundle(x=D[:, 0, 0, :], J=J, detJ=det, adjJ=adjugate(J))


def invert_geometry(gmap: GeometryMap, x) -> np.ndarray:
    return gmap.invert(x)


@dataclass
class SecondDerivatives:
    hess: np.ndarray       # (N, 2, 2, 2) d_a d_b F_m
    hess_inv: np.ndarray   # (N, 2, 2, 2) physical d_i d_j (F^-1)_k at x = F(zeta)

    def airy_hat(self, n: int) -> np.ndarray:
        """Airy-hat of F_n (n = 0, 1)."""
        return airy(self.hess[:, n])

    def airy_inverse(self, k: int) -> np.ndarray:
        """Physical Airy of the inverse-map component k (k = 0, 1)."""
        return airy(self.hess_inv[:, k])


def second_derivatives(gmap: GeometryMap, z1, z2) -> SecondDerivatives:
    """
    Hessians of F and, via the chain rule applied to F^-1(F(zeta)) = zeta,
    d_i d_j (F^-1)_k = -(J^-1)_{km} d_a d_n F_m (J^-1)_{aj} (J^-1)_{ni}.
    """
    H = gmap.hessian(z1, z2)
    Jinv = inverse(gmap.jacobian(z1, z2))
    Hinv = -np.einsum("qkm,qman,qaj,qni->qkij", Jinv, H, Jinv, Jinv)
    return SecondDerivatives(hess=H, hess_inv=Hinv)
