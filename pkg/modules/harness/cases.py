"""
Manufactured solutions and demo problems.

Every case carries the displacement as two scalar fields with hand-coded first and
second derivatives; stress, load (f = div sigma) and the multiplier follow from
them. Demo cases have no exact solution and only prescribe boundary data.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from modules.core.exceptions import BoundaryLayoutError, UnknownCaseError
from modules.elasticity.boundary import BoundarySpec
from modules.elasticity.material import IsotropicMaterial
from modules.elasticity.weaksym import exact_multiplier_from_u
from modules.geometry.library import builtin_geometry
from modules.geometry.maps import adjugate
from modules.geometry.multipatch import TRACTION, MultiPatchTopology
from modules.splines.bspline import Edge

logger = logging.getLogger(__name__)

PI = np.pi

# x (N, 2) -> (value (N,), gradient (N, 2), hessian (N, 2, 2))
ScalarField = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray, np.ndarray]]


# ==========================================
# SCALAR BUILDING BLOCKS
# ==========================================

def _sin(k: float):
    return lambda t: (np.sin(k * t), k * np.cos(k * t), -k * k * np.sin(k * t))


def _cos_minus_one(k: float):
    return lambda t: (np.cos(k * t) - 1.0, -k * np.sin(k * t), -k * k * np.cos(k * t))


def _one_minus_cos(k: float):
    return lambda t: (1.0 - np.cos(k * t), k * np.sin(k * t), k * k * np.cos(k * t))


def separable(fx, gy) -> ScalarField:
    """phi(x, y) = f(x) g(y) from univariate (value, d, d2) triples."""
    def phi(x):
        f, df, ddf = fx(x[:, 0])
        g, dg, ddg = gy(x[:, 1])
        grad = np.stack((df * g, f * dg), axis=-1)
        hess = np.empty((x.shape[0], 2, 2))
        hess[:, 0, 0] = ddf * g
        hess[:, 0, 1] = hess[:, 1, 0] = df * dg
        hess[:, 1, 1] = f * ddg
        return f * g, grad, hess
    return phi


def curved_sin_sin(x) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """sin(pi x) sin(pi (y - x^2)): the product sin sin pulled back through the curved square."""
    a = PI * x[:, 0]
    b = PI * (x[:, 1] - x[:, 0] ** 2)
    bx, by, bxx = -2.0 * PI * x[:, 0], PI, -2.0 * PI
    sa, ca, sb, cb = np.sin(a), np.cos(a), np.sin(b), np.cos(b)
    grad = np.stack((PI * ca * sb + sa * cb * bx, sa * cb * by), axis=-1)
    hess = np.empty((x.shape[0], 2, 2))
    hess[:, 0, 0] = -PI ** 2 * sa * sb + 2.0 * PI * ca * cb * bx - sa * sb * bx ** 2 + sa * cb * bxx
    hess[:, 0, 1] = hess[:, 1, 0] = PI * ca * cb * by - sa * sb * bx * by
    hess[:, 1, 1] = -sa * sb * by ** 2
    return sa * sb, grad, hess


def combine(*terms: Tuple[float, ScalarField]) -> ScalarField:
    def phi(x):
        parts = [(c, f(x)) for c, f in terms]
        return tuple(sum(c * v[k] for c, v in parts) for k in range(3))
    return phi


SIN_SIN = separable(_sin(PI), _sin(PI))


# ==========================================
# CASE BUNDLE
# ==========================================

@dataclass
class ManufacturedCase:
    """
    ``components`` are the displacement components u_x, u_y (None for demos).
    ``divergence`` optionally supplies div u and its gradient directly; quasi-
    incompressible solutions need it because lambda div u must not be formed from
    cancelling derivatives. ``tags`` overrides the geometry's default (all
    displacement) edge tags; ``traction_data`` is an explicit traction for demos,
    otherwise traction edges get sigma n of the exact solution.
    """

    name: str
    geometry: str
    material: IsotropicMaterial
    components: Optional[Tuple[ScalarField, ScalarField]] = None
    divergence: Optional[Callable] = None
    tags: Dict[Tuple[int, Edge], str] = field(default_factory=dict)
    traction_data: Optional[Callable] = None
    formulation: str = "weak"
    degree: int = 2
    regularity: int = 0
    levels: Tuple[int, ...] = (4, 8, 16, 32)
    description: str = ""

    @property
    def has_exact(self) -> bool:
        return self.components is not None

    # ------------------------------------------------------------------
    def _eval(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if not self.has_exact:
            n = x.shape[0]
            return np.zeros((n, 2)), np.zeros((n, 2, 2)), np.zeros((n, 2, 2, 2))
        parts = [c(x) for c in self.components]
        u = np.stack([p[0] for p in parts], axis=-1)
        grad = np.stack([p[1] for p in parts], axis=1)
        hess = np.stack([p[2] for p in parts], axis=1)
        return u, grad, hess

    def u(self, x) -> np.ndarray:
        return self._eval(x)[0]

    def grad_u(self, x) -> np.ndarray:
        """grad_u[:, i, j] = d_j u_i."""
        return self._eval(x)[1]

    def _div_u(self, x, grad, hess):
        if self.divergence is not None:
            return self.divergence(x)
        div = grad[:, 0, 0] + grad[:, 1, 1]
        # d_i div u = d_i d_j u_j
        return div, hess[:, 0, 0, :] + hess[:, 1, 1, :]

    def sigma(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        _, grad, hess = self._eval(x)
        mat = self.material
        div, _ = self._div_u(x, grad, hess)
        out = mat.mu * (grad + np.swapaxes(grad, 1, 2))
        out[:, 0, 0] += mat.lam * div
        out[:, 1, 1] += mat.lam * div
        return out

    def div_sigma(self, x) -> np.ndarray:
        """f = div sigma = mu lap u + (lambda + mu) grad div u."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        _, grad, hess = self._eval(x)
        _, grad_div = self._div_u(x, grad, hess)
        lap = hess[:, :, 0, 0] + hess[:, :, 1, 1]
        mat = self.material
        return mat.mu * lap + (mat.lam + mat.mu) * grad_div

    def multiplier(self, x) -> np.ndarray:
        """Scalar q of the exact multiplier Skew(q)."""
        return exact_multiplier_from_u(self.grad_u(x))

    @property
    def load(self) -> Optional[Callable]:
        return self.div_sigma if self.has_exact else None

    # ------------------------------------------------------------------
    def topology(self) -> MultiPatchTopology:
        return builtin_geometry(self.geometry)

    def edge_tags(self, topo: MultiPatchTopology) -> Dict[Tuple[int, Edge], str]:
        tags = dict(topo.boundary)
        for key, tag in self.tags.items():
            if key not in tags:
                raise BoundaryLayoutError(f"case {self.name}: {key} is not an outer edge of {self.geometry}")
            tags[key] = tag
        return tags

    def boundary_spec(self, topo: MultiPatchTopology) -> BoundarySpec:
        tags = self.edge_tags(topo)
        traction_edges = sorted(k for k, t in tags.items() if t == TRACTION)
        traction = self.traction_data
        if traction is None and traction_edges and self.has_exact:
            traction = normal_traction(self.sigma, topo, traction_edges)
        displacement = self.u if self.has_exact else None
        spec = BoundarySpec(tags, displacement, traction)
        spec.validate(topo)
        return spec

    def with_material(self, lam: float = None, mu: float = None) -> "ManufacturedCase":
        """The same case for other Lame parameters (solutions depending on lambda are rebuilt)."""
        lam = self.material.lam if lam is None else lam
        mu = self.material.mu if mu is None else mu
        builder = BUILDERS.get(self.name)
        if builder is None:
            return replace(self, material=IsotropicMaterial(lam, mu))
        return builder(IsotropicMaterial(lam, mu))


def normal_traction(sigma: Callable, topo: MultiPatchTopology, edges) -> Callable:
    """
    t(x) = sigma(x) n(x) on single-patch traction edges; the edge and its outward
    normal are found by inverting the patch map.
    """
    if topo.npatches != 1:
        raise BoundaryLayoutError("exact traction data is derived on single-patch geometries only")
    gmap = topo.patches[0]
    edge_list = [edge for _, edge in edges]

    def traction(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        zeta = gmap.invert(x)
        dist = np.stack([np.abs(zeta[:, e.axis] - e.side) for e in edge_list], axis=-1)
        which = dist.argmin(axis=1)
        Jt = adjugate(gmap.jacobian(zeta[:, 0], zeta[:, 1]))
        n = np.empty_like(x)
        for k, e in enumerate(edge_list):
            mask = which == k
            n[mask] = e.outward_sign * Jt[mask, e.axis, :]
        n /= np.linalg.norm(n, axis=-1, keepdims=True)
        return np.einsum("qij,qj->qi", sigma(x), n)

    return traction


def consistency_residual(case: ManufacturedCase, x, step: float = 1e-5) -> float:
    """max |f - div sigma| with div sigma from central differences of sigma."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    fd = np.zeros((x.shape[0], 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = step
        fd += (case.sigma(x + e)[:, :, j] - case.sigma(x - e)[:, :, j]) / (2.0 * step)
    return float(np.abs(fd - case.div_sigma(x)).max())


def sample_points(topo: MultiPatchTopology, per_direction: int = 10) -> np.ndarray:
    """Deterministic interior points of every patch (a shifted parametric grid)."""
    g = (np.arange(per_direction) + 0.5) / per_direction
    z1, z2 = np.tile(g, g.size), np.repeat(g, g.size)
    return np.concatenate([gmap(z1, z2) for gmap in topo.patches])


# ==========================================
# BUILTIN CASES
# ==========================================

def _curved_square_dirichlet(mat: IsotropicMaterial) -> ManufacturedCase:
    return ManufacturedCase(
        name="curved-square-dirichlet", geometry="curved-square", material=mat,
        components=(curved_sin_sin, combine((-1.0, curved_sin_sin))),
        description="u1 = sin(pi z1) sin(pi z2) o F^-1, u2 = -u1 on the curved square, zero displacement",
    )


def _curved_square_mixed(mat: IsotropicMaterial) -> ManufacturedCase:
    return ManufacturedCase(
        name="curved-square-mixed", geometry="curved-square", material=mat,
        components=(SIN_SIN, combine((-1.0, SIN_SIN))),
        tags={(0, Edge.EAST): TRACTION, (0, Edge.SOUTH): TRACTION, (0, Edge.NORTH): TRACTION},
        degree=3, regularity=1,
        description="u1 = sin(pi x) sin(pi y), u2 = -u1; traction on the right, bottom and top edges",
    )


def _fourpatch_dirichlet(mat: IsotropicMaterial) -> ManufacturedCase:
    return ManufacturedCase(
        name="fourpatch-dirichlet", geometry="fourpatch-square", material=mat,
        components=(SIN_SIN, combine((-1.0, SIN_SIN))),
        levels=(4, 8, 16),
        description="u1 = sin(pi x) sin(pi y), u2 = -u1 on the four-patch square [-1,1]^2",
    )


def _quasi_components(lam: float):
    """
    Divergence-free leading part plus a 1/(1+lambda) compressible perturbation,
    with div u given in closed form.
    """
    s = 1.0 / (1.0 + lam)
    lead1 = separable(_cos_minus_one(2.0 * PI), _sin(2.0 * PI))
    lead2 = separable(_sin(2.0 * PI), _one_minus_cos(2.0 * PI))
    u1 = combine((1.0, lead1), (s, SIN_SIN))
    u2 = combine((1.0, lead2), (2.0 * s, SIN_SIN))
    dx_part = separable(lambda t: (PI * np.cos(PI * t), -PI ** 2 * np.sin(PI * t), 0.0 * t), _sin(PI))
    dy_part = separable(_sin(PI), lambda t: (PI * np.cos(PI * t), -PI ** 2 * np.sin(PI * t), 0.0 * t))
    div_field = combine((s, dx_part), (2.0 * s, dy_part))

    def divergence(x):
        val, grad, _ = div_field(x)
        return val, grad

    return (u1, u2), divergence


def _quasi_single(mat: IsotropicMaterial) -> ManufacturedCase:
    comps, div = _quasi_components(mat.lam)
    return ManufacturedCase(
        name="quasi-incompressible-single", geometry="curved-square-spline", material=mat,
        components=comps, divergence=div,
        tags={(0, Edge.EAST): TRACTION, (0, Edge.SOUTH): TRACTION, (0, Edge.NORTH): TRACTION},
        description="quasi-incompressible solution on the spline curved square, displacement on the left edge only",
    )


def _quasi_fourpatch(mat: IsotropicMaterial) -> ManufacturedCase:
    comps, div = _quasi_components(mat.lam)
    return ManufacturedCase(
        name="quasi-incompressible-fourpatch", geometry="fourpatch-square", material=mat,
        components=comps, divergence=div, levels=(4, 8, 16),
        description="quasi-incompressible solution on the four-patch square, zero displacement",
    )


def _disk_traction(x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t = np.zeros_like(x)
    t[:, 1] = -0.1 * (2.0 - x[:, 0]) ** 2 * (2.0 + x[:, 0]) ** 2
    return t


def _disk_load(mat: IsotropicMaterial) -> ManufacturedCase:
    return ManufacturedCase(
        name="disk-load", geometry="disk", material=mat,
        traction_data=_disk_traction, degree=3, regularity=0, levels=(8,),
        description="five-patch disk, load t_y = -0.1 (2-x)^2 (2+x)^2 on the upper rim, lower rim clamped",
    )


def _square_top_load(mat: IsotropicMaterial) -> ManufacturedCase:
    return ManufacturedCase(
        name="square-top-load", geometry="identity", material=mat,
        tags={(0, Edge.NORTH): TRACTION},
        traction_data=lambda x: np.tile([-1.0, 0.0], (np.atleast_2d(x).shape[0], 1)),
        degree=3, regularity=0, levels=(8,),
        description="unit square, traction (-1, 0) on the top edge, other edges clamped",
    )


def _strongsym_identity(mat: IsotropicMaterial) -> ManufacturedCase:
    return ManufacturedCase(
        name="strongsym-identity", geometry="identity", material=mat,
        components=(SIN_SIN, combine((-1.0, SIN_SIN))),
        formulation="strong", degree=2, regularity=1,
        description="u1 = sin(pi x) sin(pi y), u2 = -u1 on the unit square, symmetric stresses",
    )


def _strongsym_curved(mat: IsotropicMaterial) -> ManufacturedCase:
    return ManufacturedCase(
        name="strongsym-curved", geometry="curved-square", material=mat,
        components=(curved_sin_sin, combine((-1.0, curved_sin_sin))),
        formulation="strong", degree=2, regularity=1,
        description="curved-square solution with symmetric stresses and zero displacement",
    )


# name -> builder taking the material
BUILDERS: Dict[str, Callable[[IsotropicMaterial], ManufacturedCase]] = {
    "curved-square-dirichlet": _curved_square_dirichlet,
    "curved-square-mixed": _curved_square_mixed,
    "fourpatch-dirichlet": _fourpatch_dirichlet,
    "quasi-incompressible-single": _quasi_single,
    "quasi-incompressible-fourpatch": _quasi_fourpatch,
    "disk-load": _disk_load,
    "square-top-load": _square_top_load,
    "strongsym-identity": _strongsym_identity,
    "strongsym-curved": _strongsym_curved,
}

DEFAULT_MATERIALS = {
    "quasi-incompressible-single": (1e10, 1.0),
    "quasi-incompressible-fourpatch": (1e10, 1.0),
    "disk-load": (100.0, 1.0),
    "square-top-load": (10.0, 1.0),
}


def case_names():
    return sorted(BUILDERS)


def builtin_case(name: str, lam: float = None, mu: float = None) -> ManufacturedCase:
    if name not in BUILDERS:
        raise UnknownCaseError(f"unknown case {name!r}; choose from {case_names()}")
    lam0, mu0 = DEFAULT_MATERIALS.get(name, (2.0, 1.0))
    material = IsotropicMaterial(lam0 if lam is None else lam, mu0 if mu is None else mu)
    return BUILDERS[name](material)
