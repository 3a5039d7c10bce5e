"""
Hellinger-Reissner elasticity with strongly symmetric spline stresses (single patch).

Parametric spaces for p > r >= 1:

    stress  SYM(S^{r+1,r-1}_{p+1,p-1}, S^{r,r}_{p,p}, S^{r-1,r+1}_{p-1,p+1})   (s11, s12, s22)
    displ.  S^{r,r-1}_{p,p-1} x S^{r-1,r}_{p-1,p}                            (u1, u2)

Physical stresses are Y2^-1 of the symmetric spline fields (Y2G1^-1 for the
traction-free-west variant), displacements are Y3^-1 of the vector fields, and
physical divergences are Y3^-1 of the parametric divergences.
"""
from __future__ import annotations

import concurrent.futures
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from modules.core import config
from modules.core.exceptions import BoundaryLayoutError, ConformityError, SpaceParameterError
from modules.elasticity.boundary import BoundarySpec
from modules.elasticity.material import IsotropicMaterial
from modules.elasticity.strongsym import TransformContext, segment_owner
from modules.geometry.multipatch import MultiPatchTopology
from modules.solve.solver import BlockSaddleSystem
from modules.splines.bspline import (
    Edge, KnotVector, TensorSplineSpace, antiderivative, antiderivative_matrix, basis_matrix,
)
from modules.splines.quadrature import TensorRule, element_rule, segment_rule

logger = logging.getLogger(__name__)

FIELDS = ("stress", "displacement")
FAMILIES = ("s11", "s12", "s22")
DIRICHLET_VARIANT = "dirichlet"
WEST_TRACTION_VARIANT = "west-traction"


@dataclass(frozen=True)
class StrongSpacePair:
    p: int
    r: int
    s11: TensorSplineSpace
    s12: TensorSplineSpace
    s22: TensorSplineSpace
    u1: TensorSplineSpace
    u2: TensorSplineSpace

    @classmethod
    def build(cls, p: int, r: int, n_elements) -> "StrongSpacePair":
        if not (p > r >= 1):
            raise SpaceParameterError(f"symmetric spline spaces need p > r >= 1 (got p={p}, r={r})")
        uniform = TensorSplineSpace.uniform
        return cls(
            p=p, r=r,
            s11=uniform((p + 1, p - 1), (r + 1, r - 1), n_elements),
            s12=uniform((p, p), (r, r), n_elements),
            s22=uniform((p - 1, p + 1), (r - 1, r + 1), n_elements),
            u1=uniform((p, p - 1), (r, r - 1), n_elements),
            u2=uniform((p - 1, p), (r - 1, r), n_elements),
        )

    def family(self, name: str) -> TensorSplineSpace:
        return getattr(self, name)

    @property
    def breakpoints(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.s12.kvs[0].breakpoints, self.s12.kvs[1].breakpoints

    @property
    def stress_offsets(self) -> Dict[str, int]:
        dims = np.cumsum([0] + [self.family(f).dim for f in FAMILIES])
        return {f: int(dims[k]) for k, f in enumerate(FAMILIES)}

    @property
    def stress_dim(self) -> int:
        return sum(self.family(f).dim for f in FAMILIES)

    @property
    def displacement_dim(self) -> int:
        return self.u1.dim + self.u2.dim

    def west_dofs(self) -> np.ndarray:
        """s11 and s12 functions whose normal trace on zeta1 = 0 is nonzero."""
        offs = self.stress_offsets
        return np.concatenate([offs[f] + self.family(f).boundary_dofs(Edge.WEST) for f in ("s11", "s12")])

    def stress_columns(self, variant: str) -> np.ndarray:
        full = np.arange(self.stress_dim)
        if variant == WEST_TRACTION_VARIANT:
            return np.setdiff1d(full, self.west_dofs())
        return full


def _row_kron(m2, m1) -> sp.csr_matrix:
    """Row-wise Kronecker product: column i1 + n1 * i2 holds m1[:, i1] * m2[:, i2]."""
    n1, n2 = m1.shape[1], m2.shape[1]
    left = sp.kron(m2, sp.csr_matrix(np.ones((1, n1))), format="csr")
    right = sp.kron(sp.csr_matrix(np.ones((1, n2))), m1, format="csr")
    return left.multiply(right).tocsr()


class _BasisSampler:
    """Tensor basis matrices on a grid (kron) or on scattered points (row-wise kron)."""

    def __init__(self, z1, z2, grid: bool):
        self.z1 = np.atleast_1d(np.asarray(z1, dtype=float))
        self.z2 = np.atleast_1d(np.asarray(z2, dtype=float))
        self.grid = grid
        if grid:
            self.pts = np.tile(self.z1, self.z2.size), np.repeat(self.z2, self.z1.size)
        else:
            self.pts = self.z1, self.z2

    @property
    def npoints(self) -> int:
        return self.pts[0].size

    def combine(self, m1, m2) -> sp.csr_matrix:
        m1, m2 = sp.csr_matrix(m1), sp.csr_matrix(m2)
        return sp.kron(m2, m1, format="csr") if self.grid else _row_kron(m2, m1)

    def values(self, kv: KnotVector, axis: int, order: int = 0):
        z = self.z1 if axis == 0 else self.z2
        return basis_matrix(kv, z, order, sparse=True)

    def west(self, kv: KnotVector):
        return basis_matrix(kv, np.zeros_like(self.z1), sparse=True)

    def anti(self, kv: KnotVector):
        return sp.csr_matrix(antiderivative_matrix(kv, self.z1))

    def tensor(self, space: TensorSplineSpace, d1: int = 0, d2: int = 0):
        return self.combine(self.values(space.kvs[0], 0, d1), self.values(space.kvs[1], 1, d2))


def _diag(values) -> sp.dia_matrix:
    return sp.diags(np.asarray(values, dtype=float))


class StrongCollocation:
    """
    Physical stress, divergence and displacement basis values of a
    ``StrongSpacePair`` at a point set. Matrices are (npoints, ndofs) CSR; stress
    columns follow (s11, s12, s22) and the components are (xx, xy, yy).
    """

    def __init__(self, pair: StrongSpacePair, ctx: TransformContext, z1, z2,
                 grid: bool = True, variant: str = DIRICHLET_VARIANT):
        if variant not in (DIRICHLET_VARIANT, WEST_TRACTION_VARIANT):
            raise BoundaryLayoutError(f"unknown strong-symmetry variant {variant!r}")
        self.pair = pair
        self.ctx = ctx
        self.variant = variant
        self.sampler = _BasisSampler(z1, z2, grid)
        self.geo = ctx.geometry(*self.sampler.pts)

    @property
    def npoints(self) -> int:
        return self.sampler.npoints

    # ------------------------------------------------------------------
    def _family(self, name: str):
        space = self.pair.family(name)
        kv1, kv2 = space.kvs
        S = self.sampler
        G, dG, Ai = self.geo.G, self.geo.dG, self.geo.airy_inv
        inv_det = 1.0 / self.geo.detJ

        b1, b2 = S.values(kv1, 0), S.values(kv2, 1)
        phi = S.combine(b1, b2)
        phi_west = S.combine(S.west(kv1), b2)
        d1phi = S.combine(S.values(kv1, 0, 1), b2)
        d2phi = S.combine(b1, S.values(kv2, 1, 1))
        psi = S.combine(S.anti(kv1), b2)
        d2psi = S.combine(S.anti(kv1), S.values(kv2, 1, 1))

        comps = {}
        for key, (a, b) in (("xx", (0, 0)), ("xy", (0, 1)), ("yy", (1, 1))):
            if name == "s11":
                comps[key] = _diag(G[:, a, 0] * G[:, b, 0]) @ phi
            elif name == "s12":
                comps[key] = (_diag(G[:, a, 0] * G[:, b, 1] + G[:, a, 1] * G[:, b, 0]) @ phi
                              - _diag(Ai[:, 1, a, b]) @ psi)
            else:
                comps[key] = _diag(G[:, a, 1] * G[:, b, 1]) @ phi + _diag(Ai[:, 0, a, b]) @ psi

        div = []
        for a in range(2):
            if name == "s11":
                vt = _diag(G[:, a, 0]) @ d1phi + _diag(dG[:, a, 0]) @ (phi - phi_west)
            elif name == "s12":
                vt = (_diag(G[:, a, 0]) @ d2phi + _diag(G[:, a, 1]) @ d1phi
                      + _diag(dG[:, a, 0]) @ d2psi + _diag(dG[:, a, 1]) @ (phi - phi_west))
            else:
                vt = _diag(G[:, a, 1]) @ d2phi + _diag(dG[:, a, 1]) @ d2psi
            div.append((_diag(inv_det) @ vt).tocsr())

        if self.variant == DIRICHLET_VARIANT and name in ("s11", "s12"):
            corr = self._west_correction(space, comp=0 if name == "s11" else 1)
            if corr is not None:
                for key in comps:
                    comps[key] = comps[key] + corr[key]
        return {key: m.tocsr() for key, m in comps.items()}, div

    def _west_correction(self, space: TensorSplineSpace, comp: int) -> Optional[Dict[str, sp.csr_matrix]]:
        """
        Columns of the functions with i1 = 0: -G D G^T - Airy(Finv_0) c for the west
        trace s = beta(z2) e_comp. None when d1 adj(J) vanishes on the point set.
        """
        geo, ctx = self.geo, self.ctx
        if not np.any(geo.dJt):
            return None
        kv2 = space.kvs[1]
        z1, z2 = self.sampler.pts
        g0 = ctx.geometry(np.zeros_like(z2), z2, second=False)
        E = np.einsum("qab,qbc->qac", geo.Jt, g0.G) - np.eye(2)
        beta = basis_matrix(kv2, z2)
        d00 = -E[:, 0, comp][:, None] * beta

        nodes, W = segment_rule(ctx.breakpoints[1], z2, ctx.npts)
        if nodes.size:
            owner = segment_owner(W)
            gt = ctx.geometry(z1[owner], nodes)
            gw = ctx.geometry(np.zeros_like(nodes), nodes, second=False)
            Et = np.einsum("qab,qbc->qac", gt.Jt, gw.G) - np.eye(2)
            dEt = np.einsum("qab,qbc->qac", gt.dJt, gw.G)
            bt = basis_matrix(kv2, nodes, sparse=True)
            d11 = -(W @ _diag(dEt[:, 1, comp]) @ bt).toarray()
            c = -(W @ _diag(Et[:, 1, comp]) @ bt).toarray()
        else:
            d11 = np.zeros_like(beta)
            c = np.zeros_like(beta)

        G, Ai = geo.G, geo.airy_inv
        n1 = space.kvs[0].n
        cols = np.arange(kv2.n) * n1
        out = {}
        for key, (a, b) in (("xx", (0, 0)), ("xy", (0, 1)), ("yy", (1, 1))):
            vals = -((G[:, a, 0] * G[:, b, 0])[:, None] * d00
                     + (G[:, a, 1] * G[:, b, 1])[:, None] * d11
                     + Ai[:, 0, a, b][:, None] * c)
            dense = sp.csr_matrix(vals)
            out[key] = sp.csr_matrix(
                (dense.data, cols[dense.indices], dense.indptr), shape=(self.npoints, space.dim)
            )
        return out

    @cached_property
    def _families(self):
        workers = min(config.ASSEMBLY_THREADS, len(FAMILIES))
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
            return dict(zip(FAMILIES, executor.map(self._family, FAMILIES)))

    @cached_property
    def stress(self) -> Tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]:
        fams = self._families
        return tuple(sp.hstack([fams[f][0][key] for f in FAMILIES], format="csr") for key in ("xx", "xy", "yy"))

    @cached_property
    def divergence(self) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
        fams = self._families
        return tuple(sp.hstack([fams[f][1][a] for f in FAMILIES], format="csr") for a in range(2))

    @cached_property
    def displacement(self) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
        """(u_x, u_y) of Y3^-1(B e_c), columns u1 then u2."""
        S, G, dG = self.sampler, self.geo.G, self.geo.dG
        inv_det = 1.0 / self.geo.detJ
        blocks = [[], []]
        for c, space in enumerate((self.pair.u1, self.pair.u2)):
            kv1, kv2 = space.kvs
            b2 = S.values(kv2, 1)
            phi = S.combine(S.values(kv1, 0), b2)
            psi = S.combine(S.anti(kv1), b2)
            for a in range(2):
                blocks[a].append(_diag(inv_det) @ (_diag(G[:, a, c]) @ phi + _diag(dG[:, a, c]) @ psi))
        return tuple(sp.hstack(b, format="csr") for b in blocks)


@dataclass
class StrongBasisValue:
    stress: np.ndarray       # (N, 2, 2)
    divergence: np.ndarray   # (N, 2)


def _column(M: sp.spmatrix, index: int) -> np.ndarray:
    return np.asarray(M[:, index].todense()).ravel()


def strong_basis_eval(pair: StrongSpacePair, ctx: TransformContext, index: int, z1, z2,
                      variant: str = DIRICHLET_VARIANT) -> StrongBasisValue:
    """Physical stress and divergence of one stress basis function at scattered points."""
    if not 0 <= index < pair.stress_dim:
        raise IndexError(f"stress basis index {index} outside [0, {pair.stress_dim})")
    coll = StrongCollocation(pair, ctx, z1, z2, grid=False, variant=variant)
    sxx, sxy, syy = (_column(m, index) for m in coll.stress)
    stress = np.stack((np.stack((sxx, sxy), -1), np.stack((sxy, syy), -1)), axis=1)
    div = np.stack([_column(m, index) for m in coll.divergence], axis=-1)
    return StrongBasisValue(stress, div)


# ==========================================
# EXACTNESS ON THE PARAMETRIC SIDE
# ==========================================

def divergence_preimage(pair: StrongSpacePair, v1, v2) -> np.ndarray:
    """
    tau~ with div^ tau~ = (v1, v2) and tau~ e_0 = 0 on zeta1 = 0:
    tau~_11 = int_0^z1 v1, tau~_22 = int_0^z2 v2, tau~_12 = 0.
    Returned in stress DOF order (s11, s12, s22).
    """
    n1, n2 = pair.u1.shape
    c1 = np.asarray(v1, dtype=float).reshape(n2, n1).T
    kv_s11, t11 = antiderivative(pair.u1.kvs[0], c1)
    m1, m2 = pair.u2.shape
    c2 = np.asarray(v2, dtype=float).reshape(m2, m1)
    kv_s22, t22 = antiderivative(pair.u2.kvs[1], c2)
    if kv_s11 != pair.s11.kvs[0] or kv_s22 != pair.s22.kvs[1]:
        raise SpaceParameterError("antiderivative spaces do not match the symmetric stress spaces")
    return np.concatenate((t11.T.ravel(), np.zeros(pair.s12.dim), t22.ravel()))


def parametric_fields(pair: StrongSpacePair, stress_coef, z1, z2):
    """Parametric symmetric field S~ (N, 2, 2) and its divergence (N, 2) on a grid z1 x z2."""
    offs = pair.stress_offsets
    c = {f: np.asarray(stress_coef, dtype=float)[offs[f]:offs[f] + pair.family(f).dim] for f in FAMILIES}
    s11 = pair.s11.grid_matrix(z1, z2) @ c["s11"]
    s12 = pair.s12.grid_matrix(z1, z2) @ c["s12"]
    s22 = pair.s22.grid_matrix(z1, z2) @ c["s22"]
    field = np.stack((np.stack((s11, s12), -1), np.stack((s12, s22), -1)), axis=1)
    div = np.stack((
        pair.s11.grid_matrix(z1, z2, d1=1) @ c["s11"] + pair.s12.grid_matrix(z1, z2, d2=1) @ c["s12"],
        pair.s12.grid_matrix(z1, z2, d1=1) @ c["s12"] + pair.s22.grid_matrix(z1, z2, d2=1) @ c["s22"],
    ), axis=-1)
    return field, div


def parametric_displacement(pair: StrongSpacePair, v1, v2, z1, z2) -> np.ndarray:
    return np.stack((pair.u1.grid_matrix(z1, z2) @ np.asarray(v1, dtype=float),
                     pair.u2.grid_matrix(z1, z2) @ np.asarray(v2, dtype=float)), axis=-1)


# ==========================================
# ASSEMBLY
# ==========================================

def _variant_for(boundary: BoundarySpec) -> str:
    traction = {edge for _, edge in boundary.traction_edges()}
    if not traction:
        return DIRICHLET_VARIANT
    if traction == {Edge.WEST}:
        if not boundary.homogeneous_traction:
            raise BoundaryLayoutError("strong symmetry supports only zero traction on the west edge")
        logger.warning("⚠️ strong symmetry with a traction-free west edge is experimental")
        return WEST_TRACTION_VARIANT
    raise BoundaryLayoutError(
        f"strong symmetry needs pure displacement data or a traction-free west edge (got {sorted(traction)})"
    )


def _stress_matrices(coll: StrongCollocation, columns: np.ndarray):
    return tuple(m[:, columns] for m in coll.stress), tuple(m[:, columns] for m in coll.divergence)


def assemble_strong_symmetry(pair: StrongSpacePair, topo: MultiPatchTopology, material: IsotropicMaterial,
                             boundary: BoundarySpec, load: Optional[Callable] = None,
                             npts: int = None) -> BlockSaddleSystem:
    if topo.npatches != 1:
        raise ConformityError("strong symmetry is assembled on single-patch geometries only")
    boundary.validate(topo)
    variant = _variant_for(boundary)
    gmap = topo.patches[0]
    npts = npts or pair.p + 2
    bp1, bp2 = pair.breakpoints
    ctx = TransformContext(gmap, (bp1, bp2), npts)
    columns = pair.stress_columns(variant)

    rule = TensorRule(bp1, bp2, npts)
    coll = StrongCollocation(pair, ctx, rule.z1, rule.z2, grid=True, variant=variant)
    w = rule.weights * coll.geo.detJ
    W = _diag(w)
    (sxx, sxy, syy), (dx, dy) = _stress_matrices(coll, columns)
    ux, uy = coll.displacement

    trace = sxx + syy
    A = (sxx.T @ W @ sxx + 2.0 * (sxy.T @ W @ sxy) + syy.T @ W @ syy
         - material.kappa * (trace.T @ W @ trace)) / (2.0 * material.mu)
    B = ux.T @ W @ dx + uy.T @ W @ dy

    g = np.zeros(columns.size)
    for _, edge in boundary.dirichlet_edges():
        s, ws = element_rule(bp2 if edge.axis == 0 else bp1, npts)
        fixed = np.array([float(edge.side)])
        z1, z2 = (fixed, s) if edge.axis == 0 else (s, fixed)
        ecoll = StrongCollocation(pair, ctx, z1, z2, grid=True, variant=variant)
        (exx, exy, eyy), _ = _stress_matrices(ecoll, columns)
        # n ds = adj(J)^T n^ ds^
        nds = edge.outward_sign * ecoll.geo.Jt[:, edge.axis, :]
        uD = boundary.displacement_at(ecoll.geo.x)
        tx = _diag(nds[:, 0]) @ exx + _diag(nds[:, 1]) @ exy
        ty = _diag(nds[:, 0]) @ exy + _diag(nds[:, 1]) @ eyy
        g += tx.T @ (ws * uD[:, 0]) + ty.T @ (ws * uD[:, 1])

    f_rhs = np.zeros(pair.displacement_dim)
    if load is not None:
        f = np.asarray(load(coll.geo.x), dtype=float)
        f_rhs = ux.T @ (w * f[:, 0]) + uy.T @ (w * f[:, 1])

    K = sp.bmat([[A, B.T], [B, None]], format="csr")
    logger.debug(f"strong symmetry ({variant}): {columns.size} stress + {pair.displacement_dim} displacement DOFs")
    return BlockSaddleSystem(
        field_names=FIELDS,
        field_sizes=(columns.size, pair.displacement_dim),
        matrix=K,
        rhs=np.concatenate((g, f_rhs)),
        meta={"pair": pair, "context": ctx, "variant": variant, "columns": columns},
    )


def full_stress_coefficients(system: BlockSaddleSystem, z: np.ndarray) -> np.ndarray:
    pair: StrongSpacePair = system.meta["pair"]
    full = np.zeros(pair.stress_dim)
    full[system.meta["columns"]] = system.split(z)["stress"]
    return full


def evaluate_strong_fields(system: BlockSaddleSystem, z: np.ndarray, z1, z2) -> Dict[str, np.ndarray]:
    """Physical sigma (N,2,2), div sigma (N,2) and u (N,2) on the grid z1 x z2."""
    pair: StrongSpacePair = system.meta["pair"]
    coll = StrongCollocation(pair, system.meta["context"], z1, z2, grid=True, variant=system.meta["variant"])
    cs = full_stress_coefficients(system, z)
    cu = system.split(z)["displacement"]
    sxx, sxy, syy = (m @ cs for m in coll.stress)
    sigma = np.stack((np.stack((sxx, sxy), -1), np.stack((sxy, syy), -1)), axis=1)
    div = np.stack([m @ cs for m in coll.divergence], axis=-1)
    u = np.stack([m @ cu for m in coll.displacement], axis=-1)
    return {"x": coll.geo.x, "sigma": sigma, "div_sigma": div, "u": u, "detJ": coll.geo.detJ}
