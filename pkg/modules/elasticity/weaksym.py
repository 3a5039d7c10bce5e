"""
Mixed elasticity with weakly imposed stress symmetry.
=====================================================

Find (sigma_h, u_h, p_h) in (V2 x V2) x (V3 x V3) x Skew(W) with

    <A sigma, tau> + <u, div tau> + <p, tau> = <tau n, u_D>_{Gamma_D}
    <div sigma, v>                           = <f, v>
    <sigma, q>                               = 0

Per patch the five couplings are assembled from collocation matrices on the
Gauss grid; patches are glued through signed DOF identifications (normal stress
traces, C0 multiplier), and traction edges drop the normal-trace stress DOFs after
subtracting a lift of the (projected) traction data.
"""
from __future__ import annotations

import concurrent.futures
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from modules.core import config
from modules.core.exceptions import ConformityError
from modules.elasticity.boundary import BoundarySpec
from modules.elasticity.material import IsotropicMaterial
from modules.geometry.maps import GeometryMap
from modules.geometry.multipatch import DofMap, MultiPatchTopology, edge_pairs
from modules.solve.solver import BlockSaddleSystem
from modules.solve.sparse import SparseTripletBuffer
from modules.spaces.derham import GridCollocation, WeakSymSpaces
from modules.spaces.projection import check_traction_edges, project_boundary_traction
from modules.splines.bspline import Edge
from modules.splines.quadrature import TensorRule, element_rule

logger = logging.getLogger(__name__)

FIELDS = ("stress", "displacement", "multiplier")


@dataclass
class LocalSystem:
    """Uncoupled saddle-point system of one patch, local DOF order (stress, u, p)."""
    patch: int
    A: sp.csr_matrix
    B_div: sp.csr_matrix
    B_skew: sp.csr_matrix
    rhs_stress: np.ndarray
    rhs_load: np.ndarray

    @property
    def sizes(self):
        return self.A.shape[0], self.B_div.shape[0], self.B_skew.shape[0]

    def matrix(self) -> sp.csr_matrix:
        return sp.bmat([
            [self.A, self.B_div.T, self.B_skew.T],
            [self.B_div, None, None],
            [self.B_skew, None, None],
        ], format="csr")

    def rhs(self) -> np.ndarray:
        return np.concatenate((self.rhs_stress, self.rhs_load, np.zeros(self.B_skew.shape[0])))


def exact_multiplier_from_u(grad_u) -> np.ndarray:
    """
    Scalar q of the multiplier Skew(q) = [[0, -q], [q, 0]] belonging to u:
    p = skew(grad u), i.e. q = (d_x u_y - d_y u_x) / 2. grad_u[..., i, j] = d_j u_i.
    """
    g = np.asarray(grad_u, dtype=float)
    return 0.5 * (g[..., 1, 0] - g[..., 0, 1])


def skew_matrix(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    out = np.zeros(q.shape + (2, 2))
    out[..., 0, 1] = -q
    out[..., 1, 0] = q
    return out


# ==========================================
# PATCH ASSEMBLY
# ==========================================

def _edge_collocation(space, edge: Edge, s: np.ndarray) -> sp.csr_matrix:
    z1, z2 = edge.point(s)
    if edge.axis == 0:
        return space.grid_matrix(z1[:1], s)
    return space.grid_matrix(s, z2[:1])


def assemble_patch(spaces: WeakSymSpaces, gmap: GeometryMap, patch: int, material: IsotropicMaterial,
                   dirichlet_edges: Sequence[Edge], displacement: Callable, load: Optional[Callable],
                   npts: int = None) -> LocalSystem:
    derham = spaces.derham
    npts = npts or derham.p + 1
    rule = TensorRule(derham.v1.kvs[0].breakpoints, derham.v1.kvs[1].breakpoints, npts)
    coll = GridCollocation.on_rule(derham, gmap, rule)
    w = coll.physical_weights(rule.weights)
    W = sp.diags(w)

    (vx, vy), div = coll.v2
    comps = (vx, vy)
    U = coll.v3
    Q, _ = coll.pressure
    inv2mu = 1.0 / (2.0 * material.mu)
    kappa = material.kappa

    gram = [[(comps[a].T @ W @ comps[b]).tocsr() for b in range(2)] for a in range(2)]
    trace_free = gram[0][0] + gram[1][1]
    A = inv2mu * sp.bmat([
        [trace_free - kappa * gram[0][0], -kappa * gram[0][1]],
        [-kappa * gram[1][0], trace_free - kappa * gram[1][1]],
    ], format="csr")

    div_block = (U.T @ W @ div).tocsr()
    B_div = sp.block_diag([div_block, div_block], format="csr")
    # Skew(q) : tau = q (tau_10 - tau_01)
    B_skew = sp.hstack([-(Q.T @ W @ vy), Q.T @ W @ vx], format="csr")

    v2_dim = derham.v2_dim
    rhs_stress = np.zeros(2 * v2_dim)
    for edge in dirichlet_edges:
        c = edge.axis
        kv = derham.v2[c].trace_knots(edge)
        s, ws = element_rule(kv.breakpoints, npts)
        x = gmap(*edge.point(s))
        uD = displacement(x)
        Bedge = _edge_collocation(derham.v2[c], edge, s)
        for k in range(2):
            start = k * v2_dim + derham.v2_offset(c)
            rhs_stress[start:start + derham.v2[c].dim] += edge.outward_sign * (Bedge.T @ (ws * uD[:, k]))

    nU = derham.v3.dim
    rhs_load = np.zeros(2 * nU)
    if load is not None:
        f = np.asarray(load(coll.bundle.x), dtype=float)
        for k in range(2):
            rhs_load[k * nU:(k + 1) * nU] = U.T @ (w * f[:, k])

    return LocalSystem(patch, A, B_div, B_skew, rhs_stress, rhs_load)


# ==========================================
# COUPLING AND CONSTRAINTS
# ==========================================

def _dof_maps(spaces: WeakSymSpaces, topo: MultiPatchTopology, dropped: Dict[int, np.ndarray]):
    npatch = topo.npatches
    v2_dim = spaces.derham.v2_dim
    stress_pairs, mult_pairs = [], []
    for iface in topo.interfaces:
        sign = -iface.edge_a.outward_sign * iface.edge_b.outward_sign
        da = spaces.derham.v2_normal_dofs(iface.edge_a)
        db = spaces.derham.v2_normal_dofs(iface.edge_b)
        for k in range(2):
            stress_pairs += edge_pairs(iface, da + k * v2_dim, db + k * v2_dim, sign)
        mult_pairs += edge_pairs(iface, spaces.multiplier_edge_dofs(iface.edge_a),
                                 spaces.multiplier_edge_dofs(iface.edge_b), 1.0)
    stress = DofMap([spaces.stress_dim] * npatch, stress_pairs, dropped)
    disp = DofMap([spaces.displacement_dim] * npatch)
    mult = DofMap([spaces.multiplier_dim] * npatch, mult_pairs)
    return stress, disp, mult


def couple_multipatch(local: List[LocalSystem], topo: MultiPatchTopology, spaces: WeakSymSpaces,
                      dropped: Dict[int, np.ndarray] = None,
                      lifts: Dict[int, np.ndarray] = None) -> BlockSaddleSystem:
    """
    Global system sum_p P_p^T K_p P_p with right-hand side sum_p P_p^T (b_p - K_p z_p),
    where z_p carries the values of eliminated (dropped) stress DOFs.
    """
    if len(local) != topo.npatches:
        raise ConformityError(f"{len(local)} patch systems for {topo.npatches} patches")
    dropped = dropped or {}
    lifts = lifts or {}
    stress, disp, mult = _dof_maps(spaces, topo, dropped)
    sizes = (stress.size, disp.size, mult.size)

    buffer = SparseTripletBuffer([sum(sizes)])
    rhs = np.zeros(sum(sizes))
    prolongations, local_lifts = [], []
    for ls in local:
        P = sp.block_diag([
            stress.prolongation(ls.patch), disp.prolongation(ls.patch), mult.prolongation(ls.patch),
        ], format="csr")
        Kp = ls.matrix()
        z = np.zeros(Kp.shape[0])
        if ls.patch in lifts:
            z[:spaces.stress_dim] = lifts[ls.patch]
        buffer.add_matrix(P.T @ Kp @ P)
        rhs += P.T @ (ls.rhs() - Kp @ z)
        prolongations.append(P)
        local_lifts.append(z)

    n_if = len(topo.interfaces)
    logger.debug(f"coupled {len(local)} patch(es), {n_if} interface(s): sizes {sizes}")
    return BlockSaddleSystem(
        field_names=FIELDS,
        field_sizes=sizes,
        matrix=buffer.finalize(check_symmetric=True),
        rhs=rhs,
        prolongations=prolongations,
        lifts=local_lifts,
        meta={"local": local, "topology": topo, "spaces": spaces},
    )


def traction_lift(spaces: WeakSymSpaces, topo: MultiPatchTopology, boundary: BoundarySpec):
    """Eliminated stress DOFs and their lift values per patch."""
    check_traction_edges(boundary.traction_edges(), topo.boundary)
    dropped: Dict[int, List[np.ndarray]] = {}
    lifts: Dict[int, np.ndarray] = {}
    for patch, edge in boundary.traction_edges():
        dofs = spaces.stress_normal_dofs(edge)
        dropped.setdefault(patch, []).append(dofs)
        if boundary.homogeneous_traction:
            continue
        comp = edge.axis
        trace_kv = spaces.derham.v2[comp].trace_knots(edge)
        coef = project_boundary_traction(topo.patches[patch], edge, trace_kv, boundary.traction_at)
        z = lifts.setdefault(patch, np.zeros(spaces.stress_dim))
        n_edge = dofs.size // 2
        z[dofs[:n_edge]] = coef[0]
        z[dofs[n_edge:]] = coef[1]
    return {p: np.concatenate(d) for p, d in dropped.items()}, lifts


def constrain_traction(system: BlockSaddleSystem, boundary: BoundarySpec) -> BlockSaddleSystem:
    """
    Eliminate normal-trace stress DOFs on the traction edges. Nonhomogeneous data is
    moved to the right-hand side through the projected lift.
    """
    topo: MultiPatchTopology = system.meta["topology"]
    spaces: WeakSymSpaces = system.meta["spaces"]
    boundary.validate(topo)
    if not boundary.traction_edges():
        return system
    dropped, lifts = traction_lift(spaces, topo, boundary)
    reduced = couple_multipatch(system.meta["local"], topo, spaces, dropped, lifts)
    logger.debug(f"traction constraints removed {system.size - reduced.size} stress DOF(s)")
    return reduced


def assemble_weak_symmetry(spaces: WeakSymSpaces, topo: MultiPatchTopology, material: IsotropicMaterial,
                           boundary: BoundarySpec, load: Optional[Callable] = None,
                           npts: int = None) -> BlockSaddleSystem:
    """Assemble every patch in parallel, glue across interfaces, apply traction constraints."""
    boundary.validate(topo)
    if topo.npatches > 1 and spaces.derham.r != 0:
        logger.warning(f"multi-patch coupling is only verified for r=0 (got r={spaces.derham.r}); "
                       f"interface continuity still holds through the shared edge DOFs")
    dirichlet = {}
    for patch, edge in boundary.dirichlet_edges():
        dirichlet.setdefault(patch, []).append(edge)

    def build(patch: int) -> LocalSystem:
        return assemble_patch(spaces, topo.patches[patch], patch, material, dirichlet.get(patch, []),
                              boundary.displacement_at, load, npts)

    workers = min(config.ASSEMBLY_THREADS, topo.npatches)
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
        local = list(executor.map(build, range(topo.npatches)))
    system = couple_multipatch(local, topo, spaces)
    return constrain_traction(system, boundary)


# ==========================================
# POST-PROCESSING HELPERS
# ==========================================

def stress_coefficients(system: BlockSaddleSystem, z: np.ndarray, patch: int, spaces: WeakSymSpaces):
    """Local (stress, displacement, multiplier) coefficient vectors of one patch."""
    loc = system.local_solution(z, patch)
    n_s, n_u, _ = spaces.field_sizes
    return loc[:n_s], loc[n_s:n_s + n_u], loc[n_s + n_u:]


def evaluate_fields(spaces: WeakSymSpaces, gmap: GeometryMap, coefficients, z1, z2) -> Dict[str, np.ndarray]:
    """
    Physical sigma (N,2,2), div sigma (N,2), u (N,2) and multiplier q (N,) on the
    tensor grid z1 x z2 of one patch.
    """
    c_s, c_u, c_p = coefficients
    coll = GridCollocation(spaces.derham, gmap, z1, z2)
    (vx, vy), div = coll.v2
    n2 = spaces.derham.v2_dim
    nU = spaces.derham.v3.dim
    sigma = np.empty((coll.npoints, 2, 2))
    divs = np.empty((coll.npoints, 2))
    for k in range(2):
        ck = c_s[k * n2:(k + 1) * n2]
        sigma[:, k, 0] = vx @ ck
        sigma[:, k, 1] = vy @ ck
        divs[:, k] = div @ ck
    u = np.column_stack([coll.v3 @ c_u[:nU], coll.v3 @ c_u[nU:]])
    q, _ = coll.pressure
    return {"x": coll.bundle.x, "sigma": sigma, "div_sigma": divs, "u": u, "q": q @ c_p,
            "detJ": coll.bundle.detJ}


def weak_symmetry_residual(system: BlockSaddleSystem, z: np.ndarray) -> float:
    """max |<sigma_h, Skew(q_i)>| over multiplier basis functions (third equation)."""
    K = system.matrix
    s = system.slices
    row = K[s["multiplier"], :]
    return float(np.abs(row @ z - system.rhs[s["multiplier"]]).max()) if row.shape[0] else 0.0
