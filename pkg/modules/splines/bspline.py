"""
B-spline spaces on [0,1] and their tensor products.
===================================================

Everything downstream (geometry, de Rham spaces, projectors, the strong-symmetry
transforms) is built from three primitives defined here:

  * ``KnotVector``          p-open knot vector with uniform interior multiplicity p - r
  * ``eval_basis*``         Cox-de Boor values / derivatives of the p+1 active splines
  * ``TensorSplineSpace``   S^{r1,r2}_{p1,p2} with the index convention i = i1 + n1 * i2

Evaluation at an interior knot is right-continuous; at zeta = 1 the left limit is
used so the last basis function equals one there.
"""
from __future__ import annotations

from enum import IntEnum
from typing import Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from modules.core.exceptions import KnotVectorError, SpaceParameterError


class Edge(IntEnum):
    """Edges of the parametric square. ``axis`` is the coordinate held fixed."""
    WEST = 0    # zeta1 = 0
    EAST = 1    # zeta1 = 1
    SOUTH = 2   # zeta2 = 0
    NORTH = 3   # zeta2 = 1

    @property
    def axis(self) -> int:
        return 0 if self in (Edge.WEST, Edge.EAST) else 1

    @property
    def side(self) -> int:
        return 1 if self in (Edge.EAST, Edge.NORTH) else 0

    @property
    def outward_sign(self) -> float:
        return 1.0 if self.side == 1 else -1.0

    def point(self, s):
        """Parametric points of the edge for edge parameter(s) s."""
        s = np.asarray(s, dtype=float)
        fixed = np.full_like(s, float(self.side))
        return (fixed, s) if self.axis == 0 else (s, fixed)

    @classmethod
    def parse(cls, value) -> "Edge":
        if isinstance(value, Edge):
            return value
        if isinstance(value, str):
            return cls[value.upper()]
        return cls(int(value))


# ==========================================
# KNOT VECTORS
# ==========================================

class KnotVector:
    """
    A p-open knot vector on [0,1].

    Attributes:
        p (int): spline degree
        knots (ndarray): read-only nondecreasing knot sequence
        r (int): regularity implied by the (uniform) interior multiplicity
    """

    def __init__(self, p: int, knots: Sequence[float], r: int = None):
        knots = np.array(knots, dtype=float)
        if p < 0:
            raise KnotVectorError(f"degree must be >= 0, got {p}")
        if knots.ndim != 1 or knots.size < 2 * (p + 1):
            raise KnotVectorError(f"need at least {2 * (p + 1)} knots for degree {p}")
        if np.any(np.diff(knots) < 0):
            raise KnotVectorError("knots must be nondecreasing")
        if np.any(knots[:p + 1] != 0.0) or np.any(knots[-(p + 1):] != 1.0):
            raise KnotVectorError("knot vector is not p-open on [0,1]")
        interior = knots[p + 1:knots.size - p - 1]
        if interior.size:
            _, counts = np.unique(interior, return_counts=True)
            if counts.max() > p + 1:
                raise KnotVectorError("interior multiplicity exceeds p+1")
            implied = p - int(counts.max())
        else:
            implied = p - 1
        self.p = int(p)
        self.r = implied if r is None else int(r)
        knots.setflags(write=False)
        self.knots = knots
        self._breakpoints = np.unique(knots)
        self._breakpoints.setflags(write=False)

    def __repr__(self):
        return f"KnotVector(p={self.p}, r={self.r}, n={self.n}, spans={self.nspans})"

    def __eq__(self, other):
        return (
            isinstance(other, KnotVector)
            and self.p == other.p
            and self.knots.shape == other.knots.shape
            and bool(np.all(self.knots == other.knots))
        )

    def __hash__(self):
        return hash((self.p, self.knots.tobytes()))

    @property
    def n(self) -> int:
        """Number of basis functions."""
        return self.knots.size - self.p - 1

    @property
    def breakpoints(self) -> np.ndarray:
        return self._breakpoints

    @property
    def nspans(self) -> int:
        return self._breakpoints.size - 1

    def support(self, i: int) -> Tuple[float, float]:
        return float(self.knots[i]), float(self.knots[i + self.p + 1])

    def find_spans(self, x) -> np.ndarray:
        """Knot-span index mu with knots[mu] <= x < knots[mu+1] (left limit at x = 1)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x < 0.0) or np.any(x > 1.0):
            raise KnotVectorError("evaluation point outside [0,1]")
        spans = np.searchsorted(self.knots, x, side="right") - 1
        return np.clip(spans, self.p, self.n - 1)

    def raised(self) -> "KnotVector":
        """Knot vector of S^{r+1}_{p+1} on the same breakpoints."""
        return KnotVector(self.p + 1, np.concatenate(([0.0], self.knots, [1.0])), self.r + 1)

    def lowered(self) -> "KnotVector":
        """Knot vector of S^{r-1}_{p-1} on the same breakpoints."""
        if self.p == 0:
            raise SpaceParameterError("cannot lower a degree-0 knot vector")
        return KnotVector(self.p - 1, self.knots[1:-1], self.r - 1)


def make_open_knots(p: int, breakpoints: Sequence[float], r: int) -> KnotVector:
    """Open knot vector with every interior breakpoint repeated p - r times."""
    bp = np.asarray(breakpoints, dtype=float)
    if bp.ndim != 1 or bp.size < 2:
        raise KnotVectorError("need at least the breakpoints 0 and 1")
    if np.any(np.diff(bp) <= 0):
        raise KnotVectorError("breakpoints must be strictly increasing")
    if bp[0] != 0.0 or bp[-1] != 1.0:
        raise KnotVectorError("breakpoints must start at 0 and end at 1")
    if p < 0 or r < -1 or r >= p:
        raise KnotVectorError(f"invalid degree/regularity pair (p={p}, r={r})")
    mult = p - r
    knots = np.concatenate((
        np.zeros(p + 1),
        np.repeat(bp[1:-1], mult),
        np.ones(p + 1),
    ))
    return KnotVector(p, knots, r)


def uniform_breakpoints(n: int) -> np.ndarray:
    """Breakpoints i/n of the uniform mesh with n elements."""
    if n < 1:
        raise KnotVectorError(f"number of elements must be >= 1, got {n}")
    return np.arange(n + 1, dtype=float) / n


# ==========================================
# COX-DE BOOR EVALUATION
# ==========================================

def _basis_ders(kv: KnotVector, spans: np.ndarray, x: np.ndarray, nder: int) -> np.ndarray:
    """
    Derivatives 0..nder of the p+1 active splines at every point, vectorized over x.

    Returns array (nder+1, p+1, N). The triangular table holds the degree 0..p values
    of the recursion; derivatives follow from the lower-degree two-term formula.
    """
    p, U = kv.p, kv.knots
    N = x.shape[0]
    ndu = np.zeros((p + 1, p + 1, N))
    ndu[0, 0] = 1.0
    left = np.zeros((p + 1, N))
    right = np.zeros((p + 1, N))
    for j in range(1, p + 1):
        left[j] = x - U[spans + 1 - j]
        right[j] = U[spans + j] - x
        saved = np.zeros(N)
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    ders = np.zeros((nder + 1, p + 1, N))
    ders[0] = ndu[:, p]
    top = min(nder, p)
    a = np.zeros((2, p + 1, N))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[:] = 0.0
        a[0, 0] = 1.0
        for k in range(1, top + 1):
            d = np.zeros(N)
            rk, pk = r - k, p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d = d + a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d = d + a[s2, k] * ndu[r, pk]
            ders[k, r] = d
            s1, s2 = s2, s1
    fac = float(p)
    for k in range(1, top + 1):
        ders[k] *= fac
        fac *= (p - k)
    return ders


def eval_basis(kv: KnotVector, zeta: float) -> Tuple[int, np.ndarray]:
    """First active index and the p+1 values of the splines supported at zeta."""
    span = kv.find_spans(zeta)
    vals = _basis_ders(kv, span, np.atleast_1d(float(zeta)), 0)[0, :, 0]
    return int(span[0]) - kv.p, vals


def eval_basis_derivative(kv: KnotVector, zeta: float, order: int) -> Tuple[int, np.ndarray]:
    """
    Derivative of the given order of the active splines. Orders above p return
    zeros (polynomial degree exhausted).
    """
    if order < 0:
        raise KnotVectorError("derivative order must be >= 0")
    span = kv.find_spans(zeta)
    if order > kv.p:
        return int(span[0]) - kv.p, np.zeros(kv.p + 1)
    vals = _basis_ders(kv, span, np.atleast_1d(float(zeta)), order)[order, :, 0]
    return int(span[0]) - kv.p, vals


def basis_matrix(kv: KnotVector, x, order: int = 0, sparse: bool = False):
    """
    Collocation matrix M[q, i] = d^order B_i(x_q), dense (N, n) or CSR.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    spans = kv.find_spans(x)
    N, p = x.shape[0], kv.p
    if order > p:
        vals = np.zeros((p + 1, N))
    else:
        vals = _basis_ders(kv, spans, x, order)[order]
    rows = np.repeat(np.arange(N), p + 1)
    cols = (spans[:, None] - p + np.arange(p + 1)[None, :]).ravel()
    data = vals.T.ravel()
    mat = sp.csr_matrix((data, (rows, cols)), shape=(N, kv.n))
    return mat if sparse else mat.toarray()


def antiderivative_matrix(kv: KnotVector, x) -> np.ndarray:
    """Dense (N, n) matrix of the values int_0^x B_i(t) dt."""
    raised = kv.raised()
    braised = basis_matrix(raised, x)
    # tail[:, j] = sum_{l >= j} B'_l
    tail = np.cumsum(braised[:, ::-1], axis=1)[:, ::-1]
    scale = (kv.knots[kv.p + 1:kv.p + 1 + kv.n] - kv.knots[:kv.n]) / (kv.p + 1)
    return tail[:, 1:] * scale[None, :]


def antiderivative(kv: KnotVector, coefficients) -> Tuple[KnotVector, np.ndarray]:
    """
    Coefficients of zeta -> int_0^zeta s in S^{r+1}_{p+1} on the same breakpoints.
    """
    c = np.asarray(coefficients, dtype=float)
    if c.shape[0] != kv.n:
        raise SpaceParameterError(f"expected {kv.n} coefficients, got {c.shape[0]}")
    scale = (kv.knots[kv.p + 1:kv.p + 1 + kv.n] - kv.knots[:kv.n]) / (kv.p + 1)
    d = np.zeros((kv.n + 1,) + c.shape[1:])
    d[1:] = np.cumsum(c * scale.reshape((-1,) + (1,) * (c.ndim - 1)), axis=0)
    return kv.raised(), d


def derivative(kv: KnotVector, coefficients) -> Tuple[KnotVector, np.ndarray]:
    """Coefficients of s' in S^{r-1}_{p-1}."""
    c = np.asarray(coefficients, dtype=float)
    lowered = kv.lowered()
    p = kv.p
    denom = kv.knots[p + 1:p + kv.n] - kv.knots[1:kv.n]
    scale = p / denom
    dc = (c[1:] - c[:-1]) * scale.reshape((-1,) + (1,) * (c.ndim - 1))
    return lowered, dc


def evaluate_spline(kv: KnotVector, coefficients, x, order: int = 0) -> np.ndarray:
    return basis_matrix(kv, x, order, sparse=True) @ np.asarray(coefficients, dtype=float)


# ==========================================
# TENSOR-PRODUCT SPACES
# ==========================================

class TensorSplineSpace:
    """
    S^{r1,r2}_{p1,p2}: products B_{i1}(zeta1) B_{i2}(zeta2), flattened as i1 + n1 * i2.
    """

    def __init__(self, kvs: Sequence[KnotVector]):
        if len(kvs) != 2:
            raise SpaceParameterError("only planar tensor spaces are supported")
        self.kvs = tuple(kvs)

    def __repr__(self):
        (a, b) = self.kvs
        return f"S^({a.r},{b.r})_({a.p},{b.p}) [{a.n}x{b.n}]"

    def __eq__(self, other):
        return isinstance(other, TensorSplineSpace) and self.kvs == other.kvs

    def __hash__(self):
        return hash(self.kvs)

    @classmethod
    def uniform(cls, degrees, regularities, n_elements) -> "TensorSplineSpace":
        if np.isscalar(n_elements):
            n_elements = (n_elements, n_elements)
        return cls([
            make_open_knots(p, uniform_breakpoints(n), r)
            for p, r, n in zip(degrees, regularities, n_elements)
        ])

    @property
    def degrees(self) -> Tuple[int, int]:
        return tuple(kv.p for kv in self.kvs)

    @property
    def regularities(self) -> Tuple[int, int]:
        return tuple(kv.r for kv in self.kvs)

    @property
    def shape(self) -> Tuple[int, int]:
        return tuple(kv.n for kv in self.kvs)

    @property
    def dim(self) -> int:
        n1, n2 = self.shape
        return n1 * n2

    def index(self, i1, i2):
        return np.asarray(i1) + self.kvs[0].n * np.asarray(i2)

    def multi_index(self, i):
        return np.asarray(i) % self.kvs[0].n, np.asarray(i) // self.kvs[0].n

    def boundary_dofs(self, edge: Edge) -> np.ndarray:
        """Basis functions with nonzero trace on the edge, ordered along the edge."""
        edge = Edge.parse(edge)
        n1, n2 = self.shape
        if edge.axis == 0:
            i1 = 0 if edge.side == 0 else n1 - 1
            return self.index(np.full(n2, i1), np.arange(n2))
        i2 = 0 if edge.side == 0 else n2 - 1
        return self.index(np.arange(n1), np.full(n1, i2))

    def trace_knots(self, edge: Edge) -> KnotVector:
        """Knot vector of the trace space along the edge."""
        return self.kvs[1 - Edge.parse(edge).axis]

    def grid_matrix(self, z1, z2, d1: int = 0, d2: int = 0):
        """
        Sparse (len(z1)*len(z2), dim) matrix of d1/d2 partial derivatives on the tensor
        grid z1 x z2, point order q = q1 + len(z1) * q2.
        """
        b1 = basis_matrix(self.kvs[0], z1, d1, sparse=True)
        b2 = basis_matrix(self.kvs[1], z2, d2, sparse=True)
        return sp.kron(b2, b1, format="csr")

    def point_values(self, coefficients, z1, z2, d1: int = 0, d2: int = 0) -> np.ndarray:
        """Values of sum_i c_i B_i at scattered points (z1[k], z2[k])."""
        z1 = np.atleast_1d(np.asarray(z1, dtype=float))
        z2 = np.atleast_1d(np.asarray(z2, dtype=float))
        c = np.asarray(coefficients, dtype=float).reshape(self.shape[::-1] + np.shape(coefficients)[1:])
        b1 = basis_matrix(self.kvs[0], z1, d1)
        b2 = basis_matrix(self.kvs[1], z2, d2)
        # c indexed [i2, i1, ...]
        return np.einsum("ka,kb,ba...->k...", b1, b2, c)


def derived_space(space: TensorSplineSpace, degree_shift, regularity_shift) -> TensorSplineSpace:
    """Same breakpoints, shifted degree and regularity per direction."""
    kvs = []
    for kv, dp, dr in zip(space.kvs, degree_shift, regularity_shift):
        p_new, r_new = kv.p + dp, kv.r + dr
        if p_new < 0 or r_new < -1 or r_new > p_new - 1:
            raise SpaceParameterError(f"invalid derived pair (p={p_new}, r={r_new})")
        kvs.append(make_open_knots(p_new, kv.breakpoints, r_new))
    return TensorSplineSpace(kvs)


class ParametricMesh:
    """Elements of the parametric square induced by per-direction breakpoints."""

    def __init__(self, breakpoints1, breakpoints2):
        self.breakpoints = (np.asarray(breakpoints1, dtype=float), np.asarray(breakpoints2, dtype=float))

    @classmethod
    def of(cls, space: TensorSplineSpace) -> "ParametricMesh":
        return cls(space.kvs[0].breakpoints, space.kvs[1].breakpoints)

    @property
    def shape(self) -> Tuple[int, int]:
        return tuple(b.size - 1 for b in self.breakpoints)

    @property
    def h(self) -> float:
        """Largest element edge length (1/n on uniform meshes)."""
        return float(max(np.diff(b).max() for b in self.breakpoints))

    @property
    def diameter(self) -> float:
        d1 = np.diff(self.breakpoints[0])
        d2 = np.diff(self.breakpoints[1])
        return float(np.sqrt(d1.max() ** 2 + d2.max() ** 2))

    def elements(self):
        """Element boxes ((a1, b1), (a2, b2)), zeta1 running fastest."""
        b1, b2 = self.breakpoints
        return [
            ((b1[i], b1[i + 1]), (b2[j], b2[j + 1]))
            for j in range(b2.size - 1)
            for i in range(b1.size - 1)
        ]
