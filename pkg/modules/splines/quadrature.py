"""
Gauss-Legendre rules on element grids and on partial segments [0, t].
"""
from __future__ import annotations

from functools import lru_cache
from typing import Tuple

import numpy as np
import scipy.sparse as sp


@lru_cache(maxsize=64)
def gauss_legendre(npts: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [0,1]."""
    x, w = np.polynomial.legendre.leggauss(npts)
    nodes = 0.5 * (x + 1.0)
    weights = 0.5 * w
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def element_rule(breakpoints, npts: int) -> Tuple[np.ndarray, np.ndarray]:
    """Composite rule with npts points on every element, points sorted."""
    bp = np.asarray(breakpoints, dtype=float)
    nodes, weights = gauss_legendre(npts)
    lengths = np.diff(bp)
    pts = (bp[:-1, None] + lengths[:, None] * nodes[None, :]).ravel()
    wts = (lengths[:, None] * weights[None, :]).ravel()
    return pts, wts


class TensorRule:
    """
    Tensor-product quadrature on the parametric square.

    Points are ordered q = q1 + n1 * q2 (zeta1 fastest), matching
    ``TensorSplineSpace.grid_matrix``.
    """

    def __init__(self, breakpoints1, breakpoints2, npts: int):
        self.npts = npts
        self.z1, self.w1 = element_rule(breakpoints1, npts)
        self.z2, self.w2 = element_rule(breakpoints2, npts)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.z1.size, self.z2.size

    @property
    def size(self) -> int:
        return self.z1.size * self.z2.size

    @property
    def points(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.tile(self.z1, self.z2.size), np.repeat(self.z2, self.z1.size)

    @property
    def weights(self) -> np.ndarray:
        return np.tile(self.w1, self.z2.size) * np.repeat(self.w2, self.z1.size)


def segment_rule(breakpoints, uppers, npts: int):
    """
    Composite Gauss rule for int_0^{t} g for every t in ``uppers``.

    Each knot span is intersected with [0, t]; a partial final span is mapped
    affinely. Returns the node array and a sparse (len(uppers), nnodes) weight
    matrix W so that W @ g(nodes) approximates the integrals.
    """
    bp = np.asarray(breakpoints, dtype=float)
    uppers = np.atleast_1d(np.asarray(uppers, dtype=float))
    gx, gw = gauss_legendre(npts)
    nodes, rows, cols, vals = [], [], [], []
    offset = 0
    for k, t in enumerate(uppers):
        if t <= 0.0:
            continue
        lo = bp[:-1][bp[:-1] < t]
        hi = np.minimum(bp[1:][:lo.size], t)
        lengths = hi - lo
        pts = (lo[:, None] + lengths[:, None] * gx[None, :]).ravel()
        wts = (lengths[:, None] * gw[None, :]).ravel()
        nodes.append(pts)
        rows.append(np.full(pts.size, k))
        cols.append(offset + np.arange(pts.size))
        vals.append(wts)
        offset += pts.size
    if not nodes:
        return np.zeros(0), sp.csr_matrix((uppers.size, 0))
    nodes = np.concatenate(nodes)
    weights = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(uppers.size, offset),
    )
    return nodes, weights
