"""
Triplet accumulation for block-structured sparse matrices.
"""
from __future__ import annotations

import threading
from typing import Dict, Sequence, Tuple

import numpy as np
import scipy.sparse as sp


class SparseTripletBuffer:
    """
    Collects (row, col, value) triplets per block; duplicates are summed on finalize.

    Insertion is safe from several threads: each call appends whole arrays under a
    lock, and summation is order independent.
    """

    def __init__(self, row_sizes: Sequence[int], col_sizes: Sequence[int] = None):
        self.row_sizes = list(row_sizes)
        self.col_sizes = list(col_sizes) if col_sizes is not None else list(row_sizes)
        self.row_offsets = np.concatenate(([0], np.cumsum(self.row_sizes))).astype(int)
        self.col_offsets = np.concatenate(([0], np.cumsum(self.col_sizes))).astype(int)
        self._rows, self._cols, self._vals = [], [], []
        self._lock = threading.Lock()

    @property
    def shape(self) -> Tuple[int, int]:
        return int(self.row_offsets[-1]), int(self.col_offsets[-1])

    def add(self, rows, cols, values, block: Tuple[int, int] = (0, 0)) -> None:
        bi, bj = block
        rows = np.asarray(rows, dtype=int).ravel() + self.row_offsets[bi]
        cols = np.asarray(cols, dtype=int).ravel() + self.col_offsets[bj]
        values = np.asarray(values, dtype=float).ravel()
        with self._lock:
            self._rows.append(rows)
            self._cols.append(cols)
            self._vals.append(values)

    def add_matrix(self, matrix, block: Tuple[int, int] = (0, 0), transpose_into: Tuple[int, int] = None) -> None:
        """Add a sparse block; optionally also its transpose at the mirrored block."""
        coo = sp.coo_matrix(matrix)
        self.add(coo.row, coo.col, coo.data, block)
        if transpose_into is not None:
            self.add(coo.col, coo.row, coo.data, transpose_into)

    def finalize(self, check_symmetric: bool = False, tol: float = 1e-12) -> sp.csr_matrix:
        with self._lock:
            if self._rows:
                rows = np.concatenate(self._rows)
                cols = np.concatenate(self._cols)
                vals = np.concatenate(self._vals)
            else:
                rows = cols = np.zeros(0, dtype=int)
                vals = np.zeros(0)
        mat = sp.coo_matrix((vals, (rows, cols)), shape=self.shape).tocsr()
        mat.sum_duplicates()
        mat.sort_indices()
        if check_symmetric:
            asym = abs(mat - mat.T).max() if mat.nnz else 0.0
            scale = abs(mat).max() if mat.nnz else 1.0
            if asym > tol * max(scale, 1.0):
                raise ValueError(f"matrix flagged symmetric has asymmetry {asym:.3e}")
        return mat


def block_offsets(sizes: Sequence[int]) -> Dict[int, slice]:
    offsets = np.concatenate(([0], np.cumsum(sizes))).astype(int)
    return {k: slice(int(offsets[k]), int(offsets[k + 1])) for k in range(len(sizes))}
