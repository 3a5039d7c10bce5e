"""
Error norms of discrete solutions against manufactured ones, and convergence tables.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from modules.core import config
from modules.elasticity.strong_assembly import StrongSpacePair, evaluate_strong_fields
from modules.elasticity.weaksym import evaluate_fields, stress_coefficients
from modules.harness.cases import ManufacturedCase
from modules.solve.solver import BlockSaddleSystem
from modules.spaces.derham import GridCollocation, WeakSymSpaces
from modules.splines.quadrature import TensorRule

logger = logging.getLogger(__name__)

SQRT2 = np.sqrt(2.0)


# ==========================================
# DISCRETE SOLUTIONS
# ==========================================

class WeakSolution:
    """Solved weak-symmetry system, evaluated patch by patch."""

    formulation = "weak"

    def __init__(self, system: BlockSaddleSystem, z: np.ndarray):
        self.system = system
        self.z = z
        self.spaces: WeakSymSpaces = system.meta["spaces"]
        self.topology = system.meta["topology"]

    @property
    def degree(self) -> int:
        return self.spaces.derham.p

    @property
    def npatches(self) -> int:
        return self.topology.npatches

    def breakpoints(self, patch: int) -> Tuple[np.ndarray, np.ndarray]:
        kvs = self.spaces.derham.v1.kvs
        return kvs[0].breakpoints, kvs[1].breakpoints

    def fields(self, patch: int, z1, z2) -> Dict[str, np.ndarray]:
        coef = stress_coefficients(self.system, self.z, patch, self.spaces)
        return evaluate_fields(self.spaces, self.topology.patches[patch], coef, z1, z2)


class StrongSolution:
    """Solved strong-symmetry system on its single patch."""

    formulation = "strong"
    npatches = 1

    def __init__(self, system: BlockSaddleSystem, z: np.ndarray):
        self.system = system
        self.z = z
        self.pair: StrongSpacePair = system.meta["pair"]

    @property
    def degree(self) -> int:
        return self.pair.p

    def breakpoints(self, patch: int) -> Tuple[np.ndarray, np.ndarray]:
        return self.pair.breakpoints

    def fields(self, patch: int, z1, z2) -> Dict[str, np.ndarray]:
        return evaluate_strong_fields(self.system, self.z, z1, z2)


def error_points(solution, patch: int, npts: int = None) -> TensorRule:
    extra = 3 if solution.formulation == "strong" else 2
    bp1, bp2 = solution.breakpoints(patch)
    return TensorRule(bp1, bp2, npts or solution.degree + extra)


# ==========================================
# NORMS
# ==========================================

def compute_errors(case: ManufacturedCase, solution, npts: int = None) -> Dict[str, float]:
    """
    L2 errors of sigma, div sigma, u and the multiplier (matrix norm of Skew(q)),
    the H(div) stress error and the combined B-norm, by Gauss quadrature with
    p+2 (weak) or p+3 (strong) points per direction and element.
    """
    sums = {"sigma": 0.0, "div": 0.0, "u": 0.0, "p": 0.0, "asym": 0.0}
    has_multiplier = True
    for patch in range(solution.npatches):
        rule = error_points(solution, patch, npts)
        f = solution.fields(patch, rule.z1, rule.z2)
        x, w = f["x"], rule.weights * f["detJ"]
        sums["sigma"] += float(np.sum(w * np.sum((case.sigma(x) - f["sigma"]) ** 2, axis=(1, 2))))
        sums["div"] += float(np.sum(w * np.sum((case.div_sigma(x) - f["div_sigma"]) ** 2, axis=1)))
        sums["u"] += float(np.sum(w * np.sum((case.u(x) - f["u"]) ** 2, axis=1)))
        if "q" in f:
            sums["p"] += float(np.sum(w * 2.0 * (case.multiplier(x) - f["q"]) ** 2))
        else:
            has_multiplier = False
        sums["asym"] = max(sums["asym"], float(np.abs(f["sigma"][:, 0, 1] - f["sigma"][:, 1, 0]).max()))

    err = {
        "err_sigma_l2": np.sqrt(sums["sigma"]),
        "err_divsigma_l2": np.sqrt(sums["div"]),
        "err_u_l2": np.sqrt(sums["u"]),
        "err_p_l2": np.sqrt(sums["p"]) if has_multiplier else np.nan,
        "max_asymmetry": sums["asym"],
    }
    err["err_sigma_hdiv"] = float(np.hypot(err["err_sigma_l2"], err["err_divsigma_l2"]))
    b2 = err["err_sigma_hdiv"] ** 2 + err["err_u_l2"] ** 2 + (sums["p"] if has_multiplier else 0.0)
    err["err_b"] = float(np.sqrt(b2))
    return err


def multiplier_best_error(case: ManufacturedCase, solution: WeakSolution, npts: int = None) -> float:
    """
    Distance of the exact multiplier to its global L2 projection onto the
    (interface-coupled) multiplier space: the baseline for err_p_l2.
    """
    system = solution.system
    spaces = solution.spaces
    n_s, n_u, n_p = spaces.field_sizes
    cols = system.slices["multiplier"]
    mass, rhs, pieces = None, None, []
    for patch in range(solution.npatches):
        rule = error_points(solution, patch, npts)
        coll = GridCollocation.on_rule(spaces.derham, solution.topology.patches[patch], rule)
        w = coll.physical_weights(rule.weights)
        P = system.prolongations[patch][n_s + n_u:, cols]
        Q = (coll.pressure[0] @ P).tocsr()
        q = case.multiplier(coll.bundle.x)
        m = (Q.T @ sp.diags(w) @ Q).tocsr()
        b = Q.T @ (w * q)
        mass = m if mass is None else mass + m
        rhs = b if rhs is None else rhs + b
        pieces.append((Q, w, q))
    coef = spla.spsolve(mass.tocsc(), rhs)
    total = sum(float(np.sum(w * (Q @ coef - q) ** 2)) for Q, w, q in pieces)
    return float(SQRT2 * np.sqrt(total))


# ==========================================
# CONVERGENCE TABLE
# ==========================================

@dataclass
class ConvergenceReport:
    case: str
    formulation: str
    p: int
    r: int

    def __post_init__(self):
        self.rows: List[Dict] = []

    def add_level(self, n: int, dofs: Tuple[int, int, int], errors: Dict[str, float], **extra) -> None:
        row = {
            "case": self.case, "formulation": self.formulation, "p": self.p, "r": self.r,
            "n": int(n), "h": 1.0 / n,
            "dof_sigma": int(dofs[0]), "dof_u": int(dofs[1]), "dof_p": int(dofs[2]),
        }
        row.update({k: float(v) for k, v in errors.items()})
        row.update(extra)
        self.rows.append(row)

    @property
    def table(self) -> pd.DataFrame:
        """One row per level; eoc_* columns between successive levels (NaN on the first)."""
        df = pd.DataFrame(self.rows)
        if df.empty:
            return pd.DataFrame(columns=config.CSV_COLUMNS)
        for col in config.CSV_COLUMNS:
            if col not in df:
                df[col] = np.nan
        df = df.sort_values("n", kind="stable").reset_index(drop=True)
        log_h = np.log(df["h"])
        for col in config.ERROR_COLUMNS:
            log_e = np.log(df[col].where(df[col] > 0))
            df[f"eoc_{col[4:]}"] = -log_e.diff() / -log_h.diff()
        extras = [c for c in df.columns if c not in config.CSV_COLUMNS]
        return df[config.CSV_COLUMNS + extras]

    def eoc(self, column: str) -> pd.Series:
        return self.table[f"eoc_{column[4:] if column.startswith('err_') else column}"]

    def finest_eoc(self, column: str) -> float:
        """EOC between the two finest levels."""
        series = self.eoc(column)
        return float(series.iloc[-1]) if len(series) > 1 else float("nan")

    def to_csv(self, path) -> None:
        self.table.to_csv(path, index=False, float_format="%.10e")

    def render(self) -> str:
        cols = ["n", "err_sigma_hdiv", "err_u_l2", "err_p_l2", "eoc_sigma_hdiv", "eoc_u_l2", "eoc_p_l2"]
        return self.table[cols].to_string(index=False, float_format=lambda v: f"{v:.3e}")


def lambda_ratios(stiff: ConvergenceReport, soft: ConvergenceReport) -> pd.DataFrame:
    """Per-level error ratios of two ladders of the same case (e.g. lambda = 1e10 against 2)."""
    a = stiff.table.set_index("n")
    b = soft.table.set_index("n")
    common = a.index.intersection(b.index)
    out = pd.DataFrame(index=common)
    for col in config.ERROR_COLUMNS:
        out[f"ratio_{col[4:]}"] = a.loc[common, col] / b.loc[common, col]
    return out.reset_index()


def worst_ratio(ratios: pd.DataFrame) -> Optional[float]:
    """Largest deviation factor max(ratio, 1/ratio) over all levels and errors."""
    vals = ratios.drop(columns="n").to_numpy(dtype=float)
    vals = vals[np.isfinite(vals) & (vals > 0)]
    if vals.size == 0:
        return None
    return float(np.maximum(vals, 1.0 / vals).max())
