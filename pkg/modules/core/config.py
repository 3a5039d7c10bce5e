import logging
import os
from dotenv import load_dotenv

# Load .env file if it exists
load_dotenv()


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        logging.warning(f"⚠️ {name}={raw!r} is not an integer, using {default}")
        return default


def _env_float(name: str, default: float) -> float:
    raw = os.environ.get(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return float(raw)
    except ValueError:
        logging.warning(f"⚠️ {name}={raw!r} is not a number, using {default}")
        return default


# ==========================================
# 1. RUNTIME
# ==========================================

# Worker threads for per-patch assembly and basis caches
ASSEMBLY_THREADS = max(1, _env_int("ISOELAST_THREADS", 4))

LOG_LEVEL = os.environ.get("ISOELAST_LOG_LEVEL", "INFO").upper()

OUTPUT_DIR = os.environ.get("ISOELAST_OUTPUT_DIR", "results")


# ==========================================
# 2. GEOMETRY
# ==========================================

# Damped Newton for F^-1
NEWTON_MAX_ITER = _env_int("ISOELAST_NEWTON_MAX_ITER", 50)
NEWTON_TOL = _env_float("ISOELAST_NEWTON_TOL", 1e-12)

# Seed grid (points per direction) for the inversion start
INVERSION_GRID = _env_int("ISOELAST_INVERSION_GRID", 17)

# Samples per direction for the det J > 0 check
DEGENERACY_GRID = _env_int("ISOELAST_DEGENERACY_GRID", 21)

INTERFACE_TOL = 1e-10
INTERFACE_SAMPLES = 100


# ==========================================
# 3. SOLVER
# ==========================================

SOLVER_RESIDUAL_TOL = _env_float("ISOELAST_SOLVER_RESIDUAL_TOL", 1e-9)

# Dense generalized eigensolve budget for the inf-sup probes
INFSUP_MAX_DOFS = _env_int("ISOELAST_INFSUP_MAX_DOFS", 5000)


# ==========================================
# 4. STUDY DEFAULTS
# ==========================================

DEFAULT_LEVELS = (4, 8, 16, 32)
DEFAULT_DEGREE = 2
DEFAULT_REGULARITY = 0

# Evaluation grid (points per element and direction) for VTK export
VTK_POINTS_PER_ELEMENT = _env_int("ISOELAST_VTK_POINTS_PER_ELEMENT", 4)

CSV_COLUMNS = [
    "case", "formulation", "p", "r", "n", "h",
    "dof_sigma", "dof_u", "dof_p",
    "err_sigma_hdiv", "err_divsigma_l2", "err_u_l2", "err_p_l2",
]
ERROR_COLUMNS = ["err_sigma_hdiv", "err_divsigma_l2", "err_u_l2", "err_p_l2"]

# Radius around Gamma_D / Gamma_t junctions for the stress-magnitude report
JUNCTION_RADIUS = _env_float("ISOELAST_JUNCTION_RADIUS", 0.15)

# Companion lambda for the quasi-incompressible comparison ladder
COMPARE_LAMBDA = 2.0
