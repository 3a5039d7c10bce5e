"""
Convergence studies: assemble, solve and measure one case over a ladder of uniform meshes.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd

from modules.core import config
from modules.core.exceptions import DofBudgetError, IsoElastError, SpaceParameterError
from modules.core.logger import AppLogger
from modules.core.tracker import StudyTracker
from modules.elasticity.strong_assembly import StrongSpacePair, assemble_strong_symmetry
from modules.elasticity.weaksym import assemble_weak_symmetry, weak_symmetry_residual
from modules.harness.cases import ManufacturedCase, builtin_case
from modules.harness.errors import (
    ConvergenceReport, StrongSolution, WeakSolution, compute_errors, lambda_ratios,
    multiplier_best_error, worst_ratio,
)
from modules.harness.export import export_solution, stress_report
from modules.solve.infsup import divergence_infsup, taylor_hood_infsup
from modules.solve.solver import solve_direct
from modules.spaces.derham import WeakSymSpaces

logger = logging.getLogger(__name__)

FORMULATIONS = ("weak", "strong")


@dataclass
class StudyConfig:
    case: str
    formulation: Optional[str] = None
    degree: Optional[int] = None
    regularity: Optional[int] = None
    levels: Optional[Sequence[int]] = None
    lam: Optional[float] = None
    mu: Optional[float] = None
    out_dir: str = config.OUTPUT_DIR
    vtk: bool = False
    infsup: bool = False
    compare_lambda: Optional[float] = None


@dataclass
class LevelResult:
    n: int
    solution: object
    dofs: tuple
    residual: float
    seconds: float


@dataclass
class StudyResult:
    report: ConvergenceReport
    summary: Dict
    artifacts: Dict[str, str] = field(default_factory=dict)
    comparison: Optional[pd.DataFrame] = None
    levels: list = field(default_factory=list)


def resolve(cfg: StudyConfig, case: ManufacturedCase) -> StudyConfig:
    """Fill unset options from the case defaults."""
    formulation = cfg.formulation or case.formulation
    if formulation not in FORMULATIONS:
        raise SpaceParameterError(f"unknown formulation {formulation!r}; choose from {FORMULATIONS}")
    return StudyConfig(
        case=cfg.case,
        formulation=formulation,
        degree=case.degree if cfg.degree is None else cfg.degree,
        regularity=case.regularity if cfg.regularity is None else cfg.regularity,
        levels=tuple(cfg.levels or case.levels),
        lam=case.material.lam,
        mu=case.material.mu,
        out_dir=cfg.out_dir,
        vtk=cfg.vtk,
        infsup=cfg.infsup,
        compare_lambda=cfg.compare_lambda,
    )


def solve_level(case: ManufacturedCase, formulation: str, p: int, r: int, n: int) -> LevelResult:
    """Assemble and solve one mesh level of a case."""
    t0 = time.perf_counter()
    topo = case.topology()
    boundary = case.boundary_spec(topo)
    if formulation == "weak":
        spaces = WeakSymSpaces.build(p, r, n)
        system = assemble_weak_symmetry(spaces, topo, case.material, boundary, load=case.load)
        report = solve_direct(system)
        solution = WeakSolution(system, report.solution)
        logger.debug(f"n={n}: weak symmetry residual {weak_symmetry_residual(system, report.solution):.2e}")
    else:
        pair = StrongSpacePair.build(p, r, n)
        system = assemble_strong_symmetry(pair, topo, case.material, boundary, load=case.load)
        report = solve_direct(system)
        solution = StrongSolution(system, report.solution)
    sizes = tuple(system.field_sizes) + (0,) * (3 - len(system.field_sizes))
    return LevelResult(n, solution, sizes, report.residual, time.perf_counter() - t0)


def _infsup_columns(case: ManufacturedCase, p: int, r: int, n: int, app_logger: AppLogger) -> Dict[str, float]:
    gmap = case.topology().patches[0]
    out = {}
    for name, probe in (("infsup_th", taylor_hood_infsup), ("infsup_div", divergence_infsup)):
        try:
            out[name] = probe(p, r, n, gmap)
        except (DofBudgetError, SpaceParameterError) as e:
            app_logger.warning(f"⚠️ {name} skipped at n={n}: {e}")
            out[name] = np.nan
    return out


def run_ladder(case: ManufacturedCase, cfg: StudyConfig, tracker: StudyTracker,
               app_logger: AppLogger) -> tuple:
    report = ConvergenceReport(case.name, cfg.formulation, cfg.degree, cfg.regularity)
    levels = []
    for n in cfg.levels:
        try:
            level = solve_level(case, cfg.formulation, cfg.degree, cfg.regularity, n)
        except IsoElastError as e:
            tracker.log_error(n, str(e))
            raise
        tracker.log_level(n, int(sum(level.dofs)), level.seconds, level.residual)
        extra = {"solver_residual": level.residual, "seconds": round(level.seconds, 3)}
        if case.has_exact:
            errors = compute_errors(case, level.solution)
            if cfg.formulation == "weak":
                extra["err_p_best"] = multiplier_best_error(case, level.solution)
        else:
            errors = {}
        if cfg.infsup and cfg.formulation == "weak":
            extra.update(_infsup_columns(case, cfg.degree, cfg.regularity, n, app_logger))
        report.add_level(n, level.dofs, errors, **extra)
        app_logger.log(f"✅ {case.name} n={n}: {sum(level.dofs)} dofs, residual {level.residual:.1e}, "
                       f"{level.seconds:.1f}s")
        levels.append(level)
    return report, levels


def run_study(cfg: StudyConfig, app_logger: AppLogger = None, tracker: StudyTracker = None) -> StudyResult:
    """
    Run the level ladder of one case and write ``<case>_<formulation>_p<p>_r<r>``
    .csv and .json (plus VTK files of the finest level on request) to the output
    directory.
    """
    app_logger = app_logger or AppLogger()
    tracker = tracker or StudyTracker()
    case = builtin_case(cfg.case, cfg.lam, cfg.mu)
    cfg = resolve(cfg, case)
    stem = f"{case.name}_{cfg.formulation}_p{cfg.degree}_r{cfg.regularity}"
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    tracker.start(stem)
    app_logger.log(f"📐 {case.name} ({cfg.formulation}, p={cfg.degree}, r={cfg.regularity}, "
                   f"lambda={cfg.lam:g}, mu={cfg.mu:g}) levels {list(cfg.levels)}")
    report, levels = run_ladder(case, cfg, tracker, app_logger)
    result = StudyResult(report=report, summary={}, levels=levels)
    if case.has_exact and len(levels) > 1:
        app_logger.log_table(report.render(), title=f"convergence {stem}")
        for col in ("err_sigma_hdiv", "err_u_l2", "err_p_l2"):
            tracker.set_result(f"finest_eoc_{col[4:]}", report.finest_eoc(col))

    if not case.has_exact:
        topo = case.topology()
        stats = stress_report(levels[-1].solution, topo, case.edge_tags(topo))
        tracker.set_result("stress", stats)
        loc = stats["max_location"]
        app_logger.log(f"   max stress magnitude {stats['max_stress_magnitude']:.4g} at ({loc[0]:.3f}, {loc[1]:.3f})")
        for j in stats["junctions"]:
            app_logger.log(f"   near junction ({j['point'][0]:.3f}, {j['point'][1]:.3f}): {j['max_stress_magnitude']:.4g}")

    if cfg.compare_lambda is not None and case.has_exact:
        companion = case.with_material(lam=cfg.compare_lambda)
        soft_cfg = StudyConfig(**{**asdict(cfg), "lam": cfg.compare_lambda, "infsup": False})
        soft, _ = run_ladder(companion, soft_cfg, StudyTracker(), app_logger)
        result.comparison = lambda_ratios(report, soft)
        factor = worst_ratio(result.comparison)
        tracker.set_result("lambda_ratio_worst", factor)
        path = out_dir / f"{stem}_lambda_ratio.csv"
        result.comparison.to_csv(path, index=False, float_format="%.10e")
        tracker.register_artifact("lambda_ratio", str(path))
        app_logger.log(f"   lambda {cfg.lam:g} vs {cfg.compare_lambda:g}: worst error ratio {factor}")

    csv_path = out_dir / f"{stem}.csv"
    report.to_csv(csv_path)
    tracker.register_artifact("csv", str(csv_path))
    if cfg.vtk:
        for k, path in enumerate(export_solution(levels[-1].solution, out_dir, f"{stem}_n{levels[-1].n}")):
            tracker.register_artifact(f"vtk_patch{k}", str(path))

    tracker.finish()
    summary = tracker.get_summary()
    summary["config"] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg).items()}
    summary["table"] = json.loads(report.table.to_json(orient="records"))
    json_path = out_dir / f"{stem}.json"
    json_path.write_text(json.dumps(summary, indent=2))
    summary["artifacts"]["json"] = str(json_path)
    result.summary = summary
    result.artifacts = summary["artifacts"]
    app_logger.log(f"💾 wrote {csv_path} and {json_path}")
    return result


def infsup_table(p: int, r: int, levels: Sequence[int], gmap=None) -> pd.DataFrame:
    """Taylor-Hood and V2/V3 inf-sup estimates, one row per level."""
    rows = []
    for n in levels:
        row = {"n": n, "divergence": divergence_infsup(p, r, n, gmap)}
        try:
            row["taylor_hood"] = taylor_hood_infsup(p, r, n, gmap)
        except SpaceParameterError:
            row["taylor_hood"] = np.nan
        rows.append(row)
    return pd.DataFrame(rows)


def spread(series: pd.Series) -> float:
    """(max - min) / max of a column; the h-uniformity observable of the inf-sup probes."""
    s = series.dropna()
    if s.empty or s.max() <= 0:
        return float("nan")
    return float((s.max() - s.min()) / s.max())
