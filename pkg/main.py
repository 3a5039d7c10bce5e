from __future__ import annotations
import sys
import argparse
import traceback
from pathlib import Path

from modules.core import config
from modules.core.exceptions import IsoElastError
from modules.core.logger import AppLogger
from modules.core.tracker import StudyTracker
from modules.geometry.geometry_io import load_topology, save_topology
from modules.geometry.library import GEOMETRIES, builtin_geometry
from modules.harness.cases import builtin_case, case_names
from modules.harness.study import StudyConfig, infsup_table, run_study, spread


def parse_levels(raw: str):
    if not raw:
        return None
    try:
        levels = [int(t) for t in raw.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--levels expects comma-separated integers, got {raw!r}")
    if not levels or min(levels) < 1:
        raise argparse.ArgumentTypeError(f"--levels needs positive element counts, got {raw!r}")
    return levels


def run_study_action(args, logger: AppLogger) -> bool:
    if not args.case:
        logger.error("🛑 Action 'run' requires --case. See --action cases.")
        return False
    cfg = StudyConfig(
        case=args.case,
        formulation=args.formulation,
        degree=args.degree,
        regularity=args.regularity,
        levels=args.levels,
        lam=args.lam,
        mu=args.mu,
        out_dir=args.out,
        vtk=args.vtk,
        infsup=args.infsup,
        compare_lambda=args.compare_lambda,
    )
    tracker = StudyTracker()
    result = run_study(cfg, logger, tracker)
    summary = result.summary
    logger.log(f"🏁 {summary['label']}: {summary['levels_run']} level(s), {summary['failures']} failure(s), "
               f"{summary['duration']}")
    return summary["failures"] == 0


def run_cases(logger: AppLogger) -> bool:
    for name in case_names():
        case = builtin_case(name)
        exact = "exact" if case.has_exact else "no exact solution"
        logger.log(f"  {name:32s} {case.formulation:6s} p={case.degree} r={case.regularity} "
                   f"lambda={case.material.lam:g} mu={case.material.mu:g} on {case.geometry} ({exact})")
        if case.description:
            logger.log(f"      {case.description}")
    return True


def run_infsup(args, logger: AppLogger) -> bool:
    p = args.degree or config.DEFAULT_DEGREE
    r = config.DEFAULT_REGULARITY if args.regularity is None else args.regularity
    levels = args.levels or list(config.DEFAULT_LEVELS[:3])
    gmap = builtin_geometry(args.geometry).patches[0] if args.geometry else None
    table = infsup_table(p, r, levels, gmap)
    logger.log_table(table.to_string(index=False, float_format=lambda v: f"{v:.4f}"),
                     title=f"inf-sup p={p} r={r}")
    for col in ("divergence", "taylor_hood"):
        logger.log(f"   {col}: relative spread over levels {spread(table[col]):.3f}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"infsup_p{p}_r{r}.csv"
    table.to_csv(path, index=False, float_format="%.10e")
    logger.log(f"💾 wrote {path}")
    return True


def run_geometry(args, logger: AppLogger) -> bool:
    if args.file:
        topo = load_topology(args.file)
        label = args.file
    else:
        name = args.geometry or (builtin_case(args.case).geometry if args.case else "curved-square")
        topo = builtin_geometry(name)
        label = name
    for k, gmap in enumerate(topo.patches):
        logger.log(f"   patch {k} ({gmap.name}): min det J {gmap.check_diffeomorphism():.4g}")
    logger.log(f"   {len(topo.interfaces)} interface(s), {len(topo.boundary)} outer edge(s)")
    if not args.file:
        path = save_topology(topo, Path(args.out) / f"{label}.json")
        logger.log(f"💾 wrote {path}")
    logger.log(f"✅ geometry {label} is valid")
    return True


def main():
    parser = argparse.ArgumentParser(description="Isogeometric mixed elasticity CLI")
    parser.add_argument("--action", choices=["run", "cases", "infsup", "geometry"], default="run",
                        help="Action to perform")
    parser.add_argument("--case", type=str, help="Built-in case name (run; geometry exports the case geometry)")
    parser.add_argument("--formulation", choices=["weak", "strong"], help="Override the case formulation")
    parser.add_argument("--degree", type=int, help="Spline degree p")
    parser.add_argument("--regularity", type=int, help="Spline regularity r")
    parser.add_argument("--levels", type=parse_levels, help="Comma-separated element counts, e.g. 4,8,16")
    parser.add_argument("--lambda", dest="lam", type=float, help="Override the first Lame parameter")
    parser.add_argument("--mu", type=float, help="Override the shear modulus")
    parser.add_argument("--out", type=str, default=config.OUTPUT_DIR, help="Output directory")
    parser.add_argument("--vtk", action="store_true", help="Write VTK files of the finest level")
    parser.add_argument("--infsup", action="store_true", help="Add inf-sup estimates per level")
    parser.add_argument("--compare-lambda", dest="compare_lambda", type=float, nargs="?",
                        const=config.COMPARE_LAMBDA,
                        help=f"Rerun the ladder with this lambda and report error ratios (default {config.COMPARE_LAMBDA:g})")
    parser.add_argument("--geometry", choices=sorted(GEOMETRIES), help="Built-in geometry (infsup, geometry)")
    parser.add_argument("--file", type=str, help="Geometry JSON file to validate (used with --action geometry)")

    args = parser.parse_args()
    logger = AppLogger()
    exit_code = 0

    try:
        if args.action == "run":
            ok = run_study_action(args, logger)
        elif args.action == "cases":
            ok = run_cases(logger)
        elif args.action == "infsup":
            ok = run_infsup(args, logger)
        else:
            ok = run_geometry(args, logger)
        if not ok:
            exit_code = 1
    except IsoElastError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        exit_code = 1
    except KeyError as e:
        logger.error(f"❌ {e}")
        exit_code = 1
    except Exception as e:
        logger.error(f"💥 CRITICAL ERROR in main execution: {e}")
        logger.error(traceback.format_exc())
        exit_code = 1

    sys.exit(exit_code)


if __name__ == "__main__":
    main()
