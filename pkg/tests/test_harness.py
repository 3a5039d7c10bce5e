"""
CONVERGENCE HARNESS TEST SUITE
================================
Tests the manufactured cases, error tables, VTK export and full studies on
coarse meshes.

COVERS:
  - Manufactured cases: f = div sigma, multiplier = skew(grad u), case lookup
  - ConvergenceReport EOC columns, lambda ratio tables
  - VTK structure and junction detection
  - run_study end to end (weak with exact solution, demo without), output files
  - Two-level ladders: weak and strong rates, lambda = 1e10 against lambda = 2
  - Inf-sup table and spread

USAGE:
  pytest tests/test_harness.py -v
"""
import json

import numpy as np
import pandas as pd
import pytest

from modules.core.exceptions import SpaceParameterError, UnknownCaseError
from modules.core.tracker import StudyTracker
from modules.geometry.library import builtin_geometry
from modules.geometry.multipatch import TRACTION
from modules.harness.cases import (
    builtin_case,
    case_names,
    consistency_residual,
    sample_points,
)
from modules.harness.errors import ConvergenceReport, lambda_ratios, worst_ratio
from modules.harness.export import VTK_HEADER, junction_points, stress_magnitude, write_vtk
from modules.harness.study import StudyConfig, infsup_table, run_study, solve_level, spread
from modules.splines.bspline import Edge


def synthetic_report(rate=2.0, levels=(4, 8, 16), scale=1.0):
    report = ConvergenceReport("demo", "weak", 2, 0)
    for n in levels:
        e = scale * float(n) ** -rate
        report.add_level(n, (10 * n, 5 * n, n), {
            "err_sigma_hdiv": e, "err_divsigma_l2": e, "err_u_l2": e, "err_p_l2": e,
        })
    return report


# ==========================================
# MANUFACTURED CASES
# ==========================================

class TestCases:
    @pytest.mark.parametrize("name", [n for n in case_names() if builtin_case(n).has_exact])
    def test_load_is_div_sigma(self, name):
        case = builtin_case(name)
        x = sample_points(case.topology(), per_direction=4)
        scale = max(1.0, float(np.abs(case.div_sigma(x)).max()))
        assert consistency_residual(case, x) < 1e-4 * scale

    def test_multiplier_is_skew_part(self):
        case = builtin_case("curved-square-dirichlet")
        x = sample_points(case.topology(), per_direction=3)
        g = case.grad_u(x)
        np.testing.assert_allclose(case.multiplier(x), 0.5 * (g[:, 1, 0] - g[:, 0, 1]), atol=1e-14)

    def test_stress_is_symmetric(self):
        case = builtin_case("quasi-incompressible-single")
        s = case.sigma(sample_points(case.topology(), per_direction=3))
        np.testing.assert_allclose(s[:, 0, 1], s[:, 1, 0], atol=1e-12)

    def test_demo_cases_have_no_exact_solution(self):
        case = builtin_case("disk-load")
        assert not case.has_exact
        assert case.load is None

    def test_material_override(self):
        case = builtin_case("quasi-incompressible-single", lam=2.0)
        assert case.material.lam == 2.0
        assert builtin_case("quasi-incompressible-single").material.lam == 1e10
        assert case.with_material(lam=5.0).material.lam == 5.0

    def test_unknown_case(self):
        with pytest.raises(UnknownCaseError):
            builtin_case("no-such-case")
        with pytest.raises(KeyError):
            builtin_case("no-such-case")

    def test_exact_traction_on_tagged_edges(self):
        case = builtin_case("curved-square-mixed")
        topo = case.topology()
        spec = case.boundary_spec(topo)
        assert spec.traction_edges() == [(0, Edge.EAST), (0, Edge.SOUTH), (0, Edge.NORTH)]
        # east edge of the curved square is x = 1 with outward normal (1, 0)
        x = np.array([[1.0, 1.5]])
        np.testing.assert_allclose(spec.traction_at(x), case.sigma(x)[:, :, 0], atol=1e-9)


# ==========================================
# TABLES
# ==========================================

class TestConvergenceReport:
    def test_eoc_columns(self):
        table = synthetic_report(rate=2.0).table
        assert list(table["n"]) == [4, 8, 16]
        assert np.isnan(table["eoc_u_l2"].iloc[0])
        np.testing.assert_allclose(table["eoc_u_l2"].iloc[1:], 2.0, atol=1e-12)
        assert synthetic_report(rate=3.0).finest_eoc("err_sigma_hdiv") == pytest.approx(3.0)

    def test_levels_sorted(self):
        table = synthetic_report(levels=(16, 4, 8)).table
        assert list(table["n"]) == [4, 8, 16]

    def test_empty_report(self):
        table = ConvergenceReport("demo", "weak", 2, 0).table
        assert table.empty
        assert "err_u_l2" in table.columns

    def test_single_level_has_no_eoc(self):
        assert np.isnan(synthetic_report(levels=(4,)).finest_eoc("err_u_l2"))

    def test_csv(self, tmp_path):
        path = tmp_path / "table.csv"
        synthetic_report().to_csv(path)
        df = pd.read_csv(path)
        assert len(df) == 3
        assert {"case", "dof_sigma", "eoc_p_l2"} <= set(df.columns)

    def test_lambda_ratios(self):
        stiff = synthetic_report(scale=1.5)
        soft = synthetic_report(scale=1.0)
        ratios = lambda_ratios(stiff, soft)
        np.testing.assert_allclose(ratios["ratio_u_l2"], 1.5)
        assert worst_ratio(ratios) == pytest.approx(1.5)

    def test_worst_ratio_inverted(self):
        ratios = pd.DataFrame({"n": [4], "ratio_u_l2": [0.25]})
        assert worst_ratio(ratios) == pytest.approx(4.0)
        assert worst_ratio(pd.DataFrame({"n": [4], "ratio_u_l2": [np.nan]})) is None


# ==========================================
# EXPORT
# ==========================================

class TestExport:
    def test_vtk_layout(self, tmp_path):
        frame = pd.DataFrame({
            "x": [0.0, 1.0, 0.0, 1.0], "y": [0.0, 0.0, 1.0, 1.0],
            "u_x": [0.0] * 4, "u_y": [1.0] * 4,
            "sigma_xx": [1.0] * 4, "sigma_xy": [0.0] * 4, "sigma_yy": [2.0] * 4,
            "stress_magnitude": [3.0] * 4,
        })
        path = write_vtk(tmp_path / "sub" / "grid.vtk", frame, (2, 2))
        lines = path.read_text().splitlines()
        assert lines[0] == VTK_HEADER
        assert "DIMENSIONS 2 2 1" in lines
        assert "POINTS 4 double" in lines
        assert sum(line.startswith("SCALARS") for line in lines) == 4

    def test_stress_magnitude(self):
        sigma = np.array([[[3.0, 1.0], [1.0, 0.0]]])
        assert stress_magnitude(sigma)[0] == pytest.approx(np.sqrt(11.0))

    def test_junction_points(self):
        topo = builtin_geometry("identity")
        tags = dict(topo.boundary)
        tags[(0, Edge.NORTH)] = TRACTION
        pts = junction_points(topo, tags)
        assert pts.shape == (2, 2)
        assert {tuple(p) for p in np.round(pts, 12)} == {(0.0, 1.0), (1.0, 1.0)}


# ==========================================
# STUDIES
# ==========================================

class TestStudy:
    def test_weak_study_writes_outputs(self, out_dir):
        tracker = StudyTracker()
        cfg = StudyConfig(case="curved-square-dirichlet", levels=(2, 4), out_dir=str(out_dir), vtk=True)
        result = run_study(cfg, tracker=tracker)
        table = result.report.table
        assert list(table["n"]) == [2, 4]
        assert table["err_sigma_hdiv"].iloc[1] < table["err_sigma_hdiv"].iloc[0]
        assert np.isfinite(table["eoc_u_l2"].iloc[1])
        assert (table["err_p_best"] <= table["err_p_l2"] * (1.0 + 1e-8)).all()

        stem = "curved-square-dirichlet_weak_p2_r0"
        assert (out_dir / f"{stem}.csv").exists()
        assert (out_dir / f"{stem}_n4_patch0.vtk").exists()
        data = json.loads((out_dir / f"{stem}.json").read_text())
        assert data["config"]["levels"] == [2, 4]
        assert data["failures"] == 0
        assert "finest_eoc_sigma_hdiv" in data["results"]
        assert len(data["table"]) == 2

    def test_demo_study_reports_stress(self, out_dir):
        cfg = StudyConfig(case="square-top-load", degree=2, levels=(2,), out_dir=str(out_dir))
        result = run_study(cfg)
        stats = result.summary["results"]["stress"]
        assert stats["max_stress_magnitude"] > 0.0
        assert len(stats["junctions"]) == 2

    def test_strong_level(self):
        level = solve_level(builtin_case("strongsym-identity"), "strong", 2, 1, 2)
        assert level.dofs[2] == 0
        assert level.residual < 1e-9

    def test_weak_ladder_rates(self, out_dir):
        cfg = StudyConfig(case="curved-square-dirichlet", degree=2, regularity=0, levels=(8, 16), out_dir=str(out_dir))
        report = run_study(cfg).report
        for col in ("err_sigma_hdiv", "err_u_l2", "err_p_l2"):
            assert report.finest_eoc(col) >= 2 - 0.3, col

    def test_strong_ladder_rates(self, out_dir):
        result = run_study(StudyConfig(case="strongsym-identity", levels=(4, 8), out_dir=str(out_dir)))
        assert result.report.p == 2
        for col in ("err_sigma_hdiv", "err_u_l2"):
            assert result.report.finest_eoc(col) >= 2 - 0.3, col

    def test_lambda_comparison(self, out_dir):
        cfg = StudyConfig(case="quasi-incompressible-single", levels=(4, 8), compare_lambda=2.0, out_dir=str(out_dir))
        result = run_study(cfg)
        assert list(result.comparison["n"]) == [4, 8]
        factor = worst_ratio(result.comparison)
        assert factor is not None and factor < 10.0
        assert result.summary["results"]["lambda_ratio_worst"] == pytest.approx(factor)
        assert (out_dir / "quasi-incompressible-single_weak_p2_r0_lambda_ratio.csv").exists()

    def test_unknown_formulation(self, out_dir):
        with pytest.raises(SpaceParameterError):
            run_study(StudyConfig(case="curved-square-dirichlet", formulation="mixed", out_dir=str(out_dir)))

    def test_infsup_table(self):
        table = infsup_table(2, 0, [2, 4])
        assert list(table.columns) == ["n", "divergence", "taylor_hood"]
        assert table["divergence"].gt(0.0).all()
        assert infsup_table(3, 2, [2])["taylor_hood"].isna().all()

    def test_spread(self):
        assert spread(pd.Series([1.0, 0.5, np.nan])) == pytest.approx(0.5)
        assert np.isnan(spread(pd.Series([np.nan])))
