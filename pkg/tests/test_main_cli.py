"""
Tests for the main.py command line.

Tests cover:
- --levels parsing and rejection of bad input
- Exit codes of each action (cases, geometry, run, infsup)
- Error routing: library errors and unknown names exit with code 1
"""
import argparse
import json
from unittest.mock import MagicMock, patch

import pytest

import main
from modules.core.exceptions import RankDeficiencyError


def run_cli(*argv):
    with patch("sys.argv", ["main.py", *argv]):
        with pytest.raises(SystemExit) as info:
            main.main()
    return info.value.code


# ==========================================
# ARGUMENTS
# ==========================================

class TestParseLevels:
    def test_valid(self):
        assert main.parse_levels("4, 8,16") == [4, 8, 16]
        assert main.parse_levels("") is None

    @pytest.mark.parametrize("raw", ["4,x", "0,4", ","])
    def test_invalid(self, raw):
        with pytest.raises(argparse.ArgumentTypeError):
            main.parse_levels(raw)


# ==========================================
# ACTIONS
# ==========================================

class TestActions:
    def test_cases(self):
        assert run_cli("--action", "cases") == 0

    def test_geometry_export(self, tmp_path):
        assert run_cli("--action", "geometry", "--geometry", "disk", "--out", str(tmp_path)) == 0
        data = json.loads((tmp_path / "disk.json").read_text())
        assert len(data["patches"]) == 5
        assert run_cli("--action", "geometry", "--file", str(tmp_path / "disk.json")) == 0

    def test_geometry_of_case(self, tmp_path):
        assert run_cli("--action", "geometry", "--case", "fourpatch-dirichlet", "--out", str(tmp_path)) == 0
        assert (tmp_path / "fourpatch-square.json").exists()

    def test_run_requires_case(self):
        assert run_cli("--action", "run") == 1

    def test_unknown_case(self, tmp_path):
        assert run_cli("--case", "no-such-case", "--out", str(tmp_path)) == 1

    def test_run_passes_options(self, tmp_path):
        result = MagicMock()
        result.summary = {"label": "x", "levels_run": 2, "failures": 0, "duration": "0.1s"}
        with patch("main.run_study", return_value=result) as run:
            code = run_cli("--case", "curved-square-dirichlet", "--levels", "2,4", "--degree", "3",
                           "--regularity", "1", "--compare-lambda", "--out", str(tmp_path))
        assert code == 0
        cfg = run.call_args[0][0]
        assert cfg.levels == [2, 4]
        assert (cfg.degree, cfg.regularity) == (3, 1)
        assert cfg.compare_lambda == main.config.COMPARE_LAMBDA

    def test_failed_levels_exit_nonzero(self, tmp_path):
        result = MagicMock()
        result.summary = {"label": "x", "levels_run": 2, "failures": 1, "duration": "0.1s"}
        with patch("main.run_study", return_value=result):
            assert run_cli("--case", "curved-square-dirichlet", "--out", str(tmp_path)) == 1

    def test_library_error_exit_code(self, tmp_path):
        with patch("main.run_study", side_effect=RankDeficiencyError("singular", block="stress")):
            assert run_cli("--case", "curved-square-dirichlet", "--out", str(tmp_path)) == 1

    def test_unexpected_error_exit_code(self, tmp_path):
        with patch("main.run_study", side_effect=ZeroDivisionError("boom")):
            assert run_cli("--case", "curved-square-dirichlet", "--out", str(tmp_path)) == 1

    def test_infsup(self, tmp_path):
        assert run_cli("--action", "infsup", "--degree", "2", "--regularity", "0", "--levels", "2",
                       "--out", str(tmp_path)) == 0
        assert (tmp_path / "infsup_p2_r0.csv").exists()
