"""
GEOMETRY TEST SUITE
=====================
Tests patch maps, point inversion, multipatch validation, interface DOF
identification, the built-in geometries and geometry files.

COVERS:
  - Analytic and spline curved squares agree (values, Jacobians, Hessians)
  - Newton inversion round trip and failure outside the patch
  - Degenerate maps are rejected
  - Interface matching and boundary tag validation
  - Signed DOF identification (DofMap)
  - Disk rim radius, JSON save/load round trip

USAGE:
  pytest tests/test_geometry.py -v
"""
import json

import numpy as np
import pytest

from modules.core.exceptions import (
    BoundaryLayoutError,
    ConformityError,
    GeometryDegeneracyError,
    InversionError,
)
from modules.geometry.geometry_io import load_topology, save_topology, topology_to_dict
from modules.geometry.library import (
    DISK_RADIUS,
    builtin_geometry,
    curved_square_spline,
    fourpatch_square,
)
from modules.geometry.maps import (
    adjugate,
    affine_map,
    curved_square_map,
    determinant,
    eval_geometry,
    identity_map,
    inverse,
    invert_geometry,
    second_derivatives,
)
from modules.geometry.multipatch import (
    DIRICHLET,
    TRACTION,
    DofMap,
    Interface,
    build_multipatch,
    edge_pairs,
    single_patch,
)
from modules.splines.bspline import Edge

RNG = np.random.default_rng(7)
Z1 = RNG.uniform(0.0, 1.0, 25)
Z2 = RNG.uniform(0.0, 1.0, 25)


# ==========================================
# PATCH MAPS
# ==========================================

class TestPatchMaps:
    def test_curved_square_values(self):
        F = curved_square_map()
        np.testing.assert_allclose(F([0.5], [0.5])[0], [0.5, 0.75])
        J = F.jacobian([0.5], [0.5])[0]
        np.testing.assert_allclose(J, [[1.0, 0.0], [1.0, 1.0]])

    def test_spline_matches_analytic(self):
        a, s = curved_square_map(), curved_square_spline()
        np.testing.assert_allclose(s(Z1, Z2), a(Z1, Z2), atol=1e-13)
        np.testing.assert_allclose(s.jacobian(Z1, Z2), a.jacobian(Z1, Z2), atol=1e-12)
        np.testing.assert_allclose(s.hessian(Z1, Z2), a.hessian(Z1, Z2), atol=1e-11)

    def test_inverse_map_hessian(self):
        # F^-1(x, y) = (x, y - x^2)
        sd = second_derivatives(curved_square_map(), Z1, Z2)
        np.testing.assert_allclose(sd.hess_inv[:, 0], 0.0, atol=1e-13)
        np.testing.assert_allclose(sd.hess_inv[:, 1, 0, 0], -2.0, atol=1e-13)
        np.testing.assert_allclose(sd.hess_inv[:, 1, 1, 1], 0.0, atol=1e-13)

    def test_matrix_helpers(self):
        J = np.array([[[2.0, 1.0], [0.5, 3.0]]])
        assert determinant(J)[0] == pytest.approx(5.5)
        np.testing.assert_allclose(inverse(J)[0] @ J[0], np.eye(2), atol=1e-14)
        np.testing.assert_allclose(adjugate(J)[0], [[3.0, -1.0], [-0.5, 2.0]])

    def test_eval_geometry_bundle(self):
        b = eval_geometry(curved_square_map(), Z1, Z2)
        np.testing.assert_allclose(b.detJ, 1.0)
        np.testing.assert_allclose(np.einsum("qij,qjk->qik", b.invJ, b.J), np.broadcast_to(np.eye(2), b.J.shape),
                                   atol=1e-13)


class TestInversion:
    @pytest.mark.parametrize("gmap", [curved_square_map(), curved_square_spline()], ids=["analytic", "spline"])
    def test_round_trip(self, gmap):
        zeta = gmap.invert(gmap(Z1, Z2))
        np.testing.assert_allclose(zeta[:, 0], Z1, atol=1e-10)
        np.testing.assert_allclose(zeta[:, 1], Z2, atol=1e-10)

    def test_corner_points(self):
        F = curved_square_map()
        zeta = F.invert(np.array([[0.0, 0.0], [1.0, 2.0]]))
        np.testing.assert_allclose(zeta, [[0.0, 0.0], [1.0, 1.0]], atol=1e-12)

    def test_invert_geometry_disk_patch(self):
        rim = builtin_geometry("disk").patches[2]
        zeta = invert_geometry(rim, rim(Z1, Z2))
        np.testing.assert_allclose(zeta, np.stack((Z1, Z2), axis=1), atol=1e-9)

    def test_outside_point_fails(self):
        with pytest.raises(InversionError):
            curved_square_map().invert(np.array([[5.0, 5.0]]))


class TestDegeneracy:
    def test_reflection_rejected(self):
        flipped = affine_map(matrix=((1.0, 0.0), (0.0, -1.0)), name="flipped")
        with pytest.raises(GeometryDegeneracyError):
            flipped.check_diffeomorphism()
        with pytest.raises(GeometryDegeneracyError):
            eval_geometry(flipped, Z1, Z2)
        with pytest.raises(GeometryDegeneracyError):
            single_patch(flipped)

    def test_min_det_reported(self):
        assert identity_map().check_diffeomorphism() == pytest.approx(1.0)


# ==========================================
# MULTIPATCH TOPOLOGY
# ==========================================

class TestMultipatch:
    def test_untagged_edges_default_to_dirichlet(self):
        topo = single_patch(identity_map(), {(0, "east"): TRACTION})
        assert topo.boundary[(0, Edge.EAST)] == TRACTION
        assert topo.boundary_edges(DIRICHLET) == [(0, Edge.WEST), (0, Edge.SOUTH), (0, Edge.NORTH)]

    def test_fourpatch_outer_edges(self):
        topo = fourpatch_square()
        assert topo.npatches == 4
        assert len(topo.interfaces) == 4
        assert len(topo.boundary) == 8
        assert set(topo.boundary.values()) == {DIRICHLET}

    def test_mismatched_interface(self):
        shifted = affine_map(origin=(1.0, 0.5), name="shifted")
        with pytest.raises(ConformityError):
            build_multipatch({"patches": [identity_map(), shifted],
                              "interfaces": [(0, "EAST", 1, "WEST")]})

    def test_matching_interface_accepted(self):
        right = affine_map(origin=(1.0, 0.0), name="right")
        topo = build_multipatch({"patches": [identity_map(), right],
                                 "interfaces": [{"patch_a": 0, "edge_a": "EAST", "patch_b": 1, "edge_b": "WEST"}]})
        assert (0, Edge.EAST) not in topo.boundary
        assert len(topo.boundary) == 6

    def test_edge_in_two_interfaces(self):
        right = affine_map(origin=(1.0, 0.0), name="right")
        with pytest.raises(ConformityError):
            build_multipatch({"patches": [identity_map(), right],
                              "interfaces": [(0, "EAST", 1, "WEST"), (0, "EAST", 1, "WEST")]})

    def test_bad_boundary_tags(self):
        with pytest.raises(BoundaryLayoutError):
            single_patch(identity_map(), {(0, Edge.WEST): "neumann"})
        right = affine_map(origin=(1.0, 0.0), name="right")
        with pytest.raises(BoundaryLayoutError):
            build_multipatch({"patches": [identity_map(), right],
                              "interfaces": [(0, "EAST", 1, "WEST")],
                              "boundary": {(0, "EAST"): TRACTION}})


class TestDofMap:
    def test_shared_dof(self):
        dm = DofMap([3, 3], pairs=[(0, 2, 1, 0, 1.0)])
        assert dm.size == 5
        assert dm.glob[1][0] == dm.glob[0][2]
        P = dm.prolongation(1).toarray()
        assert P.shape == (3, 5)
        assert P[0, dm.glob[0][2]] == 1.0

    def test_signed_identification(self):
        dm = DofMap([2, 2], pairs=[(0, 1, 1, 0, -1.0)])
        assert dm.sign[0][1] * dm.sign[1][0] == -1.0

    def test_inconsistent_orientation(self):
        with pytest.raises(ConformityError):
            DofMap([2, 2], pairs=[(0, 0, 1, 0, 1.0), (0, 0, 1, 0, -1.0)])

    def test_dropped_class(self):
        dm = DofMap([2, 2], pairs=[(0, 1, 1, 0, 1.0)], dropped={1: [0]})
        assert dm.size == 2
        assert dm.glob[0][1] == -1
        assert dm.prolongation(0).toarray()[1].sum() == 0.0

    def test_edge_pairs_reversed(self):
        iface = Interface(0, Edge.EAST, 1, Edge.WEST, reversed=True)
        pairs = edge_pairs(iface, np.array([1, 3]), np.array([0, 2]), 1.0)
        assert pairs == [(0, 1, 1, 2, 1.0), (0, 3, 1, 0, 1.0)]
        with pytest.raises(ConformityError):
            edge_pairs(iface, np.array([1, 3]), np.array([0]), 1.0)


# ==========================================
# BUILT-IN GEOMETRIES AND FILES
# ==========================================

class TestLibrary:
    def test_disk_rim(self):
        topo = builtin_geometry("disk")
        s = np.linspace(0.0, 1.0, 9)
        for patch in range(1, 5):
            x = topo.patches[patch](*Edge.EAST.point(s))
            np.testing.assert_allclose(np.linalg.norm(x, axis=1), DISK_RADIUS, atol=1e-12)

    def test_disk_tags(self):
        topo = builtin_geometry("disk")
        assert topo.boundary[(1, Edge.EAST)] == TRACTION
        assert topo.boundary[(4, Edge.EAST)] == DIRICHLET
        # upper half of the rim is loaded
        x = topo.patches[1](*Edge.EAST.point(np.array([0.5])))
        assert x[0, 1] > 0.0

    def test_unknown_geometry(self):
        with pytest.raises(KeyError):
            builtin_geometry("torus")


class TestGeometryFiles:
    def test_round_trip_rational(self, tmp_path):
        topo = builtin_geometry("disk")
        path = save_topology(topo, tmp_path / "disk.json")
        loaded = load_topology(path)
        assert loaded.npatches == topo.npatches
        assert loaded.boundary == topo.boundary
        np.testing.assert_array_equal(loaded.patches[2].weights, topo.patches[2].weights)
        np.testing.assert_array_equal(loaded.patches[2](Z1, Z2), topo.patches[2](Z1, Z2))

    def test_analytic_patch_by_name(self, tmp_path):
        path = save_topology(builtin_geometry("curved-square"), tmp_path / "cs.json")
        data = json.loads(path.read_text())
        assert data["patches"] == [{"kind": "analytic", "name": "curved-square"}]
        assert load_topology(path).patches[0].name == "curved-square"

    def test_unsaveable_analytic(self):
        topo = single_patch(affine_map(origin=(2.0, 0.0), name="moved"))
        with pytest.raises(ValueError):
            topology_to_dict(topo)

    def test_invalid_json(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ValueError):
            load_topology(bad)
