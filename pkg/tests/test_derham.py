"""
DE RHAM SPACES TEST SUITE
===========================
Tests the pullbacks, the discrete spline spaces and their structural
properties on mapped patches.

COVERS:
  - Space dimensions and (p, r) validation, Taylor-Hood pressure availability
  - Pullback inverses and the commuting diagram on a curved patch
  - div V2 = V3 exactly (parametric inclusion)
  - Constant stresses lie in the mapped stress space
  - Grid collocation agrees with single-basis evaluation

USAGE:
  pytest tests/test_derham.py -v
"""
import numpy as np
import pytest

from modules.core.exceptions import GeometryDegeneracyError, SpaceParameterError
from modules.geometry.library import curved_square_spline
from modules.geometry.maps import GeometryBundle, curved_square_map, eval_geometry
from modules.spaces.derham import (
    DiscreteDeRhamSpaces,
    GridCollocation,
    PullbackKind,
    WeakSymSpaces,
    commuting_diagram_residual,
    divergence_inclusion_residual,
    identity_stress_residual,
    l2_projection,
    mass_matrix,
    physical_basis_eval,
    pullback_apply,
)
from modules.splines.bspline import Edge
from modules.splines.quadrature import TensorRule

RNG = np.random.default_rng(11)
Z1 = RNG.uniform(0.0, 1.0, 30)
Z2 = RNG.uniform(0.0, 1.0, 30)


def smooth_vector(x):
    v = np.stack((np.sin(x[:, 0]) * np.cos(x[:, 1]), x[:, 0] * x[:, 1]), axis=1)
    g = np.empty((x.shape[0], 2, 2))
    g[:, 0, 0] = np.cos(x[:, 0]) * np.cos(x[:, 1])
    g[:, 0, 1] = -np.sin(x[:, 0]) * np.sin(x[:, 1])
    g[:, 1, 0] = x[:, 1]
    g[:, 1, 1] = x[:, 0]
    return v, g


def smooth_scalar(x):
    phi = x[:, 0] ** 2 * x[:, 1]
    return phi, np.stack((2.0 * x[:, 0] * x[:, 1], x[:, 0] ** 2), axis=1)


@pytest.fixture
def spaces():
    return DiscreteDeRhamSpaces.build(2, 0, 2)


# ==========================================
# SPACES
# ==========================================

class TestSpaces:
    def test_dimensions(self, spaces):
        assert spaces.v1.dim == 25
        assert spaces.v2[0].shape == (5, 4)
        assert spaces.v2[1].shape == (4, 5)
        assert spaces.v2_dim == 40
        assert spaces.v3.dim == 16
        assert spaces.pressure_space().dim == 9
        assert spaces.n_elements == (2, 2)

    def test_weak_symmetry_field_sizes(self):
        ws = WeakSymSpaces.build(2, 0, 2)
        assert ws.field_sizes == (80, 32, 9)
        assert ws.stress_normal_dofs(Edge.EAST).size == 2 * 4
        assert ws.multiplier_edge_dofs(Edge.SOUTH).size == 3

    def test_normal_dofs_use_matching_component(self, spaces):
        east = spaces.v2_normal_dofs(Edge.EAST)
        north = spaces.v2_normal_dofs(Edge.NORTH)
        assert east.max() < spaces.v2[0].dim
        assert north.min() >= spaces.v2[0].dim

    @pytest.mark.parametrize("p,r", [(2, 2), (1, 1), (3, -1)])
    def test_invalid_pairs(self, p, r):
        with pytest.raises(SpaceParameterError):
            DiscreteDeRhamSpaces.build(p, r, 2)

    def test_no_pressure_at_maximal_regularity(self):
        s = DiscreteDeRhamSpaces.build(3, 2, 2)
        assert s.th_pressure is None
        with pytest.raises(SpaceParameterError):
            s.pressure_space()
        with pytest.raises(SpaceParameterError):
            WeakSymSpaces.build(3, 2, 2)

    def test_weak_symmetry_needs_quadratics(self):
        with pytest.raises(SpaceParameterError):
            WeakSymSpaces.build(1, 0, 2)


# ==========================================
# PULLBACKS
# ==========================================

class TestPullbacks:
    @pytest.mark.parametrize("kind", list(PullbackKind))
    def test_inverse_round_trip(self, kind):
        bundle = eval_geometry(curved_square_map(), Z1, Z2)
        vals = RNG.standard_normal(30) if kind in (PullbackKind.Y1, PullbackKind.Y4) else RNG.standard_normal((30, 2))
        back = pullback_apply(kind, bundle, pullback_apply(kind, bundle, vals), inverse=True)
        np.testing.assert_allclose(back, vals, atol=1e-12)

    def test_row_stacks(self):
        bundle = eval_geometry(curved_square_map(), Z1, Z2)
        rows = RNG.standard_normal((30, 2, 2))
        stacked = pullback_apply(PullbackKind.Y3, bundle, rows)
        np.testing.assert_allclose(stacked[:, 1], pullback_apply(PullbackKind.Y3, bundle, rows[:, 1]))

    def test_degenerate_bundle(self):
        J = np.tile(np.diag([1.0, -1.0]), (2, 1, 1))
        bundle = GeometryBundle(x=np.zeros((2, 2)), J=J, detJ=np.array([-1.0, -1.0]), adjJ=J)
        with pytest.raises(GeometryDegeneracyError):
            pullback_apply(PullbackKind.Y4, bundle, np.ones(2))

    @pytest.mark.parametrize("gmap", [curved_square_map(), curved_square_spline()], ids=["analytic", "spline"])
    def test_commuting_diagram(self, gmap):
        res_div, res_curl = commuting_diagram_residual(gmap, smooth_vector, smooth_scalar, Z1, Z2)
        assert res_div < 1e-12
        assert res_curl < 1e-12


# ==========================================
# STRUCTURE
# ==========================================

class TestStructure:
    @pytest.mark.parametrize("p,r,n", [(2, 0, 3), (3, 1, 3), (3, 0, 2)])
    def test_divergence_inclusion(self, p, r, n):
        assert divergence_inclusion_residual(DiscreteDeRhamSpaces.build(p, r, n)) < 1e-11

    def test_identity_stress_on_curved_square(self):
        spaces = DiscreteDeRhamSpaces.build(2, 0, 2)
        assert identity_stress_residual(spaces, curved_square_map()) < 1e-10

    def test_l2_projection_reproduces_members(self, spaces):
        rule = TensorRule(*(kv.breakpoints for kv in spaces.v1.kvs), 4)
        coll = GridCollocation.on_rule(spaces, curved_square_map(), rule)
        w = coll.physical_weights(rule.weights)
        c = RNG.standard_normal(spaces.v3.dim)
        coef, res = l2_projection(coll.v3, w, coll.v3 @ c)
        np.testing.assert_allclose(coef, c, atol=1e-9)
        assert res < 1e-10
        M = mass_matrix(coll.v3, w)
        assert abs(M - M.T).max() < 1e-14


class TestCollocation:
    def test_v2_matches_single_basis(self, spaces):
        z1 = np.array([0.1, 0.45, 0.8])
        z2 = np.array([0.2, 0.7])
        gmap = curved_square_map()
        coll = GridCollocation(spaces, gmap, z1, z2)
        (vx, vy), div = coll.v2
        pts1, pts2 = np.tile(z1, 2), np.repeat(z2, 3)
        for k in (0, 7, spaces.v2[0].dim + 3):
            bv = physical_basis_eval(spaces, "V2", k, gmap, pts1, pts2)
            np.testing.assert_allclose(bv.value[:, 0], vx[:, k].toarray().ravel(), atol=1e-13)
            np.testing.assert_allclose(bv.value[:, 1], vy[:, k].toarray().ravel(), atol=1e-13)
            np.testing.assert_allclose(bv.derivative, div[:, k].toarray().ravel(), atol=1e-13)

    def test_v1_gradient_matches_single_basis(self, spaces):
        z1 = np.array([0.3, 0.6])
        z2 = np.array([0.25, 0.9])
        gmap = curved_square_map()
        coll = GridCollocation(spaces, gmap, z1, z2)
        value, (gx, gy) = coll.v1
        bv = physical_basis_eval(spaces, "V1", 12, gmap, np.tile(z1, 2), np.repeat(z2, 2))
        np.testing.assert_allclose(bv.value, value[:, 12].toarray().ravel(), atol=1e-13)
        np.testing.assert_allclose(bv.derivative[:, 0], gx[:, 12].toarray().ravel(), atol=1e-13)
        np.testing.assert_allclose(bv.derivative[:, 1], gy[:, 12].toarray().ravel(), atol=1e-13)

    def test_v3_scaling(self, spaces):
        z = np.array([0.5])
        bv = physical_basis_eval(spaces, "V3", 5, curved_square_map(), z, z)
        coll = GridCollocation(spaces, curved_square_map(), z, z)
        assert bv.value[0] == pytest.approx(coll.v3[0, 5])

    def test_unknown_kind(self, spaces):
        with pytest.raises(ValueError):
            physical_basis_eval(spaces, "V7", 0, curved_square_map(), [0.5], [0.5])
