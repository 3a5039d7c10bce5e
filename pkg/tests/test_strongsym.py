"""
STRONG SYMMETRY TEST SUITE
============================
Tests the integral-corrected stress and displacement transformations and the
strongly symmetric mixed system.

COVERS:
  - Transforms reduce to the identity on the unit square
  - Y3, Y2G1 and Y2 are inverted by their inverse transforms on the curved square
  - Divergence compatibility div^ Y2(S) = Y3(div S), zero west traction kept by Y2G1
  - Parametric divergence preimage (div^ tau~ = v, zero west trace)
  - Symmetric space dimensions and (p, r) validation
  - Assembly: boundary variants, patch count, linear displacements reproduced exactly

USAGE:
  pytest tests/test_strongsym.py -v
"""
import numpy as np
import pytest

from modules.core.exceptions import BoundaryLayoutError, ConformityError, SpaceParameterError
from modules.elasticity.boundary import BoundarySpec
from modules.elasticity.material import IsotropicMaterial, apply_elasticity
from modules.elasticity.strong_assembly import (
    DIRICHLET_VARIANT,
    WEST_TRACTION_VARIANT,
    StrongSpacePair,
    assemble_strong_symmetry,
    divergence_preimage,
    evaluate_strong_fields,
    parametric_displacement,
    parametric_fields,
    strong_basis_eval,
)
from modules.elasticity.strongsym import (
    TransformContext,
    parametric_points,
    y2_apply,
    y2_inverse,
    y2g1_apply,
    y2g1_inverse,
    y3_apply,
    y3_inverse,
)
from modules.geometry.maps import affine_map, curved_square_map, identity_map
from modules.geometry.multipatch import TRACTION, build_multipatch, single_patch
from modules.solve.solver import solve_direct

RNG = np.random.default_rng(13)
Z1 = RNG.uniform(0.05, 0.95, 6)
Z2 = RNG.uniform(0.05, 0.95, 6)

MATERIAL = IsotropicMaterial(2.0, 1.0)
A_GRAD = np.array([[0.4, 0.1], [-0.3, 0.2]])
SIGMA = apply_elasticity(MATERIAL, A_GRAD)


def sym_field(x):
    out = np.empty((x.shape[0], 2, 2))
    out[:, 0, 0] = np.sin(x[:, 0]) + x[:, 1]
    out[:, 0, 1] = out[:, 1, 0] = x[:, 0] * x[:, 1]
    out[:, 1, 1] = np.cos(x[:, 1]) - x[:, 0] ** 2
    return out


def div_sym_field(x):
    return np.stack((np.cos(x[:, 0]) + x[:, 0], x[:, 1] - np.sin(x[:, 1])), axis=-1)


def west_free_field(x):
    """Symmetric field with S n = 0 on x = 0, the west edge of the curved square."""
    out = np.empty((x.shape[0], 2, 2))
    out[:, 0, 0] = x[:, 0] * np.sin(x[:, 1])
    out[:, 0, 1] = out[:, 1, 0] = x[:, 0] * (1.0 + x[:, 1])
    out[:, 1, 1] = np.cos(x[:, 1]) + x[:, 0]
    return out


def div_west_free_field(x):
    return np.stack((np.sin(x[:, 1]) + x[:, 0], 1.0 + x[:, 1] - np.sin(x[:, 1])), axis=-1)


def vec_field(x):
    return np.stack((np.exp(0.5 * x[:, 0]) * x[:, 1], 1.0 + x[:, 0] - x[:, 1] ** 2), axis=-1)


def parametric_divergence(transform, z1, z2, step=1e-5):
    """Row divergence in zeta of a parametric stress field, by central differences."""
    d1 = (transform(z1 + step, z2) - transform(z1 - step, z2)) / (2.0 * step)
    d2 = (transform(z1, z2 + step) - transform(z1, z2 - step)) / (2.0 * step)
    return d1[:, :, 0] + d2[:, :, 1]


@pytest.fixture(scope="module")
def curved_ctx():
    return TransformContext.uniform(curved_square_map(), n_elements=4, npts=8)


# ==========================================
# TRANSFORMS
# ==========================================

class TestTransforms:
    def test_identity_map(self):
        ctx = TransformContext.uniform(identity_map(), n_elements=2, npts=4)
        x = np.stack((Z1, Z2), axis=1)
        np.testing.assert_allclose(y2g1_apply(ctx, sym_field, Z1, Z2), sym_field(x), atol=1e-13)
        np.testing.assert_allclose(y2_apply(ctx, sym_field, Z1, Z2), sym_field(x), atol=1e-13)
        np.testing.assert_allclose(y3_apply(ctx, vec_field, Z1, Z2), vec_field(x), atol=1e-13)

    def test_y3_round_trip(self, curved_ctx):
        forward = lambda a, b: y3_apply(curved_ctx, vec_field, a, b)
        x = curved_square_map()(Z1, Z2)
        np.testing.assert_allclose(y3_inverse(curved_ctx, forward, Z1, Z2), vec_field(x), atol=1e-8)

    def test_y2g1_round_trip(self, curved_ctx):
        forward = lambda a, b: y2g1_apply(curved_ctx, sym_field, a, b)
        x = curved_square_map()(Z1, Z2)
        np.testing.assert_allclose(y2g1_inverse(curved_ctx, forward, Z1, Z2), sym_field(x), atol=1e-8)

    def test_y2_round_trip(self, curved_ctx):
        forward = lambda a, b: y2_apply(curved_ctx, sym_field, a, b)
        x = curved_square_map()(Z1, Z2)
        np.testing.assert_allclose(y2_inverse(curved_ctx, forward, Z1, Z2), sym_field(x), atol=1e-8)

    def test_transformed_stress_stays_symmetric(self, curved_ctx):
        S = y2g1_apply(curved_ctx, sym_field, Z1, Z2)
        np.testing.assert_allclose(S[:, 0, 1], S[:, 1, 0], atol=1e-13)

    def test_y2_divergence_compatible(self, curved_ctx):
        div_hat = parametric_divergence(lambda a, b: y2_apply(curved_ctx, sym_field, a, b), Z1, Z2)
        expected = y3_apply(curved_ctx, div_sym_field, Z1, Z2)
        np.testing.assert_allclose(div_hat, expected, atol=1e-6)

    def test_y2g1_divergence_compatible_with_free_west_edge(self, curved_ctx):
        div_hat = parametric_divergence(lambda a, b: y2g1_apply(curved_ctx, west_free_field, a, b), Z1, Z2)
        expected = y3_apply(curved_ctx, div_west_free_field, Z1, Z2)
        np.testing.assert_allclose(div_hat, expected, atol=1e-6)

    def test_y2g1_keeps_free_west_edge(self, curved_ctx):
        z2 = np.linspace(0.0, 1.0, 20)
        x = curved_square_map()(np.zeros_like(z2), z2)
        np.testing.assert_allclose(west_free_field(x)[:, :, 0], 0.0, atol=1e-15)
        S = y2g1_apply(curved_ctx, west_free_field, np.zeros_like(z2), z2)
        np.testing.assert_allclose(S[:, :, 0], 0.0, atol=1e-10)

    def test_parametric_points(self, curved_ctx):
        x = curved_square_map()(Z1, Z2)
        zeta = parametric_points(curved_ctx, x)
        np.testing.assert_allclose(zeta, np.stack((Z1, Z2), axis=1), atol=1e-10)


# ==========================================
# SYMMETRIC SPACES
# ==========================================

class TestSpacePair:
    def test_dimensions(self):
        pair = StrongSpacePair.build(2, 1, 2)
        assert pair.s11.shape == (5, 3)
        assert pair.s12.shape == (4, 4)
        assert pair.s22.shape == (3, 5)
        assert pair.stress_dim == 15 + 16 + 15
        assert pair.displacement_dim == 2 * (4 * 3)

    @pytest.mark.parametrize("p,r", [(2, 0), (2, 2), (3, 3)])
    def test_invalid_pairs(self, p, r):
        with pytest.raises(SpaceParameterError):
            StrongSpacePair.build(p, r, 2)

    def test_west_traction_columns(self):
        pair = StrongSpacePair.build(3, 1, 3)
        kept = pair.stress_columns(WEST_TRACTION_VARIANT)
        assert kept.size == pair.stress_dim - pair.west_dofs().size
        assert pair.stress_columns(DIRICHLET_VARIANT).size == pair.stress_dim

    def test_divergence_preimage(self):
        pair = StrongSpacePair.build(3, 1, 3)
        v1 = RNG.standard_normal(pair.u1.dim)
        v2 = RNG.standard_normal(pair.u2.dim)
        tau = divergence_preimage(pair, v1, v2)
        grid = np.linspace(0.0, 1.0, 7)
        field, div = parametric_fields(pair, tau, grid, grid)
        np.testing.assert_allclose(div, parametric_displacement(pair, v1, v2, grid, grid), atol=1e-10)
        west = parametric_fields(pair, tau, np.array([0.0]), grid)[0]
        np.testing.assert_allclose(west[:, :, 0], 0.0, atol=1e-12)

    def test_basis_index_checked(self):
        pair = StrongSpacePair.build(2, 1, 2)
        ctx = TransformContext.uniform(identity_map(), 2, 4)
        with pytest.raises(IndexError):
            strong_basis_eval(pair, ctx, pair.stress_dim, [0.5], [0.5])


# ==========================================
# ASSEMBLY
# ==========================================

class TestStrongAssembly:
    @pytest.fixture
    def pair(self):
        return StrongSpacePair.build(2, 1, 2)

    def test_multipatch_rejected(self, pair):
        topo = build_multipatch({
            "patches": [identity_map(), affine_map(origin=(1.0, 0.0), name="right")],
            "interfaces": [(0, "EAST", 1, "WEST")],
        })
        with pytest.raises(ConformityError):
            assemble_strong_symmetry(pair, topo, MATERIAL, BoundarySpec.from_topology(topo))

    def test_east_traction_rejected(self, pair):
        topo = single_patch(identity_map(), {(0, "east"): TRACTION})
        with pytest.raises(BoundaryLayoutError):
            assemble_strong_symmetry(pair, topo, MATERIAL, BoundarySpec.from_topology(topo))

    def test_loaded_west_traction_rejected(self, pair):
        topo = single_patch(identity_map(), {(0, "west"): TRACTION})
        spec = BoundarySpec.from_topology(topo, traction=lambda x: np.ones((np.asarray(x).shape[0], 2)))
        with pytest.raises(BoundaryLayoutError):
            assemble_strong_symmetry(pair, topo, MATERIAL, spec)

    def test_free_west_edge_variant(self, pair):
        topo = single_patch(identity_map(), {(0, "west"): TRACTION})
        system = assemble_strong_symmetry(pair, topo, MATERIAL, BoundarySpec.from_topology(topo))
        assert system.meta["variant"] == WEST_TRACTION_VARIANT
        assert system.field_sizes[0] == pair.stress_dim - pair.west_dofs().size

    def test_linear_displacement_reproduced(self, pair):
        topo = single_patch(identity_map())
        spec = BoundarySpec.from_topology(topo, displacement=lambda x: np.asarray(x) @ A_GRAD.T)
        system = assemble_strong_symmetry(pair, topo, MATERIAL, spec)
        assert system.asymmetry() < 1e-12
        report = solve_direct(system)
        grid = np.array([0.15, 0.5, 0.85])
        fields = evaluate_strong_fields(system, report.solution, grid, grid)
        np.testing.assert_allclose(fields["sigma"], np.broadcast_to(SIGMA, fields["sigma"].shape), atol=1e-9)
        np.testing.assert_allclose(fields["u"], fields["x"] @ A_GRAD.T, atol=1e-9)
        np.testing.assert_allclose(fields["div_sigma"], 0.0, atol=1e-9)
