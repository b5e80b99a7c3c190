import unittest

import numpy as np
from pydantic import ValidationError as PydanticValidationError

from mesh.services import build_structured_square, build_topology, on_line, tag_boundary
from refbasis.mapping import REFERENCE_VERTICES
from spaces.choices import TraceField, Variant
from spaces.services import build_layout, project_trace

from .checks import coercivity_check
from .geometry import cell_geometry
from .models import ModelParams
from .norms import local_displacement, local_scalar, norm_q, norm_v
from .services import (
    ah_consistent_load,
    assemble_ah_global,
    assemble_ah_local,
    assemble_bh_local,
    body_load,
    displacement_index,
    gram_v,
    mass_matrices,
    scalar_load,
    scatter,
    strain_matrix,
)

HALF_MU = ModelParams(E=1.25, nu=0.25, c0=0.0, alpha=1.0, kappa=1.0, degree=2)


def reference_cell():
    return build_topology(REFERENCE_VERTICES, [[0, 1, 2]])


def quasistatic_square(n):
    bottom, right, top, left = on_line(1, 0.0), on_line(0, 1.0), on_line(1, 1.0), on_line(0, 0.0)
    return tag_boundary(
        build_structured_square(n),
        {"D": lambda x: bottom(x) | top(x) | left(x), "T": right},
        {"P": lambda x: bottom(x) | right(x), "F": lambda x: top(x) | left(x)},
    )


def displacement_pair(layout, geometry, function):
    """L2 projection of a vector field on cells together with its projected trace."""

    vector_mass, _ = mass_matrices(geometry)
    element = np.linalg.solve(vector_mass, body_load(geometry, function)[..., None])[..., 0]
    dofs, values = project_trace(layout, function, np.arange(layout.mesh.n_facets))
    facet = np.zeros(layout.n_facet_dofs)
    facet[dofs] = values
    return element, facet


def scalar_pair(layout, geometry, function, field):
    _, scalar_mass = mass_matrices(geometry)
    element = np.linalg.solve(scalar_mass, scalar_load(geometry, function)[..., None])[..., 0]
    dofs, values = project_trace(layout, function, np.arange(layout.mesh.n_facets), field)
    facet = np.zeros(layout.n_facet_dofs)
    facet[dofs] = values
    return element, facet


class ModelParamsTests(unittest.TestCase):
    def test_plane_strain_lame(self):
        params = ModelParams(E=1e4, nu=0.4, c0=1e-5, alpha=0.1, kappa=1e-7)
        self.assertAlmostEqual(params.mu, 1e4 / 2.8, places=9)
        incompressible = params.replace(nu=0.49999)
        expected = 1e4 * 0.49999 / ((1.0 + 0.49999) * (1.0 - 2.0 * 0.49999))
        self.assertAlmostEqual(incompressible.lam / expected, 1.0, places=9)
        self.assertGreater(incompressible.lam, 1.66e8)

    def test_default_penalty_scales_with_degree(self):
        params = ModelParams(E=1.0, nu=0.3, c0=0.0, alpha=0.5, kappa=1.0, degree=3)
        self.assertEqual(params.penalty, 90.0)
        self.assertEqual(params.replace(beta=5.0).penalty, 5.0)

    def test_invalid_values_rejected(self):
        base = dict(E=1.0, nu=0.3, c0=0.0, alpha=0.5, kappa=1.0)
        for change in ({"nu": 0.6}, {"nu": 0.5}, {"E": 0.0}, {"kappa": -1.0}, {"c0": -1e-3}, {"alpha": 1.5}, {"degree": 0}):
            with self.assertRaises(PydanticValidationError):
                ModelParams(**{**base, **change})
        with self.assertRaises(PydanticValidationError):
            ModelParams(**base, unknown=1.0)


class LocalFormTests(unittest.TestCase):
    def setUp(self):
        self.layout = build_layout(reference_cell(), 2)
        self.geometry = cell_geometry(self.layout.mesh, 2)
        self.a_h = assemble_ah_local(self.geometry, HALF_MU)[0]
        self.b_h = assemble_bh_local(self.geometry)[0]

    def energy(self, function):
        element, facet = displacement_pair(self.layout, self.geometry, function)
        local = local_displacement(self.layout, element, facet)[0]
        return local @ self.a_h @ local, local

    def test_rigid_translation_in_kernel(self):
        value, _ = self.energy(lambda x: np.tile([0.7, -1.3], (len(x), 1)))
        self.assertAlmostEqual(value, 0.0, delta=1e-12)

    def test_rigid_rotation_in_kernel(self):
        value, _ = self.energy(lambda x: np.column_stack([-x[:, 1], x[:, 0]]))
        self.assertAlmostEqual(value, 0.0, delta=1e-12)

    def test_uniaxial_strain_energy(self):
        value, _ = self.energy(lambda x: np.column_stack([x[:, 0], np.zeros(len(x))]))
        self.assertAlmostEqual(value, 0.5, delta=1e-12)

    def test_symmetric(self):
        np.testing.assert_allclose(self.a_h, self.a_h.T, atol=1e-12 * np.abs(self.a_h).max())

    def test_constant_field_has_no_divergence_pairing(self):
        _, v = self.energy(lambda x: np.tile([2.0, 0.5], (len(x), 1)))
        np.testing.assert_allclose(self.b_h @ v, 0.0, atol=1e-12)

    def test_divergence_of_identity_field(self):
        _, v = self.energy(lambda x: x.copy())
        element, facet = scalar_pair(self.layout, self.geometry, lambda x: np.ones(len(x)), TraceField.TOTAL_PRESSURE)
        q = local_scalar(self.layout, element, facet, TraceField.TOTAL_PRESSURE)[0]
        self.assertAlmostEqual(q @ self.b_h @ v, -1.0, delta=1e-12)

    def test_velocity_role_closed_surface(self):
        element, _ = displacement_pair(self.layout, self.geometry, lambda x: np.tile([0.3, 1.1], (len(x), 1)))
        nk, nq = self.layout.n_cell_basis, self.layout.n_pressure_basis
        q_bar = np.zeros(nq + 3 * self.layout.n_trace)
        q_bar[nq :: self.layout.n_trace] = 1.0
        self.assertAlmostEqual(q_bar @ self.b_h[:, : 2 * nk] @ element[0], 0.0, delta=1e-13)


class GlobalFormTests(unittest.TestCase):
    def test_global_symmetry(self):
        for variant in Variant:
            layout = build_layout(quasistatic_square(3), 2, variant)
            geometry = cell_geometry(layout.mesh, 2, variant.continuous_trace)
            matrix = assemble_ah_global(layout, geometry, HALF_MU)
            difference = abs(matrix - matrix.T).max()
            self.assertLessEqual(difference, 1e-12 * abs(matrix).max())

    def test_consistency_terms_vanish_for_continuous_fields(self):
        layout = build_layout(quasistatic_square(2), 2)
        geometry = cell_geometry(layout.mesh, 2)
        field = lambda x: np.column_stack([x[:, 0] ** 2 - x[:, 1], x[:, 0] * x[:, 1]])
        element, facet = displacement_pair(layout, geometry, field)
        local = local_displacement(layout, element, facet)
        a_h = np.einsum("ci,cij,cj->", local, assemble_ah_local(geometry, HALF_MU), local)
        nk2 = 2 * layout.n_cell_basis
        volume = np.einsum("ci,cij,cj->", element, 2 * HALF_MU.mu * strain_matrix(geometry), element)
        self.assertAlmostEqual(a_h, volume, delta=1e-12 * abs(volume))
        self.assertEqual(local.shape[1], nk2 + 6 * layout.n_trace)

    def test_consistent_load_matches_operator_on_polynomials(self):
        layout = build_layout(quasistatic_square(2), 2)
        geometry = cell_geometry(layout.mesh, 2)
        field = lambda x: np.column_stack([x[:, 0] ** 2 - x[:, 1], x[:, 0] * x[:, 1]])

        def gradient(x):
            out = np.zeros((len(x), 2, 2))
            out[:, 0, 0] = 2.0 * x[:, 0]
            out[:, 0, 1] = -1.0
            out[:, 1, 0] = x[:, 1]
            out[:, 1, 1] = x[:, 0]
            return out

        element, facet = displacement_pair(layout, geometry, field)
        local = local_displacement(layout, element, facet)
        expected = np.einsum("cij,cj->ci", assemble_ah_local(geometry, HALF_MU), local)
        load = ah_consistent_load(geometry, HALF_MU, gradient)
        np.testing.assert_allclose(load, expected, atol=1e-11 * np.abs(expected).max())


class NormTests(unittest.TestCase):
    def test_zero_and_rigid_motion(self):
        layout = build_layout(quasistatic_square(2), 2)
        geometry = cell_geometry(layout.mesh, 2)
        zero = np.zeros((layout.mesh.n_cells, 2 * layout.n_cell_basis))
        self.assertEqual(norm_v(layout, geometry, zero, np.zeros(layout.n_facet_dofs)), 0.0)
        element, facet = displacement_pair(layout, geometry, lambda x: np.column_stack([1.0 - x[:, 1], 2.0 + x[:, 0]]))
        self.assertLess(norm_v(layout, geometry, element, facet, squared=True), 1e-12)
        self.assertLess(norm_v(layout, geometry, element, facet), 1e-6)

    def test_norm_v_hand_value(self):
        layout = build_layout(reference_cell(), 1)
        geometry = cell_geometry(layout.mesh, 1)
        element, _ = displacement_pair(layout, geometry, lambda x: np.column_stack([x[:, 0], np.zeros(len(x))]))
        squared = norm_v(layout, geometry, element, np.zeros(layout.n_facet_dofs), squared=True)
        expected = 0.5 + 1.0 / 3.0 + 1.0 / (3.0 * np.sqrt(2.0))
        self.assertAlmostEqual(squared, expected, delta=1e-12)

    def test_norm_q_values(self):
        layout = build_layout(quasistatic_square(3), 2)
        geometry = cell_geometry(layout.mesh, 2)
        element, _ = scalar_pair(layout, geometry, lambda x: np.ones(len(x)), TraceField.PRESSURE)
        self.assertAlmostEqual(norm_q(layout, geometry, element, np.zeros(layout.n_facet_dofs)), 1.0, delta=1e-12)

        cell = build_layout(reference_cell(), 1)
        cell_geom = cell_geometry(cell.mesh, 1)
        _, facet = scalar_pair(cell, cell_geom, lambda x: np.ones(len(x)), TraceField.PRESSURE)
        squared = norm_q(cell, cell_geom, np.zeros((1, 1)), facet, squared=True)
        self.assertAlmostEqual(squared, np.sqrt(2.0) * (2.0 + np.sqrt(2.0)), delta=1e-12)

    def test_gram_full_rank_after_constraints(self):
        layout = build_layout(quasistatic_square(2), 1)
        geometry = cell_geometry(layout.mesh, 1)
        index = displacement_index(layout)
        size = layout.mesh.n_cells * 2 * layout.n_cell_basis + layout.n_displacement_trace
        gram = scatter(gram_v(geometry), index, index, (size, size)).toarray()
        keep = np.concatenate(
            [np.ones(size - layout.n_displacement_trace, dtype=bool), ~layout.constrained[: layout.n_displacement_trace]]
        )
        restricted = gram[np.ix_(keep, keep)]
        self.assertGreater(np.linalg.eigvalsh(restricted)[0], 1e-10)


class CoercivityTests(unittest.TestCase):
    def test_default_penalty_is_coercive(self):
        layout = build_layout(quasistatic_square(2), 1)
        params = ModelParams(E=1e4, nu=0.2, c0=0.1, alpha=0.1, kappa=1e-2, degree=1)
        report = coercivity_check(layout, params)
        self.assertTrue(report.passed)
        self.assertEqual(report.method, "eigen")

    def test_tiny_penalty_flagged(self):
        layout = build_layout(quasistatic_square(2), 3)
        params = ModelParams(E=1e4, nu=0.2, c0=0.1, alpha=0.1, kappa=1e-2, degree=3, beta=0.01)
        with self.assertLogs("forms.checks", level="WARNING"):
            report = coercivity_check(layout, params)
        self.assertFalse(report.passed)

    def test_rigid_modes_filtered_without_constraints(self):
        layout = build_layout(quasistatic_square(2), 1)
        params = ModelParams(E=1.0, nu=0.3, c0=0.0, alpha=0.5, kappa=1.0, degree=1)
        report = coercivity_check(layout, params, apply_constraints=False)
        self.assertTrue(report.passed)

    def test_sampled_mode(self):
        layout = build_layout(quasistatic_square(2), 2)
        params = ModelParams(E=1.0, nu=0.3, c0=0.0, alpha=0.5, kappa=1.0, degree=2)
        report = coercivity_check(layout, params, n_samples=32, seed=3)
        self.assertEqual(report.method, "sampled")
        self.assertTrue(report.passed)
