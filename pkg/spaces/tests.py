import unittest

import numpy as np

from common.exceptions import ValidationError
from mesh.choices import DisplacementTag
from mesh.services import build_structured_square, everywhere, on_line, tag_boundary
from refbasis.quadrature import edge_quadrature

from .choices import TraceField, Variant
from .services import build_layout, facet_trace_values, prescribed_facet_values, project_trace


def quasistatic_square(n):
    bottom, right, top, left = on_line(1, 0.0), on_line(0, 1.0), on_line(1, 1.0), on_line(0, 0.0)
    return tag_boundary(
        build_structured_square(n),
        {"D": lambda x: bottom(x) | top(x) | left(x), "T": right},
        {"P": lambda x: bottom(x) | right(x), "F": lambda x: top(x) | left(x)},
    )


def all_dirichlet_square(n):
    return tag_boundary(build_structured_square(n), {"D": everywhere}, {"P": everywhere})


class LayoutCountTests(unittest.TestCase):
    def test_two_cell_hdg_counts(self):
        layout = build_layout(build_structured_square(1), 1, Variant.HDG)
        dims = layout.dimensions()
        self.assertEqual(dims["V_h"], 12)
        self.assertEqual(dims["Q_h_pressure"], 2)
        self.assertEqual(dims["Q_h_total_pressure"], 2)
        self.assertEqual(dims["Z_h"], 12)
        self.assertEqual(dims["Vbar_h"], 20)
        self.assertEqual(dims["Qbar_h_pressure"], 10)
        self.assertEqual(layout.n_facet_dofs, 40)

    def test_two_cell_edg_counts(self):
        layout = build_layout(build_structured_square(1), 1, Variant.EDG_HDG)
        self.assertEqual(layout.n_displacement_trace, 8)

    def test_edg_smaller_than_hdg(self):
        mesh = quasistatic_square(3)
        for k in (1, 2, 3):
            hdg = build_layout(mesh, k, Variant.HDG)
            edg = build_layout(mesh, k, Variant.EDG_HDG)
            self.assertEqual(hdg.n_displacement_trace, 2 * (k + 1) * mesh.n_facets)
            self.assertEqual(edg.n_displacement_trace, 2 * (mesh.n_vertices + (k - 1) * mesh.n_facets))
            self.assertLess(edg.n_displacement_trace, hdg.n_displacement_trace)

    def test_degree_zero_rejected(self):
        with self.assertRaises(ValidationError):
            build_layout(build_structured_square(1), 0)

    def test_gap_free_and_deterministic(self):
        mesh = quasistatic_square(2)
        for variant in Variant:
            layout = build_layout(mesh, 2, variant)
            used = np.unique(layout.cell_facet_dofs)
            np.testing.assert_array_equal(used, np.arange(layout.n_facet_dofs))
            again = build_layout(mesh, 2, variant)
            np.testing.assert_array_equal(layout.cell_facet_dofs, again.cell_facet_dofs)
            self.assertEqual(layout.fingerprint(), again.fingerprint())

    def test_free_index(self):
        layout = build_layout(quasistatic_square(2), 1)
        free = layout.free_index[layout.free_dofs]
        np.testing.assert_array_equal(free, np.arange(layout.n_free))
        self.assertTrue(np.all(layout.free_index[layout.constrained_dofs] == -1))


class ConstraintTests(unittest.TestCase):
    def test_all_dirichlet_constrains_boundary_displacement(self):
        mesh = all_dirichlet_square(2)
        layout = build_layout(mesh, 1, Variant.HDG)
        boundary = layout.facet_displacement[mesh.boundary_facets].ravel()
        interior = layout.facet_displacement[mesh.interior_facets].ravel()
        self.assertTrue(layout.constrained[boundary].all())
        self.assertFalse(layout.constrained[interior].any())
        self.assertFalse(layout.constrained[layout.facet_total_pressure.ravel()].any())

    def test_pressure_constraints_follow_flow_tags(self):
        mesh = quasistatic_square(2)
        layout = build_layout(mesh, 2)
        for f in mesh.boundary_facets:
            on_p = mesh.flow_tag(f) == "P"
            self.assertEqual(bool(layout.constrained[layout.facet_pressure[f]].all()), on_p)

    def test_junction_vertex_takes_dirichlet_value(self):
        mesh = quasistatic_square(2)
        layout = build_layout(mesh, 2, Variant.EDG_HDG)
        corner = int(np.flatnonzero(np.all(mesh.vertices == [1.0, 0.0], axis=1))[0])
        self.assertTrue(layout.constrained[corner])
        values = prescribed_facet_values(layout, displacement=lambda x: np.column_stack([1.0 + x[:, 0], x[:, 1]]))
        self.assertAlmostEqual(values[corner], 2.0, delta=1e-12)


class ProjectionTests(unittest.TestCase):
    def test_constant_pressure(self):
        mesh = quasistatic_square(2)
        layout = build_layout(mesh, 3)
        facets = mesh.boundary_facets
        dofs, values = project_trace(layout, lambda x: np.full(len(x), 2.5), facets, TraceField.PRESSURE)
        values = values.reshape(len(facets), -1)
        np.testing.assert_allclose(values[:, 0], 2.5, atol=1e-14)
        np.testing.assert_allclose(values[:, 1:], 0.0, atol=1e-14)

    def test_linear_reproduced(self):
        mesh = quasistatic_square(2)
        linear = lambda x: np.column_stack([0.3 + 2.0 * x[:, 0] - x[:, 1], x[:, 0] * 0.5 + 1.0])
        s = np.linspace(0.0, 1.0, 7)
        for variant in Variant:
            layout = build_layout(mesh, 1, variant)
            facets = np.arange(mesh.n_facets)
            dofs, data = project_trace(layout, linear, facets)
            vector = np.zeros(layout.n_facet_dofs)
            vector[dofs] = data
            traced = facet_trace_values(layout, vector, facets, points=s)
            ends = mesh.vertices[mesh.facets]
            points = ends[:, None, 0] + s[None, :, None] * (ends[:, None, 1] - ends[:, None, 0])
            expected = linear(points.reshape(-1, 2)).reshape(traced.shape)
            np.testing.assert_allclose(traced, expected, atol=1e-13)

    def test_projection_error_decreases_with_degree(self):
        mesh = quasistatic_square(2)
        facets = mesh.boundary_facets
        rule = edge_quadrature(30)
        ends = mesh.vertices[mesh.facets[facets]]
        points = ends[:, None, 0] + rule.points[None, :, None] * (ends[:, None, 1] - ends[:, None, 0])
        exact = np.sin(np.pi * points[..., 0])
        errors = []
        for k in (2, 3):
            layout = build_layout(mesh, k)
            dofs, data = project_trace(layout, lambda x: np.sin(np.pi * x[:, 0]), facets, TraceField.TOTAL_PRESSURE)
            vector = np.zeros(layout.n_facet_dofs)
            vector[dofs] = data
            traced = facet_trace_values(layout, vector, facets, TraceField.TOTAL_PRESSURE, points=rule.points)
            errors.append(np.sqrt(np.sum(mesh.facet_lengths[facets, None] * rule.weights * (traced - exact) ** 2)))
        self.assertGreaterEqual(errors[0] / errors[1], 2.0)

    def test_edg_trace_is_continuous(self):
        mesh = quasistatic_square(3)
        layout = build_layout(mesh, 3, Variant.EDG_HDG)
        vector = np.random.default_rng(7).standard_normal(layout.n_facet_dofs)
        ends = facet_trace_values(layout, vector, np.arange(mesh.n_facets), points=np.array([0.0, 1.0]))
        at_vertex = {}
        for f, (v0, v1) in enumerate(mesh.facets):
            for vertex, value in ((v0, ends[f, 0]), (v1, ends[f, 1])):
                if vertex in at_vertex:
                    np.testing.assert_allclose(value, at_vertex[vertex], atol=1e-13)
                at_vertex.setdefault(vertex, value)

    def test_prescribed_values_only_on_constrained_slots(self):
        layout = build_layout(quasistatic_square(2), 2)
        values = prescribed_facet_values(
            layout, displacement=lambda x: np.ones((len(x), 2)), pressure=lambda x: np.ones(len(x))
        )
        self.assertTrue(np.all(values[~layout.constrained] == 0.0))
        self.assertTrue(np.any(values[layout.constrained] != 0.0))
        dirichlet = layout.facet_displacement[layout.mesh.tagged_facets(displacement=DisplacementTag.DIRICHLET)]
        np.testing.assert_allclose(values[dirichlet[:, :, 0]], 1.0, atol=1e-14)
