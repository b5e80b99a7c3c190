import unittest
from math import factorial

import numpy as np

from common.exceptions import MeshError, QuadratureError

from .basis import EdgeBasis, LagrangeEdgeBasis, TriangleBasis, gauss_lobatto_nodes
from .mapping import REFERENCE_VERTICES, affine_map, affine_maps
from .quadrature import edge_quadrature, triangle_quadrature
from .tables import reference_tables


def monomial_integral(a, b):
    return factorial(a) * factorial(b) / factorial(a + b + 2)


class QuadratureTests(unittest.TestCase):
    def test_area(self):
        self.assertAlmostEqual(triangle_quadrature(0).integrate(np.ones(1)), 0.5, delta=1e-15)

    def test_second_moment(self):
        rule = triangle_quadrature(2)
        self.assertAlmostEqual(rule.integrate(rule.points[:, 0] ** 2), 1.0 / 12.0, delta=1e-15)

    def test_exactness_all_monomials(self):
        for exactness in (1, 2, 3, 5, 8, 11):
            rule = triangle_quadrature(exactness)
            self.assertTrue(np.all(rule.weights > 0.0))
            x, y = rule.points[:, 0], rule.points[:, 1]
            for a in range(exactness + 1):
                for b in range(exactness + 1 - a):
                    exact = monomial_integral(a, b)
                    got = rule.integrate(x**a * y**b)
                    self.assertLess(abs(got - exact) / exact, 1e-13, (exactness, a, b))

    def test_edge_rule(self):
        self.assertAlmostEqual(edge_quadrature(1).integrate(edge_quadrature(1).points), 0.5)
        rule = edge_quadrature(5)
        self.assertEqual(len(rule), 3)
        self.assertAlmostEqual(rule.integrate(rule.points**5), 1.0 / 6.0, delta=1e-14)

    def test_out_of_range(self):
        with self.assertRaises(QuadratureError):
            triangle_quadrature(-1)
        with self.assertRaises(QuadratureError):
            triangle_quadrature(1000)

    def test_rules_are_cached_and_frozen(self):
        rule = triangle_quadrature(6)
        self.assertIs(rule, triangle_quadrature(6))
        with self.assertRaises(ValueError):
            rule.weights[0] = 1.0


class TriangleBasisTests(unittest.TestCase):
    def test_orthonormal(self):
        for degree in range(5):
            basis = TriangleBasis(degree)
            rule = triangle_quadrature(2 * degree)
            values = basis.values(rule.points)
            gram = values.T @ (rule.weights[:, None] * values)
            np.testing.assert_allclose(gram, np.eye(basis.dimension), atol=1e-12)

    def test_reproduces_monomials(self):
        degree = 3
        basis = TriangleBasis(degree)
        rule = triangle_quadrature(2 * degree)
        samples = np.random.default_rng(0).random((20, 2)) * 0.5
        for a in range(degree + 1):
            for b in range(degree + 1 - a):
                coefficients = basis.values(rule.points).T @ (
                    rule.weights * rule.points[:, 0] ** a * rule.points[:, 1] ** b
                )
                rebuilt = basis.values(samples) @ coefficients
                np.testing.assert_allclose(rebuilt, samples[:, 0] ** a * samples[:, 1] ** b, atol=1e-12)

    def test_lower_degree_prefix(self):
        points = triangle_quadrature(6).points
        np.testing.assert_allclose(
            TriangleBasis(3).values(points)[:, :6], TriangleBasis(2).values(points), atol=1e-14
        )

    def test_gradients_match_finite_differences(self):
        basis = TriangleBasis(3)
        points = np.array([[0.2, 0.3], [0.6, 0.1], [0.05, 0.9], [1.0 / 3.0, 1.0 / 3.0]])
        step = 1e-6
        gradients = basis.gradients(points)
        for axis in range(2):
            shift = np.zeros(2)
            shift[axis] = step
            fd = (basis.values(points + shift) - basis.values(points - shift)) / (2.0 * step)
            np.testing.assert_allclose(gradients[..., axis], fd, atol=1e-5)

    def test_gradients_at_top_vertex_are_finite(self):
        self.assertTrue(np.all(np.isfinite(TriangleBasis(3).gradients([[0.0, 1.0]]))))


class EdgeBasisTests(unittest.TestCase):
    def test_orthonormal(self):
        rule = edge_quadrature(8)
        values = EdgeBasis(4).values(rule.points)
        np.testing.assert_allclose(values.T @ (rule.weights[:, None] * values), np.eye(5), atol=1e-12)

    def test_derivatives(self):
        basis = EdgeBasis(4)
        s = np.linspace(0.1, 0.9, 7)
        fd = (basis.values(s + 1e-6) - basis.values(s - 1e-6)) / 2e-6
        np.testing.assert_allclose(basis.derivatives(s), fd, atol=1e-5)

    def test_lagrange_nodes(self):
        for degree in (1, 2, 3):
            basis = LagrangeEdgeBasis(degree)
            np.testing.assert_allclose(basis.values(basis.nodes), np.eye(degree + 1), atol=1e-14)
            self.assertEqual(basis.nodes[0], 0.0)
            self.assertEqual(basis.nodes[-1], 1.0)
            s = np.linspace(0.0, 1.0, 9)
            np.testing.assert_allclose(basis.values(s).sum(axis=1), 1.0, atol=1e-14)
            np.testing.assert_allclose(basis.derivatives(s).sum(axis=1), 0.0, atol=1e-12)

    def test_gauss_lobatto_symmetric(self):
        nodes = gauss_lobatto_nodes(3)
        np.testing.assert_allclose(nodes + nodes[::-1], 1.0, atol=1e-15)


class AffineMapTests(unittest.TestCase):
    def test_identity(self):
        mapping = affine_map(REFERENCE_VERTICES)
        np.testing.assert_array_equal(mapping.jacobian, np.eye(2))
        self.assertEqual(mapping.det, 1.0)

    def test_scaled_cell(self):
        h = 0.25
        mapping = affine_map([[0.0, 0.0], [h, 0.0], [0.0, h]])
        self.assertAlmostEqual(mapping.det, h * h)

    def test_linear_gradient(self):
        vertices = np.array([[0.3, 0.1], [1.2, 0.4], [0.5, 1.1]])
        mapping = affine_map(vertices)
        basis = TriangleBasis(1)
        rule = triangle_quadrature(3)
        # coefficients of x1 in the P1 basis, by L2 projection on the reference cell
        physical = mapping.to_physical(rule.points)
        values = basis.values(rule.points)
        coefficients = values.T @ (rule.weights * physical[:, 0])
        gradient = mapping.physical_gradients(basis.gradients(rule.points)).transpose(0, 2, 1) @ coefficients
        np.testing.assert_allclose(gradient, np.tile([1.0, 0.0], (len(rule), 1)), atol=1e-13)
        np.testing.assert_allclose(mapping.to_reference(physical), rule.points, atol=1e-14)

    def test_negative_orientation(self):
        with self.assertRaises(MeshError):
            affine_map([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
        with self.assertRaises(MeshError):
            affine_maps(np.array([[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]]))

    def test_batched_matches_single(self):
        cells = np.array([[[0.0, 0.0], [1.0, 0.2], [0.1, 0.7]], [[1.0, 1.0], [2.0, 1.5], [1.0, 3.0]]])
        jacobian, inverse, det = affine_maps(cells)
        for c in range(2):
            single = affine_map(cells[c])
            np.testing.assert_allclose(jacobian[c], single.jacobian)
            np.testing.assert_allclose(inverse[c], single.inverse_jacobian, atol=1e-14)
            self.assertAlmostEqual(det[c], single.det)


class ReferenceTableTests(unittest.TestCase):
    def test_face_points_lie_on_edges(self):
        tables = reference_tables(2)
        edge0 = tables.face_points[0]
        np.testing.assert_allclose(edge0.sum(axis=1), 1.0, atol=1e-15)
        np.testing.assert_allclose(tables.face_points[1][:, 0], 0.0, atol=1e-15)
        np.testing.assert_allclose(tables.face_points[2][:, 1], 0.0, atol=1e-15)

    def test_flipped_trace(self):
        tables = reference_tables(3, continuous_trace=True)
        np.testing.assert_allclose(
            tables.displacement_trace[1], tables.displacement_trace[0][::-1], atol=1e-14
        )
        self.assertEqual(tables.n_cell, 10)
        self.assertEqual(tables.n_pressure, 6)
        self.assertEqual(tables.n_trace, 4)
