import unittest

import numpy as np

from common.exceptions import ConfigError
from forms.models import ModelParams
from mesh.choices import DisplacementTag, FlowTag
from forms.services import boundary_samples
from mesh.services import segment_measure
from timeloop.choices import Scheme

from .cases import (
    CANTILEVER_LINES,
    FOOTING_HALF_WIDTH,
    FOOTING_LOAD,
    build_case_mesh,
    cantilever_case,
    cantilever_traction,
    footing_case,
    footing_traction,
    get_case,
    manufactured_case,
    mesh_sequence,
    quasistatic_case,
    static_case,
    with_params,
)
from .models import ExactSolution


def random_points(n=100, seed=7):
    return np.random.default_rng(seed).uniform(0.0, 1.0, size=(n, 2))


class ExactSolutionTests(unittest.TestCase):
    def test_lame_parameters(self):
        params = static_case(E=1e4, nu=0.49999).params
        self.assertGreater(params.lam, 1.6e8)
        self.assertLess(params.lam, 1.7e8)
        self.assertAlmostEqual(params.mu, 1e4 / (2 * 1.49999))

    def test_symbolic_residuals(self):
        points = random_points()
        for case in (static_case(), static_case(E=1.0, nu=0.49999), quasistatic_case()):
            for time in (0.0, 0.05):
                residuals = case.exact.original_form_residuals(points, time)
                self.assertLessEqual(residuals["f"], 1e-8, case.name)
                self.assertLessEqual(residuals["g"], 1e-8, case.name)

    def test_finite_difference_residuals(self):
        points = random_points(seed=11)
        for case in (static_case(), quasistatic_case()):
            residuals = case.exact.numeric_residuals(points, 0.05)
            self.assertLessEqual(residuals["f"], 1e-7, case.name)
            self.assertLessEqual(residuals["g"], 1e-7, case.name)

    def test_quasistatic_starts_at_rest(self):
        exact = quasistatic_case().exact
        points = random_points()
        np.testing.assert_allclose(exact.displacement(points, 0.0), 0.0, atol=1e-15)
        self.assertGreater(np.abs(exact.pressure(points, 0.0)).max(), 0.1)

    def test_shapes(self):
        exact = quasistatic_case().exact
        points = random_points(5)
        self.assertEqual(exact.displacement(points, 0.1).shape, (5, 2))
        self.assertEqual(exact.stress(points, 0.1).shape, (5, 2, 2))
        self.assertEqual(exact.pressure(points, 0.1).shape, (5,))
        normals = np.tile([1.0, 0.0], (5, 1))
        np.testing.assert_allclose(exact.traction(points, normals, 0.1), exact.stress(points, 0.1)[:, :, 0])
        np.testing.assert_allclose(exact.flux(points, normals, 0.1), exact.velocity(points, 0.1)[:, 0])

    def test_total_pressure_definition(self):
        params = ModelParams(E=2.0, nu=0.25, c0=0.5, alpha=0.5, kappa=2.0)
        exact = ExactSolution(("x*y", "y**2"), "x", params, static=True)
        point = np.array([[0.5, 0.5]])
        # div u = y + 2 y
        expected = -params.lam * 1.5 + params.alpha * 0.5
        np.testing.assert_allclose(exact.total_pressure(point, 0.0), [expected])
        np.testing.assert_allclose(exact.velocity(point, 0.0), [[-2.0, 0.0]])

    def test_constant_entries(self):
        params = ModelParams(E=1.0, nu=0.3, c0=1.0, alpha=1.0, kappa=1.0)
        exact = ExactSolution(("x", "0"), "1", params)
        gradient = exact.displacement_gradient(random_points(3), 0.0)
        np.testing.assert_allclose(gradient, np.tile([[1.0, 0.0], [0.0, 0.0]], (3, 1, 1)))


class CaseTests(unittest.TestCase):
    def test_registry(self):
        self.assertEqual(get_case("static_mms").name, "static")
        self.assertEqual(get_case("quasistatic", degree=2).params.degree, 2)
        with self.assertRaises(ConfigError):
            get_case("terzaghi")

    def test_schemes(self):
        self.assertTrue(static_case().is_static)
        self.assertIs(quasistatic_case().scheme, Scheme.BDF2)
        self.assertFalse(footing_case().is_static)

    def test_unit_square_partitions(self):
        mesh = build_case_mesh(quasistatic_case(), 4, 4)
        self.assertAlmostEqual(segment_measure(mesh, displacement=DisplacementTag.DIRICHLET), 3.0)
        self.assertAlmostEqual(segment_measure(mesh, displacement=DisplacementTag.TRACTION), 1.0)
        self.assertAlmostEqual(segment_measure(mesh, flow=FlowTag.PRESSURE), 2.0)
        self.assertAlmostEqual(segment_measure(mesh, flow=FlowTag.FLUX), 2.0)

    def test_mesh_sequence(self):
        meshes = mesh_sequence(quasistatic_case(), 3, 1)
        self.assertEqual([mesh.n_cells for mesh in meshes], [2, 8, 32])
        self.assertAlmostEqual(segment_measure(meshes[-1], displacement=DisplacementTag.TRACTION), 1.0)

    def test_lone_subdivision_applies_to_both_sides(self):
        self.assertEqual(build_case_mesh(cantilever_case(), 2).n_cells, 8)
        self.assertEqual(build_case_mesh(cantilever_case(), ny=3).n_cells, 18)
        self.assertEqual(build_case_mesh(cantilever_case(), 2, 1).n_cells, 4)
        self.assertEqual(build_case_mesh(cantilever_case()).n_cells, 128)

    def test_footing_geometry(self):
        case = footing_case(nx=6, ny=3)
        mesh = build_case_mesh(case)
        loaded = segment_measure(
            mesh,
            predicate=lambda points: np.abs(points[:, 0]) <= FOOTING_HALF_WIDTH,
            displacement=DisplacementTag.TRACTION,
        )
        self.assertAlmostEqual(loaded, 100.0 / 3.0)
        self.assertAlmostEqual(segment_measure(mesh, displacement=DisplacementTag.TRACTION), 100.0)
        self.assertEqual(mesh.tagged_facets(flow=FlowTag.FLUX).size, 0)
        self.assertAlmostEqual(segment_measure(mesh, flow=FlowTag.PRESSURE), 350.0)

    def test_footing_traction(self):
        points = np.array([[0.0, 75.0], [40.0, 75.0], [0.0, 0.0]])
        normals = np.array([[0.0, 1.0], [0.0, 1.0], [0.0, -1.0]])
        np.testing.assert_allclose(footing_traction(points, normals, 1.0), [[0.0, -1e4], [0.0, 0.0], [0.0, 0.0]])

    def test_footing_load_edges_inside_facets(self):
        mesh = build_case_mesh(footing_case())
        top = mesh.tagged_facets(displacement=DisplacementTag.TRACTION)
        ends = mesh.vertices[mesh.facets[top]][:, :, 0]
        self.assertFalse(np.any(np.isclose(np.abs(ends), FOOTING_HALF_WIDTH)))
        _, points, weights, normals = boundary_samples(mesh, top, 6)
        values = footing_traction(points.reshape(-1, 2), normals.reshape(-1, 2), 1.0).reshape(points.shape)
        total = float(np.einsum("fq,fq->", weights, values[..., 1]))
        spacing = 100.0 / 64
        self.assertLess(abs(total + FOOTING_LOAD * 2.0 * FOOTING_HALF_WIDTH), FOOTING_LOAD * 2.0 * spacing)
        np.testing.assert_allclose(values[..., 0], 0.0)

    def test_cantilever(self):
        case = cantilever_case()
        mesh = build_case_mesh(case)
        self.assertEqual(mesh.n_cells, 128)
        self.assertEqual(case.params.c0, 0.0)
        self.assertEqual(case.line_samples, CANTILEVER_LINES)
        self.assertEqual(mesh.tagged_facets(flow=FlowTag.PRESSURE).size, 0)
        self.assertAlmostEqual(segment_measure(mesh, displacement=DisplacementTag.DIRICHLET), 1.0)
        points = np.array([[0.5, 1.0], [1.0, 0.5], [0.5, 0.0]])
        normals = np.array([[0.0, 1.0], [1.0, 0.0], [0.0, -1.0]])
        np.testing.assert_allclose(cantilever_traction(points, normals, 0.0), [[0.0, -1.0], [0.0, 0.0], [0.0, 0.0]])

    def test_with_params_rederives_loads(self):
        case = quasistatic_case()
        changed = with_params(case, case.params.replace(kappa=1.0))
        points = random_points(10)
        np.testing.assert_allclose(changed.exact.displacement(points, 0.1), case.exact.displacement(points, 0.1))
        self.assertFalse(np.allclose(changed.exact.source(points, 0.1), case.exact.source(points, 0.1)))
        self.assertLessEqual(changed.exact.original_form_residuals(points, 0.1)["g"], 1e-8)

    def test_manufactured_case(self):
        params = ModelParams(E=1.0, nu=0.3, c0=1.0, alpha=0.5, kappa=1.0)
        case = manufactured_case(("t*x", "0"), "x*y", params)
        self.assertIs(case.scheme, Scheme.BDF2)
        with self.assertRaises(ConfigError):
            manufactured_case(("x +* y", "0"), "x", params)
