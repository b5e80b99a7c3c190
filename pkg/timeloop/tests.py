import tempfile
import unittest
import weakref
from pathlib import Path
from unittest import mock

import numpy as np

from common.exceptions import SolverError, ValidationError
from forms.geometry import cell_geometry
from forms.models import ModelParams
from mesh.services import build_structured_square, everywhere, tag_boundary
from mms.cases import build_case_mesh, quasistatic_case
from spaces.services import build_layout, element_values, facet_trace_values
from system.models import backward_euler
from system.services import assemble_step_system, solve_step

from .checkpoints import load_checkpoint, save_checkpoint
from .choices import Scheme
from .models import ProblemData, TimeGrid
from .observers import CheckpointObserver, ErrorObserver, MaxPressureObserver, Observer
from .services import elliptic_projection, initialize, l2_projection, run, run_static, step_data


def quasistatic_layout(n=2, degree=1, variant="hdg"):
    case = quasistatic_case(degree=degree, variant=variant)
    return case, build_layout(build_case_mesh(case, n, n), degree, variant)


class CountingObserver(Observer):
    def __init__(self):
        self.started = None
        self.steps = []
        self.previous_times = []

    def start(self, step, state):
        self.started = step

    def __call__(self, step, state, previous):
        self.steps.append(step)
        self.previous_times.append(previous.time)


class TimeGridTests(unittest.TestCase):
    def test_from_step(self):
        grid = TimeGrid.from_step(0.1, 1e-3)
        self.assertEqual(grid.n_steps, 100)
        self.assertAlmostEqual(grid.dt, 1e-3)
        self.assertEqual(len(grid.times()), 101)
        self.assertAlmostEqual(grid.time(50), 0.05)

    def test_rejects_bad_grids(self):
        with self.assertRaises(ValidationError):
            TimeGrid.from_step(0.1, 0.03)
        with self.assertRaises(ValidationError):
            TimeGrid(0.0, 1)
        with self.assertRaises(ValidationError):
            TimeGrid(1.0, 0)


class ProjectionTests(unittest.TestCase):
    def test_l2_projection_reproduces_polynomials(self):
        _, layout = quasistatic_layout(degree=2)
        geometry = cell_geometry(layout.mesh, 2)
        centroids = layout.mesh.cell_coordinates.mean(axis=1)
        cells = np.arange(layout.mesh.n_cells)

        pressure = l2_projection(geometry, lambda x: 1.0 + x[:, 0] - 3.0 * x[:, 1])
        values = element_values(layout, pressure, cells, centroids)
        np.testing.assert_allclose(values, 1.0 + centroids[:, 0] - 3.0 * centroids[:, 1], atol=1e-12)

        vector = l2_projection(geometry, lambda x: np.column_stack([x[:, 0] ** 2, x[:, 0] * x[:, 1]]), "vector")
        values = element_values(layout, vector, cells, centroids)
        np.testing.assert_allclose(values[:, 0], centroids[:, 0] ** 2, atol=1e-12)

    def test_unknown_space(self):
        _, layout = quasistatic_layout()
        with self.assertRaises(ValidationError):
            l2_projection(cell_geometry(layout.mesh, 1), lambda x: x[:, 0], "trace")

    def test_elliptic_projection_of_linear_field(self):
        case, layout = quasistatic_layout()
        matrix = np.array([[0.1, 0.2], [-0.3, 0.05]])
        element, trace = elliptic_projection(
            layout,
            case.params,
            lambda x: x @ matrix.T,
            lambda x: np.broadcast_to(matrix, (len(x), 2, 2)),
        )
        centroids = layout.mesh.cell_coordinates.mean(axis=1)
        values = element_values(layout, element, np.arange(layout.mesh.n_cells), centroids)
        np.testing.assert_allclose(values, centroids @ matrix.T, atol=1e-10)

        facet = np.zeros(layout.n_facet_dofs)
        facet[: layout.n_displacement_trace] = trace
        facets = np.arange(layout.mesh.n_facets)
        midpoints = facet_trace_values(layout, facet, facets, points=np.array([0.5]))[:, 0]
        np.testing.assert_allclose(midpoints, layout.mesh.facet_midpoints @ matrix.T, atol=1e-10)

    def test_elliptic_projection_needs_dirichlet(self):
        mesh = tag_boundary(build_structured_square(2), {"T": everywhere}, {"P": everywhere})
        layout = build_layout(mesh, 1)
        params = ModelParams(E=1.0, nu=0.3, c0=1.0, alpha=0.5, kappa=1.0)
        with self.assertRaises(SolverError):
            elliptic_projection(layout, params, lambda x: x, lambda x: np.broadcast_to(np.eye(2), (len(x), 2, 2)))


class InitializeTests(unittest.TestCase):
    def test_quasistatic_start(self):
        case, layout = quasistatic_layout()
        state = initialize(layout, case.params, case.problem)
        self.assertLessEqual(np.abs(state.u).max(), 1e-14)
        self.assertLessEqual(np.abs(state.u_bar).max(), 1e-14)
        self.assertGreater(np.abs(state.pressure).max(), 0.1)
        self.assertGreater(np.abs(state.z).max(), 0.0)

    def test_zero_problem(self):
        case, layout = quasistatic_layout()
        state = initialize(layout, case.params, ProblemData())
        self.assertEqual(state.max_abs(), 0.0)


class RunTests(unittest.TestCase):
    def test_one_step_matches_solve_step(self):
        case, layout = quasistatic_layout()
        dt = 0.01
        result = run(layout, case.params, TimeGrid(dt, 1), Scheme.BE, case.problem)

        geometry = cell_geometry(layout.mesh, 1)
        start = initialize(layout, case.params, case.problem, geometry)
        system = assemble_step_system(layout, case.params, backward_euler(dt), geometry)
        expected = solve_step(system, step_data(layout, geometry, case.problem, dt), (start,), dt)
        np.testing.assert_allclose(result.final.interior, expected.interior, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(result.final.facet, expected.facet, rtol=1e-12, atol=1e-14)
        self.assertAlmostEqual(result.final.time, dt)

    def test_static_scheme_rejected(self):
        case, layout = quasistatic_layout()
        with self.assertRaises(ValidationError):
            run(layout, case.params, TimeGrid(1.0, 1), Scheme.STATIC, case.problem)

    def test_run_static_solves(self):
        case, layout = quasistatic_layout()
        state = run_static(layout, case.params, case.problem, time=0.5)
        self.assertTrue(state.is_finite())
        self.assertEqual(state.time, 0.5)

    def test_observers_and_states(self):
        case, layout = quasistatic_layout()
        counter, maxima = CountingObserver(), MaxPressureObserver(layout)
        result = run(
            layout, case.params, TimeGrid(0.03, 3), Scheme.BDF2, case.problem,
            observers=[counter, maxima], keep_states=True,
        )
        self.assertEqual(counter.started, 0)
        self.assertEqual(counter.steps, [1, 2, 3])
        np.testing.assert_allclose(counter.previous_times, [0.0, 0.01, 0.02])
        self.assertEqual(len(result.states), 4)
        self.assertEqual(len(maxima.maxima), 3)
        self.assertGreater(maxima.overall, 0.0)
        self.assertIs(result.previous, result.states[-2])

    def test_backward_euler_start_released_before_bdf2(self):
        case, layout = quasistatic_layout()
        systems, alive = [], []

        def tracking(*args, **kwargs):
            alive.append([ref() is not None for ref in systems])
            system = assemble_step_system(*args, **kwargs)
            systems.append(weakref.ref(system))
            return system

        with mock.patch("timeloop.services.assemble_step_system", side_effect=tracking):
            result = run(layout, case.params, TimeGrid(0.03, 3), Scheme.BDF2, case.problem)
        self.assertEqual(alive, [[], [False]])
        self.assertEqual(result.steps, 3)

    def test_error_observer(self):
        case, layout = quasistatic_layout()
        observer = ErrorObserver(layout, case.exact, case.params, 0.01)
        run(layout, case.params, TimeGrid(0.02, 2), Scheme.BDF2, case.problem, observers=[observer])
        self.assertEqual(len(observer.records), 2)
        self.assertGreater(observer.velocity_history, 0.0)
        self.assertTrue(np.isfinite(observer.last.composite_a))


class CheckpointTests(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.directory = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_round_trip(self):
        case, layout = quasistatic_layout()
        result = run(layout, case.params, TimeGrid(0.02, 2), Scheme.BDF2, case.problem)
        path = save_checkpoint(self.directory / "state.npz", layout, 2, result.final, result.previous)
        checkpoint = load_checkpoint(path, layout)
        self.assertEqual(checkpoint.step, 2)
        np.testing.assert_array_equal(checkpoint.state.interior, result.final.interior)
        np.testing.assert_array_equal(checkpoint.previous.facet, result.previous.facet)
        self.assertEqual(checkpoint.state.time, result.final.time)

    def test_other_layout_rejected(self):
        case, layout = quasistatic_layout()
        _, other = quasistatic_layout(n=3)
        path = save_checkpoint(self.directory / "state.npz", layout, 0, initialize(layout, case.params, case.problem))
        with self.assertRaises(ValidationError):
            load_checkpoint(path, other)

    def test_bdf2_restart_is_bit_identical(self):
        case, layout = quasistatic_layout()
        grid = TimeGrid(0.04, 4)
        observer = CheckpointObserver(layout, self.directory, every=2)
        full = run(layout, case.params, grid, Scheme.BDF2, case.problem, observers=[observer])
        self.assertEqual([path.name for path in observer.paths], ["step_00002.npz", "step_00004.npz"])

        checkpoint = load_checkpoint(observer.paths[0], layout)
        restarted = run(
            layout, case.params, grid, Scheme.BDF2, case.problem,
            initial=checkpoint.state, previous=checkpoint.previous, start_step=checkpoint.step,
        )
        self.assertEqual(restarted.steps, 2)
        np.testing.assert_array_equal(restarted.final.interior, full.final.interior)
        np.testing.assert_array_equal(restarted.final.facet, full.final.facet)
