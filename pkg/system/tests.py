import unittest

import numpy as np

from common.exceptions import AssemblyError, ValidationError
from forms.geometry import cell_geometry
from forms.models import ModelParams
from forms.services import body_load, local_blocks, scalar_load
from mesh.services import build_structured_square, everywhere, on_line, tag_boundary
from mms.cases import build_case_mesh, cantilever_case
from poro_hdg import settings
from spaces.choices import Variant
from spaces.services import build_layout, prescribed_facet_values
from timeloop.services import step_data

from .checks import (
    condensation_oracle,
    divergence_conformity_report,
    infsup_estimate,
    infsup_sequence,
    random_step_data,
    zero_data_check,
)
from .models import ResidualReport, SolutionState, StepData, backward_euler, bdf2, static
from .services import (
    assemble_step_system,
    local_indices,
    local_operator,
    solve_cells,
    solve_monolithic,
    solve_step,
)


def quasistatic_square(n):
    bottom, right, top, left = on_line(1, 0.0), on_line(0, 1.0), on_line(1, 1.0), on_line(0, 0.0)
    return tag_boundary(
        build_structured_square(n),
        {"D": lambda x: bottom(x) | top(x) | left(x), "T": right},
        {"P": lambda x: bottom(x) | right(x), "F": lambda x: top(x) | left(x)},
    )


def moderate_params(degree):
    return ModelParams(E=10.0, nu=0.3, c0=0.5, alpha=0.8, kappa=1.0, degree=degree)


def smooth_data(layout):
    geometry = cell_geometry(layout.mesh, layout.degree, layout.variant.continuous_trace)
    return StepData(
        body=body_load(geometry, lambda x: np.column_stack([np.sin(x[:, 0]), np.cos(x[:, 1])])),
        source=scalar_load(geometry, lambda x: x[:, 0] * x[:, 1]),
        facet_load=np.zeros(layout.n_facet_dofs),
        prescribed=prescribed_facet_values(
            layout,
            displacement=lambda x: 0.1 * x,
            pressure=lambda x: x[:, 0] + x[:, 1],
        ),
    )


class TimeWeightTests(unittest.TestCase):
    def test_schemes(self):
        self.assertEqual(backward_euler(0.5).leading, 2.0)
        self.assertEqual(backward_euler(0.5).history, (2.0,))
        self.assertEqual(bdf2(0.5).leading, 3.0)
        self.assertEqual(bdf2(0.5).history, (4.0, -1.0))
        self.assertEqual(static().history, ())


class LocalOperatorTests(unittest.TestCase):
    def setUp(self):
        self.layout = build_layout(quasistatic_square(1), 2)
        self.params = moderate_params(2)
        geometry = cell_geometry(self.layout.mesh, 2)
        self.operator = local_operator(self.layout, local_blocks(geometry, self.params), self.params, backward_euler(0.1))

    def test_displacement_block_symmetric(self):
        index = local_indices(self.layout)["displacement"]
        block = self.operator[:, index[:, None], index[None, :]]
        np.testing.assert_allclose(block, block.transpose(0, 2, 1), atol=1e-12)

    def test_coupled_operator_not_symmetric(self):
        self.assertGreater(np.abs(self.operator - self.operator.transpose(0, 2, 1)).max(), 1e-3)

    def test_index_blocks_partition_cell_vector(self):
        index = local_indices(self.layout)
        covered = np.concatenate(
            [index["displacement"], index["total_pressure_pair"], index["z"], index["pressure_pair"]]
        )
        size = self.layout.element_size + self.layout.local_facet_size
        self.assertEqual(sorted(covered.tolist()), list(range(size)))


class SolveCellsTests(unittest.TestCase):
    def test_singular_cell_reported(self):
        matrices = np.stack([np.eye(3), np.zeros((3, 3)), np.eye(3)])
        with self.assertRaises(AssemblyError) as caught:
            solve_cells(matrices, np.ones((3, 3, 1)))
        self.assertEqual(caught.exception.cell, 1)


class CondensedSolveTests(unittest.TestCase):
    def test_zero_data_gives_zero_state(self):
        layout = build_layout(quasistatic_square(2), 1)
        for weights in (backward_euler(0.1), bdf2(0.1), static()):
            with self.subTest(scheme=weights.label):
                self.assertTrue(zero_data_check(layout, moderate_params(1), weights).passed)

    def test_condensation_matches_monolithic(self):
        for n in (1, 2):
            for degree in (1, 2):
                for variant in Variant:
                    layout = build_layout(quasistatic_square(n), degree, variant)
                    for weights in (backward_euler(0.1), bdf2(0.1)):
                        with self.subTest(n=n, k=degree, variant=variant.value, scheme=weights.label):
                            report = condensation_oracle(layout, moderate_params(degree), weights, seed=7)
                            self.assertTrue(report.passed, report)

    def test_residual_contract(self):
        layout = build_layout(quasistatic_square(4), 1)
        system = assemble_step_system(layout, moderate_params(1), backward_euler(0.1))
        state = solve_step(system, smooth_data(layout), (SolutionState.zeros(layout),))
        self.assertIsInstance(state.residual, ResidualReport)
        self.assertLessEqual(state.residual.condensed, 1e-11)
        self.assertLessEqual(state.residual.full, settings.RESIDUAL_TOLERANCE)
        self.assertEqual(state.residual.free_unknowns, len(layout.free_dofs))
        self.assertLessEqual(state.residual.iterations, settings.REFINEMENT_STEPS)
        self.assertEqual(state.residual.refined, state.residual.iterations > 0)
        self.assertTrue(state.is_finite())

    def test_constrained_slots_keep_prescribed_values(self):
        layout = build_layout(quasistatic_square(2), 1)
        system = assemble_step_system(layout, moderate_params(1), static())
        data = smooth_data(layout)
        state = solve_step(system, data)
        np.testing.assert_array_equal(state.facet[layout.constrained_dofs], data.prescribed[layout.constrained_dofs])

    def test_history_length_checked(self):
        layout = build_layout(quasistatic_square(1), 1)
        system = assemble_step_system(layout, moderate_params(1), bdf2(0.1))
        with self.assertRaises(ValidationError):
            solve_step(system, StepData.zeros(layout), (SolutionState.zeros(layout),))

    def test_degree_mismatch_rejected(self):
        layout = build_layout(quasistatic_square(1), 1)
        with self.assertRaises(ValidationError):
            assemble_step_system(layout, moderate_params(2), static())

    def test_assembly_is_deterministic(self):
        layout = build_layout(quasistatic_square(2), 2, Variant.EDG_HDG)
        first = assemble_step_system(layout, moderate_params(2), bdf2(0.05))
        second = assemble_step_system(layout, moderate_params(2), bdf2(0.05))
        self.assertEqual((first.schur_free != second.schur_free).nnz, 0)
        np.testing.assert_array_equal(first.eliminated, second.eliminated)

    def test_monolithic_static_random_data(self):
        layout = build_layout(quasistatic_square(1), 2)
        system = assemble_step_system(layout, moderate_params(2), static())
        data = random_step_data(layout, np.random.default_rng(3))
        condensed = solve_step(system, data)
        reference = solve_monolithic(system, data)
        np.testing.assert_allclose(condensed.facet, reference.facet, rtol=1e-9, atol=1e-10)


class ConformityTests(unittest.TestCase):
    def test_zero_state(self):
        layout = build_layout(quasistatic_square(2), 1)
        report = divergence_conformity_report(SolutionState.zeros(layout))
        self.assertEqual(report.u_jump, 0.0)
        self.assertEqual(report.z_jump, 0.0)
        self.assertTrue(report.passed())

    def test_solved_step_is_divergence_conforming(self):
        for variant in Variant:
            with self.subTest(variant=variant.value):
                layout = build_layout(quasistatic_square(4), 1, variant)
                system = assemble_step_system(layout, moderate_params(1), backward_euler(0.1))
                state = solve_step(system, smooth_data(layout), (SolutionState.zeros(layout),))
                report = divergence_conformity_report(state, boundary_flux=lambda x, n: 0.0)
                self.assertGreater(report.u_scale, 0.0)
                self.assertTrue(report.passed(), report)

    def test_random_interior_fields_not_conforming(self):
        layout = build_layout(quasistatic_square(2), 1)
        state = SolutionState.zeros(layout)
        state.interior[:] = np.random.default_rng(1).standard_normal(state.interior.shape)
        self.assertFalse(divergence_conformity_report(state).passed())

    def test_low_permeability_step_is_conforming(self):
        for variant in Variant:
            with self.subTest(variant=variant.value):
                case = cantilever_case(degree=1, variant=variant.value)
                layout = build_layout(build_case_mesh(case, 4), 1, variant)
                geometry = cell_geometry(layout.mesh, 1, variant.continuous_trace)
                system = assemble_step_system(layout, case.params, backward_euler(case.dt), geometry)
                data = step_data(layout, geometry, case.problem, case.dt)
                state = solve_step(system, data, (SolutionState.zeros(layout),), case.dt)
                self.assertFalse(np.all(system.row_scale == 1.0))
                self.assertLessEqual(state.residual.full, settings.RESIDUAL_TOLERANCE)
                report = divergence_conformity_report(state, boundary_flux=lambda x, n: 0.0)
                self.assertGreater(report.z_scale, 0.0)
                self.assertTrue(report.passed(), report)


class InfSupTests(unittest.TestCase):
    def test_positive_and_mesh_independent(self):
        layouts = [build_layout(quasistatic_square(n), 1) for n in (2, 4, 8)]
        reports, ratios = infsup_sequence(layouts)
        for report in reports:
            self.assertTrue(report.passed, report)
        self.assertGreaterEqual(ratios["displacement"], 0.5)
        self.assertGreaterEqual(ratios["velocity"], 0.5)

    def test_constant_pressure_kernel_without_pressure_constraint(self):
        report = infsup_estimate(build_layout(quasistatic_square(2), 1))
        self.assertGreater(report.velocity, 0.0)
        self.assertLess(report.velocity_unconstrained, 1e-3 * report.velocity)
        self.assertFalse(report.constants_removed)

    def test_closed_flow_boundary_uses_mean_zero_pressures(self):
        left = on_line(0, 0.0)
        mesh = tag_boundary(build_structured_square(2), {"D": left, "T": lambda x: ~left(x)}, {"F": everywhere})
        report = infsup_estimate(build_layout(mesh, 1))
        self.assertTrue(report.constants_removed)
        self.assertGreater(report.velocity, 1e-3)
        self.assertLess(report.velocity_unconstrained, 1e-3 * report.velocity)
        self.assertTrue(report.passed, report)


if __name__ == "__main__":
    unittest.main()
