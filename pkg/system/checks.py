"""Numerical property checks on assembled systems and solved states.

Checks never raise on a failed property; they return a report with a
``passed`` flag and log a warning.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from forms.geometry import cell_geometry
from forms.services import (
    assemble_bh_local,
    boundary_samples,
    displacement_index,
    gram_q,
    gram_v,
    mass_matrices,
    pressure_index,
    scatter,
)
from mesh.choices import DisplacementTag, FlowTag
from poro_hdg import settings
from refbasis.basis import EdgeBasis
from spaces.choices import TraceField
from spaces.services import element_values, facet_trace_values

from .models import SolutionState, StepData
from .services import assemble_step_system, solve_monolithic, solve_step

logger = logging.getLogger(__name__)

# inf-sup values at or below this are treated as a kernel (round-off level)
INFSUP_FLOOR = 1.0e-6


@dataclass(frozen=True)
class ConformityReport:
    u_jump: float
    z_jump: float
    traction_gap: float
    flux_gap: float
    u_scale: float
    z_scale: float

    def passed(self, tol=1e-10):
        u_ok = max(self.u_jump, self.traction_gap) <= tol * max(self.u_scale, 1.0e-300)
        z_ok = max(self.z_jump, self.flux_gap) <= tol * max(self.z_scale, 1.0e-300)
        return bool(u_ok and z_ok)


def _facet_points(layout, facets):
    _, points, _, normals = boundary_samples(layout.mesh, facets, 2 * layout.degree + 2)
    return points, normals


def _side_values(layout, coefficients, cells, points):
    q = points.shape[1]
    owners = np.repeat(cells, q)
    values = element_values(layout, coefficients, owners, points.reshape(-1, 2))
    return values.reshape(points.shape[:2] + values.shape[1:])


def divergence_conformity_report(state, boundary_flux=None):
    """Normal-component continuity of u_h and z_h at facet quadrature points.

    ``u_jump`` and ``z_jump`` are maxima of |[[v . n]]| over interior facets,
    ``traction_gap`` is max |(u_h - u_bar_h) . n| on traction facets and,
    when ``boundary_flux(points, normals)`` is given, ``flux_gap`` compares
    z_h . n with the projected flux on no-flow facets.
    """

    layout = state.layout
    mesh = layout.mesh
    u_jump = z_jump = traction_gap = flux_gap = 0.0
    u_scale = z_scale = 0.0

    interior = mesh.interior_facets
    if interior.size:
        points, normals = _facet_points(layout, interior)
        left, right = mesh.facet_cells[interior, 0], mesh.facet_cells[interior, 1]
        for coefficients, name in ((state.u, "u"), (state.z, "z")):
            plus = _side_values(layout, coefficients, left, points)
            minus = _side_values(layout, coefficients, right, points)
            jump = float(np.abs(np.einsum("fqc,fqc->fq", plus - minus, normals)).max())
            scale = float(max(np.abs(plus).max(), np.abs(minus).max()))
            if name == "u":
                u_jump, u_scale = jump, scale
            else:
                z_jump, z_scale = jump, scale

    traction = mesh.tagged_facets(displacement=DisplacementTag.TRACTION)
    if traction.size:
        points, normals = _facet_points(layout, traction)
        inside = _side_values(layout, state.u, mesh.facet_cells[traction, 0], points)
        trace = facet_trace_values(layout, state.facet, traction, TraceField.DISPLACEMENT)
        traction_gap = float(np.abs(np.einsum("fqc,fqc->fq", inside - trace, normals)).max())
        u_scale = max(u_scale, float(np.abs(inside).max()))

    no_flow = mesh.tagged_facets(flow=FlowTag.FLUX)
    if boundary_flux is not None and no_flow.size:
        rule, points, _, normals = boundary_samples(mesh, no_flow, 2 * layout.degree + 2)
        inside = _side_values(layout, state.z, mesh.facet_cells[no_flow, 0], points)
        flux = np.broadcast_to(
            np.asarray(boundary_flux(points.reshape(-1, 2), normals.reshape(-1, 2)), dtype=float),
            (points.shape[0] * points.shape[1],),
        ).reshape(points.shape[:2])
        basis = EdgeBasis(layout.degree).values(rule.points)
        projected = (flux @ (rule.weights[:, None] * basis)) @ basis.T
        flux_gap = float(np.abs(np.einsum("fqc,fqc->fq", inside, normals) - projected).max())
        z_scale = max(z_scale, float(np.abs(inside).max()))

    report = ConformityReport(u_jump, z_jump, traction_gap, flux_gap, u_scale, z_scale)
    if not report.passed():
        logger.warning("divergence conformity check failed: %r", report)
    return report


@dataclass(frozen=True)
class InfSupReport:
    n_cells: int
    h_max: float
    displacement: float
    velocity: float
    velocity_unconstrained: float
    constants_removed: bool = False  # no pressure boundary: velocity is taken on mean-zero pressures

    @property
    def passed(self):
        return bool(min(self.displacement, self.velocity) > INFSUP_FLOOR)


def _pseudo_inverse(gram):
    values, vectors = linalg.eigh(gram)
    keep = values > 1e-12 * values.max()
    return (vectors[:, keep] / values[keep]) @ vectors[:, keep].T


def _smallest_singular_value(coupling, test_gram, trial_gram, kernel=0):
    """min over q of sup_v (q, B v) / (|v| |q|) for Gram-induced norms.

    With ``kernel=m`` the first m generalized eigenvectors (a known kernel) are
    skipped; the rest are Gram-orthogonal to them.
    """

    if coupling.shape[0] <= kernel:
        return 0.0
    normal = coupling @ _pseudo_inverse(trial_gram) @ coupling.T
    values = linalg.eigh(0.5 * (normal + normal.T), test_gram, eigvals_only=True)
    return float(np.sqrt(max(values[kernel], 0.0)))


def infsup_estimate(layout):
    """Smallest generalized singular values of b_h for both inf-sup conditions.

    ``displacement``: b_h(v, q) against |||v|||_v over V_h x Vbar_h (zero on
    Gamma_D) and |||q|||_q over Q_h x Qbar_h. ``velocity``: b_h((w, 0), q)
    against ||w|| and |||q|||_q with qbar vanishing on Gamma_P, or over
    mean-zero pressures when Gamma_P is empty; ``velocity_unconstrained``
    drops both.
    """

    mesh = layout.mesh
    geometry = cell_geometry(mesh, layout.degree, layout.variant.continuous_trace)
    n_cells, nk, nq = mesh.n_cells, layout.n_cell_basis, layout.n_pressure_basis
    size_q = n_cells * nq + mesh.n_facets * layout.n_trace
    if size_q + layout.n_displacement_trace + 2 * n_cells * nk > 2 * settings.DENSE_LIMIT:
        logger.warning("inf-sup estimate on %d cells exceeds the dense limit", n_cells)

    divergence = assemble_bh_local(geometry)
    v_index = displacement_index(layout)
    size_v = n_cells * 2 * nk + layout.n_displacement_trace
    q_total = pressure_index(layout, layout.facet_total_pressure)
    q_pressure = pressure_index(layout, layout.facet_pressure)
    gram_scalar = gram_q(geometry)

    coupling = scatter(divergence, q_total, v_index, (size_q, size_v)).toarray()
    trial = scatter(gram_v(geometry), v_index, v_index, (size_v, size_v)).toarray()
    test = scatter(gram_scalar, q_total, q_total, (size_q, size_q)).toarray()
    free_v = np.concatenate(
        [np.ones(n_cells * 2 * nk, dtype=bool), ~layout.constrained[: layout.n_displacement_trace]]
    )
    displacement = _smallest_singular_value(
        coupling[:, free_v], test, trial[np.ix_(free_v, free_v)]
    )

    velocity_columns = v_index[:, : 2 * nk]
    size_w = n_cells * 2 * nk
    coupling = scatter(divergence[:, :, : 2 * nk], q_pressure, velocity_columns, (size_q, size_w)).toarray()
    vector_mass, _ = mass_matrices(geometry)
    trial = scatter(vector_mass, velocity_columns, velocity_columns, (size_w, size_w)).toarray()
    test = scatter(gram_scalar, q_pressure, q_pressure, (size_q, size_q)).toarray()
    free_q = np.concatenate(
        [np.ones(n_cells * nq, dtype=bool), ~layout.constrained[layout.facet_pressure.ravel()]]
    )
    velocity_unconstrained = _smallest_singular_value(coupling, test, trial)
    # without Gamma_P the constants (q = qbar = const) are the kernel of b_h((w, 0), .)
    constants_removed = mesh.tagged_facets(flow=FlowTag.PRESSURE).size == 0
    if constants_removed:
        velocity = _smallest_singular_value(coupling, test, trial, kernel=1)
    else:
        velocity = _smallest_singular_value(coupling[free_q], test[np.ix_(free_q, free_q)], trial)

    report = InfSupReport(
        n_cells=n_cells,
        h_max=mesh.h_max,
        displacement=displacement,
        velocity=velocity,
        velocity_unconstrained=velocity_unconstrained,
        constants_removed=constants_removed,
    )
    if not report.passed:
        logger.warning("inf-sup estimate not positive: %r", report)
    else:
        logger.info("inf-sup on %d cells: %.4g (displacement), %.4g (velocity)", n_cells, displacement, velocity)
    return report


def infsup_sequence(layouts):
    """Inf-sup estimates over a refinement sequence; ``ratios`` compares last to first."""

    reports = [infsup_estimate(layout) for layout in layouts]
    first, last = reports[0], reports[-1]
    ratios = {
        "displacement": last.displacement / first.displacement if first.displacement > 0 else 0.0,
        "velocity": last.velocity / first.velocity if first.velocity > 0 else 0.0,
    }
    return reports, ratios


@dataclass(frozen=True)
class OracleReport:
    difference: float
    scale: float
    tolerance: float

    @property
    def passed(self):
        return bool(self.difference <= self.tolerance * max(self.scale, 1.0e-300))


def _random_state(layout, rng):
    state = SolutionState.zeros(layout)
    state.interior[:] = rng.standard_normal(state.interior.shape)
    state.facet[:] = rng.standard_normal(state.facet.shape)
    return state


def random_step_data(layout, rng):
    prescribed = np.zeros(layout.n_facet_dofs)
    prescribed[layout.constrained_dofs] = rng.standard_normal(len(layout.constrained_dofs))
    facet_load = rng.standard_normal(layout.n_facet_dofs)
    facet_load[layout.constrained_dofs] = 0.0
    return StepData(
        body=rng.standard_normal((layout.mesh.n_cells, 2 * layout.n_cell_basis)),
        source=rng.standard_normal((layout.mesh.n_cells, layout.n_pressure_basis)),
        facet_load=facet_load,
        prescribed=prescribed,
    )


def condensation_oracle(layout, params, weights, seed=None, tol=1e-10):
    """Compare condensed solve plus recovery with a monolithic solve on random data."""

    rng = np.random.default_rng(settings.SEED if seed is None else seed)
    system = assemble_step_system(layout, params, weights)
    data = random_step_data(layout, rng)
    history = tuple(_random_state(layout, rng) for _ in weights.history)
    condensed = solve_step(system, data, history)
    reference = solve_monolithic(system, data, history)
    a = np.concatenate([condensed.interior.ravel(), condensed.facet])
    b = np.concatenate([reference.interior.ravel(), reference.facet])
    report = OracleReport(difference=float(np.linalg.norm(a - b)), scale=float(np.linalg.norm(b)), tolerance=tol)
    if not report.passed:
        logger.warning("condensation oracle mismatch: %.3e relative", report.difference / max(report.scale, 1e-300))
    return report


@dataclass(frozen=True)
class ZeroDataReport:
    max_abs: float
    scale: float
    tolerance: float

    @property
    def passed(self):
        return bool(self.max_abs <= self.tolerance * self.scale)


def zero_data_check(layout, params, weights, tol=1e-12):
    """Zero loads, boundary data and history must give the zero state."""

    system = assemble_step_system(layout, params, weights)
    history = tuple(SolutionState.zeros(layout) for _ in weights.history)
    state = solve_step(system, StepData.zeros(layout), history)
    scale = float(max(np.abs(system.interior_block).max(), np.abs(system.facet_block).max()))
    report = ZeroDataReport(max_abs=state.max_abs(), scale=scale, tolerance=tol)
    if not report.passed:
        logger.warning("zero data produced a nonzero state: %.3e", report.max_abs)
    return report
