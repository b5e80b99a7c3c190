"""Initial-data projections and the time-stepping driver."""

import logging
import time as timer

import numpy as np
from scipy.sparse.linalg import spsolve

from common.exceptions import SolverError, ValidationError
from common.utils import progress
from forms.geometry import cell_geometry
from forms.services import (
    ah_consistent_load,
    assemble_ah_global,
    body_load,
    displacement_index,
    flux_load,
    mass_matrices,
    scalar_load,
    traction_load,
)
from mesh.choices import DisplacementTag, FlowTag
from spaces.choices import TraceField
from spaces.services import prescribed_facet_values, project_trace
from system.models import SolutionState, StepData, backward_euler, bdf2, static
from system.services import assemble_step_system, solve_step

from .choices import Scheme
from .models import RunResult

logger = logging.getLogger(__name__)


def _at(function, t):
    if function is None:
        return None
    return lambda points: function(points, t)


def _on_boundary(function, t):
    if function is None:
        return None
    return lambda points, normals: function(points, normals, t)


def step_data(layout, geometry, problem, t):
    """Loads and essential data of ``problem`` at time ``t``."""

    mesh = layout.mesh
    data = StepData.zeros(layout)
    body = body_load(geometry, _at(problem.body_force, t)) if problem.body_force else data.body
    source = scalar_load(geometry, _at(problem.source, t)) if problem.source else data.source
    facet_load = np.zeros(layout.n_facet_dofs)
    if problem.traction is not None:
        facets = mesh.tagged_facets(displacement=DisplacementTag.TRACTION)
        facet_load += traction_load(layout, facets, _on_boundary(problem.traction, t))
    if problem.flux is not None:
        facets = mesh.tagged_facets(flow=FlowTag.FLUX)
        facet_load += flux_load(layout, facets, _on_boundary(problem.flux, t))
    prescribed = prescribed_facet_values(
        layout, displacement=_at(problem.displacement, t), pressure=_at(problem.pressure, t)
    )
    return StepData(body=body, source=source, facet_load=facet_load, prescribed=prescribed)


def l2_projection(geometry, function, space="pressure"):
    """Element-wise L2 projection onto P_(k-1) (``pressure``), P_k or P_k^2 (``vector``)."""

    vector_mass, scalar_mass = mass_matrices(geometry)
    if space == "vector":
        load, mass = body_load(geometry, function), vector_mass
    elif space == "pressure":
        load, mass = scalar_load(geometry, function), scalar_mass
    else:
        raise ValidationError(f"unknown projection space {space!r}")
    return np.linalg.solve(mass, load[..., None])[..., 0]


def elliptic_projection(layout, params, displacement, gradient, geometry=None):
    """(u_h, u_bar_h) with a_h(Pi u, v) = a_h((u, u), v) and the Gamma_D trace taken from ``displacement``.

    Returns element coefficients (n_cells, 2 nk) and the displacement part of a facet vector.
    """

    mesh = layout.mesh
    if mesh.tagged_facets(displacement=DisplacementTag.DIRICHLET).size == 0:
        raise SolverError("elliptic projection needs a nonempty Gamma_D")
    geometry = geometry or cell_geometry(mesh, layout.degree, layout.variant.continuous_trace)

    matrix = assemble_ah_global(layout, geometry, params)
    index = displacement_index(layout)
    rhs = np.zeros(matrix.shape[0])
    np.add.at(rhs, index.ravel(), ah_consistent_load(geometry, params, gradient).ravel())

    n_element = mesh.n_cells * 2 * layout.n_cell_basis
    n_trace = layout.n_displacement_trace
    fixed = np.flatnonzero(layout.constrained[:n_trace])
    values = prescribed_facet_values(layout, displacement=displacement)[:n_trace][fixed]
    free = np.concatenate([np.arange(n_element), n_element + np.flatnonzero(~layout.constrained[:n_trace])])
    rows = matrix[free]
    solution = np.atleast_1d(spsolve(rows[:, free].tocsc(), rhs[free] - rows[:, n_element + fixed] @ values))
    if not np.all(np.isfinite(solution)):
        raise SolverError("elliptic projection is singular")

    full = np.zeros(matrix.shape[0])
    full[free] = solution
    full[n_element + fixed] = values
    return full[:n_element].reshape(mesh.n_cells, -1), full[n_element:]


def initialize(layout, params, problem, geometry=None):
    """State at t = 0 from the initial fields of ``problem``.

    u by elliptic projection, p by L2 projection, p_T by L2 projection of
    -lambda div u + alpha p and z by L2 projection of -kappa grad p; absent
    fields are zero.
    """

    geometry = geometry or cell_geometry(layout.mesh, layout.degree, layout.variant.continuous_trace)
    state = SolutionState.zeros(layout)
    all_facets = np.arange(layout.mesh.n_facets)
    slices = layout.element_slices

    if problem.initial_displacement is not None:
        element, trace = elliptic_projection(
            layout, params, problem.initial_displacement, problem.initial_displacement_gradient, geometry
        )
        state.interior[:, slices["u"]] = element
        state.facet[: layout.n_displacement_trace] = trace

    pressure = problem.initial_pressure
    if pressure is not None:
        state.interior[:, slices["pressure"]] = l2_projection(geometry, pressure)
        dofs, values = project_trace(layout, pressure, all_facets, TraceField.PRESSURE)
        state.facet[dofs] = values
    if problem.initial_pressure_gradient is not None:
        gradient = problem.initial_pressure_gradient
        state.interior[:, slices["z"]] = l2_projection(geometry, lambda x: -params.kappa * gradient(x), "vector")

    def total_pressure(x):
        value = np.zeros(len(x))
        if problem.initial_displacement_gradient is not None and problem.initial_displacement is not None:
            grad = np.broadcast_to(np.asarray(problem.initial_displacement_gradient(x), dtype=float), (len(x), 2, 2))
            value = value - params.lam * (grad[:, 0, 0] + grad[:, 1, 1])
        if pressure is not None:
            value = value + params.alpha * np.broadcast_to(np.asarray(pressure(x), dtype=float), (len(x),))
        return value

    if problem.initial_displacement is not None or pressure is not None:
        state.interior[:, slices["total_pressure"]] = l2_projection(geometry, total_pressure)
        dofs, values = project_trace(layout, total_pressure, all_facets, TraceField.TOTAL_PRESSURE)
        state.facet[dofs] = values
    logger.info("initial state: max |coefficient| = %.3e", state.max_abs())
    return state


def run_static(layout, params, problem, time=0.0, geometry=None):
    """Solve the problem without the time derivative."""

    geometry = geometry or cell_geometry(layout.mesh, layout.degree, layout.variant.continuous_trace)
    system = assemble_step_system(layout, params, static(), geometry)
    return solve_step(system, step_data(layout, geometry, problem, time), (), time)


def run(
    layout,
    params,
    grid,
    scheme,
    problem,
    observers=(),
    initial=None,
    previous=None,
    start_step=0,
    keep_states=False,
):
    """Advance from ``start_step`` to ``grid.n_steps``.

    BDF2 starts with one backward-Euler step unless ``previous`` (the level
    before ``initial``) is supplied, as when restarting from a checkpoint.
    Observers are called as ``observer(step, state, previous)`` after every
    step; an optional ``start(step, state)`` runs once before the first.
    """

    scheme = Scheme(scheme)
    if scheme is Scheme.STATIC:
        raise ValidationError("use run_static for the static problem")
    started = timer.perf_counter()
    geometry = cell_geometry(layout.mesh, layout.degree, layout.variant.continuous_trace)
    current = initial if initial is not None else initialize(layout, params, problem, geometry)
    dt = grid.dt

    # one factored system at a time: the backward-Euler start is released before BDF2 is assembled
    systems = {}

    def system_for(weights):
        if weights.label not in systems:
            systems.clear()
            systems[weights.label] = assemble_step_system(layout, params, weights, geometry)
        return systems[weights.label]

    for observer in observers:
        start = getattr(observer, "start", None)
        if start is not None:
            start(start_step, current)

    states, times = ([current], [current.time]) if keep_states else ([], [])
    for step in progress(range(start_step, grid.n_steps), desc=f"{scheme.value} steps"):
        t = grid.time(step + 1)
        data = step_data(layout, geometry, problem, t)
        if scheme is Scheme.BDF2 and previous is not None:
            state = solve_step(system_for(bdf2(dt)), data, (current, previous), t)
        else:
            state = solve_step(system_for(backward_euler(dt)), data, (current,), t)
        if not state.is_finite():
            raise SolverError(f"non-finite state at t={t:.6g}")
        previous, current = current, state
        logger.debug("step %d/%d at t=%.6g, residual %.2e", step + 1, grid.n_steps, t, state.residual.condensed)
        for observer in observers:
            observer(step + 1, current, previous)
        if keep_states:
            states.append(current)
            times.append(t)

    elapsed = timer.perf_counter() - started
    logger.info("%s run: %d steps to t=%.6g in %.2fs", scheme.value, grid.n_steps - start_step, current.time, elapsed)
    return RunResult(
        final=current,
        previous=previous,
        states=states,
        times=times,
        steps=grid.n_steps - start_step,
        elapsed=elapsed,
        observers=tuple(observers),
    )
