"""Step operator assembly, static condensation, facet solve and local recovery."""

import logging
import time

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu, spsolve

from common.exceptions import AssemblyError, SolverError, ValidationError
from common.utils import power_of_two_scale
from forms.geometry import cell_geometry
from forms.services import local_blocks, scatter
from poro_hdg import settings

from .models import CondensedSystem, ResidualReport, SolutionState

logger = logging.getLogger(__name__)


def local_indices(layout):
    """Positions of each field block inside the cell vector ``[interior | facet slots]``."""

    nt = layout.n_trace
    ni = layout.element_size
    slices = layout.element_slices

    def element(name):
        part = slices[name]
        return np.arange(part.start, part.stop)

    def facet(offset, width):
        return ni + (4 * nt * np.arange(3)[:, None] + offset + np.arange(width)[None, :]).ravel()

    return {
        "u": element("u"),
        "total_pressure": element("total_pressure"),
        "z": element("z"),
        "pressure": element("pressure"),
        "displacement": np.concatenate([element("u"), facet(0, 2 * nt)]),
        "total_pressure_pair": np.concatenate([element("total_pressure"), facet(2 * nt, nt)]),
        "pressure_pair": np.concatenate([element("pressure"), facet(3 * nt, nt)]),
    }


def _add(matrix, rows, cols, block):
    matrix[:, rows[:, None], cols[None, :]] += block


def local_operator(layout, blocks, params, weights):
    """Dense cell matrices of the four coupled equations.

    Rows are test functions, columns trial unknowns, both ordered
    ``[u, p_T, z, p | facet slots]``:

    * displacement rows: a_h(u, v) + b_h(v, p_T)
    * total pressure rows: b_h(u, q_T) + lambda^-1 (alpha p - p_T, q_T)
    * velocity rows: (kappa^-1 z, w) + b_h((w, 0), p)
    * pressure rows: w_t [(c0 p, q) + lambda^-1 (alpha p - p_T, alpha q)] - b_h((z, 0), q)
    """

    index = local_indices(layout)
    nk2 = 2 * layout.n_cell_basis
    size = layout.element_size + layout.local_facet_size
    lam, alpha = params.lam, params.alpha
    operator = np.zeros((blocks.n_cells, size, size))

    disp, pt_pair, p_pair = index["displacement"], index["total_pressure_pair"], index["pressure_pair"]
    pt, z, p = index["total_pressure"], index["z"], index["pressure"]
    divergence = blocks.divergence
    velocity = divergence[:, :, :nk2]
    mass_q = blocks.scalar_mass

    _add(operator, disp, disp, blocks.a_h)
    _add(operator, disp, pt_pair, divergence.transpose(0, 2, 1))
    _add(operator, pt_pair, disp, divergence)
    _add(operator, pt, p, (alpha / lam) * mass_q)
    _add(operator, pt, pt, -(1.0 / lam) * mass_q)
    _add(operator, z, z, blocks.vector_mass / params.kappa)
    _add(operator, z, p_pair, velocity.transpose(0, 2, 1))
    _add(operator, p_pair, z, -velocity)
    _add(operator, p, p, weights.leading * (params.c0 + alpha**2 / lam) * mass_q)
    _add(operator, p, pt, -weights.leading * (alpha / lam) * mass_q)
    return operator


def solve_cells(matrices, rhs):
    """Batched dense solves; a singular cell block raises AssemblyError naming the cell.

    Each block is equilibrated (rows, then columns, by powers of two) before
    the solve.
    """

    row_scale = power_of_two_scale(np.abs(matrices).max(axis=2))
    scaled = matrices * row_scale[:, :, None]
    column_scale = power_of_two_scale(np.abs(scaled).max(axis=1))
    scaled = scaled * column_scale[:, None, :]
    scaled_rhs = rhs * row_scale[:, :, None]
    try:
        solution = np.linalg.solve(scaled, scaled_rhs)
    except np.linalg.LinAlgError:
        solution = None
    if solution is None or not np.all(np.isfinite(solution)):
        for cell in range(len(matrices)):
            try:
                local = np.linalg.solve(scaled[cell], scaled_rhs[cell])
            except np.linalg.LinAlgError:
                local = None
            if local is None or not np.all(np.isfinite(local)):
                raise AssemblyError(f"interior block of cell {cell} is singular", cell=cell)
        raise AssemblyError("interior blocks are singular")
    return solution * column_scale[:, :, None]


def equilibrate(matrix):
    """Row and column scales R, C (powers of two) giving R A C unit max-abs rows and columns."""

    magnitude = abs(matrix).tocsr()
    row_scale = power_of_two_scale(magnitude.max(axis=1).toarray().ravel())
    scaled = sparse.diags(row_scale) @ magnitude
    column_scale = power_of_two_scale(scaled.max(axis=0).toarray().ravel())
    return row_scale, column_scale


def assemble_step_system(layout, params, weights, geometry=None):
    """Condense the step operator onto the facet unknowns and factor it."""

    started = time.perf_counter()
    if params.degree != layout.degree:
        raise ValidationError(f"params.degree={params.degree} but layout has k={layout.degree}")
    geometry = geometry or cell_geometry(layout.mesh, layout.degree, layout.variant.continuous_trace)
    blocks = local_blocks(geometry, params)
    operator = local_operator(layout, blocks, params, weights)

    ni = layout.element_size
    interior_block = operator[:, :ni, :ni]
    interior_facet = operator[:, :ni, ni:]
    facet_interior = operator[:, ni:, :ni]
    facet_block = operator[:, ni:, ni:]
    eliminated = solve_cells(interior_block, interior_facet)
    schur_local = facet_block - facet_interior @ eliminated

    dofs = layout.cell_facet_dofs
    n = layout.n_facet_dofs
    schur = scatter(schur_local, dofs, dofs, (n, n))
    free, constrained = layout.free_dofs, layout.constrained_dofs
    rows = schur[free]
    schur_free = rows[:, free].tocsc()
    schur_coupling = rows[:, constrained].tocsr()

    factor = None
    row_scale = column_scale = np.ones(len(free))
    if len(free):
        row_scale, column_scale = equilibrate(schur_free)
        scaled = (sparse.diags(row_scale) @ schur_free @ sparse.diags(column_scale)).tocsc()
        try:
            factor = splu(scaled, permc_spec=settings.PERMC_SPEC)
        except RuntimeError as exc:
            raise SolverError(f"facet system is singular: {exc}") from exc

    mass_q = blocks.scalar_mass
    system = CondensedSystem(
        layout=layout,
        params=params,
        weights=weights,
        interior_block=interior_block,
        interior_facet=interior_facet,
        facet_interior=facet_interior,
        facet_block=facet_block,
        eliminated=eliminated,
        schur_free=schur_free,
        schur_coupling=schur_coupling,
        factor=factor,
        storage=(params.c0 + params.alpha**2 / params.lam) * mass_q,
        coupling=(params.alpha / params.lam) * mass_q,
        row_scale=row_scale,
        column_scale=column_scale,
    )
    logger.info(
        "assembled %s step system: %d cells, %d free facet unknowns, nnz=%d (%.2fs)",
        weights.label or "custom",
        layout.mesh.n_cells,
        len(free),
        schur_free.nnz,
        time.perf_counter() - started,
    )
    return system


def storage_term(system, state):
    """Per-cell (c0 p, q) + lambda^-1 (alpha p - p_T, alpha q) for a stored state."""

    return np.einsum("cij,cj->ci", system.storage, state.pressure) - np.einsum(
        "cij,cj->ci", system.coupling, state.total_pressure
    )


def step_rhs(system, data, history=()):
    """Cell and facet right-hand sides for one step."""

    weights = system.weights
    if len(history) != len(weights.history):
        raise ValidationError(
            f"{weights.label or 'scheme'} needs {len(weights.history)} previous states, got {len(history)}"
        )
    layout = system.layout
    slices = layout.element_slices
    interior = np.zeros((layout.mesh.n_cells, layout.element_size))
    interior[:, slices["u"]] = data.body
    interior[:, slices["pressure"]] = data.source
    for weight, state in zip(weights.history, history):
        interior[:, slices["pressure"]] += weight * storage_term(system, state)
    return interior, np.array(data.facet_load, dtype=float)


def residual_parts(system, interior, facet, rhs_interior, rhs_facet):
    """rhs - K x of the uncondensed equations; constrained facet rows are zeroed."""

    layout = system.layout
    local_facet = facet[layout.cell_facet_dofs]
    res_interior = rhs_interior - (
        np.einsum("cij,cj->ci", system.interior_block, interior)
        + np.einsum("cij,cj->ci", system.interior_facet, local_facet)
    )
    res_facet = np.array(rhs_facet, dtype=float)
    contributions = np.einsum("cij,cj->ci", system.facet_interior, interior) + np.einsum(
        "cij,cj->ci", system.facet_block, local_facet
    )
    np.add.at(res_facet, layout.cell_facet_dofs.ravel(), -contributions.ravel())
    res_facet[layout.constrained_dofs] = 0.0
    return res_interior, res_facet


def full_residual(system, interior, facet, rhs_interior, rhs_facet):
    """Componentwise backward error max_i |rhs - K x|_i / (|K| |x| + |rhs|)_i of the uncondensed equations.

    Every row is measured against its own terms, so equations with small
    coefficients (the pressure trace rows when kappa is small) are held to
    the same relative accuracy as the displacement rows.
    """

    layout = system.layout
    dofs = layout.cell_facet_dofs
    res_interior, res_facet = residual_parts(system, interior, facet, rhs_interior, rhs_facet)
    size_interior = (
        np.einsum("cij,cj->ci", np.abs(system.interior_block), np.abs(interior))
        + np.einsum("cij,cj->ci", np.abs(system.interior_facet), np.abs(facet[dofs]))
        + np.abs(rhs_interior)
    )
    size_facet = np.abs(rhs_facet).astype(float)
    contributions = np.einsum("cij,cj->ci", np.abs(system.facet_interior), np.abs(interior)) + np.einsum(
        "cij,cj->ci", np.abs(system.facet_block), np.abs(facet[dofs])
    )
    np.add.at(size_facet, dofs.ravel(), contributions.ravel())

    free = layout.free_dofs
    residual = np.concatenate([np.abs(res_interior).ravel(), np.abs(res_facet[free])])
    size = np.concatenate([size_interior.ravel(), size_facet[free]])
    ratio = np.divide(residual, size, out=np.zeros_like(residual), where=size > 0.0)
    return float(ratio.max()) if ratio.size else 0.0


def condensed_solve(system, rhs_interior, rhs_facet, fixed):
    """Eliminate, solve the facet system with ``fixed`` on constrained slots, recover cells.

    Returns ``(interior, facet, residual)`` with the equilibrated residual of
    the facet solve.
    """

    layout = system.layout
    dofs = layout.cell_facet_dofs
    local = solve_cells(system.interior_block, rhs_interior[..., None])[..., 0]
    reduced = np.array(rhs_facet, dtype=float)
    np.add.at(reduced, dofs.ravel(), -np.einsum("cij,cj->ci", system.facet_interior, local).ravel())

    facet = np.zeros(layout.n_facet_dofs)
    free = layout.free_dofs
    facet[layout.constrained_dofs] = fixed
    residual = 0.0
    if len(free):
        rhs = reduced[free] - system.schur_coupling @ fixed
        solution = system.solve_free(rhs)
        residual = system.scaled_residual(solution, rhs)
        if not np.all(np.isfinite(solution)) or residual > settings.BREAKDOWN_TOLERANCE:
            raise SolverError(f"facet solve broke down (relative residual {residual:.3e})", residual=residual)
        facet[free] = solution

    interior = local - np.einsum("cij,cj->ci", system.eliminated, facet[dofs])
    return interior, facet, residual


def solve_step(system, data, history=(), time_value=0.0):
    """Advance one level: condensed facet solve followed by cell-wise recovery.

    Iterative refinement on the uncondensed equations, with the condensed
    solve as the correction, runs until the componentwise backward error is
    below ``RESIDUAL_TOLERANCE`` or stops improving (at most
    ``REFINEMENT_STEPS`` corrections).
    """

    layout = system.layout
    rhs_interior, rhs_facet = step_rhs(system, data, history)
    fixed = data.prescribed[layout.constrained_dofs]
    interior, facet, condensed = condensed_solve(system, rhs_interior, rhs_facet, fixed)
    error = full_residual(system, interior, facet, rhs_interior, rhs_facet)

    iterations = 0
    no_change = np.zeros_like(fixed)
    while error > settings.RESIDUAL_TOLERANCE and iterations < settings.REFINEMENT_STEPS:
        res_interior, res_facet = residual_parts(system, interior, facet, rhs_interior, rhs_facet)
        d_interior, d_facet, _ = condensed_solve(system, res_interior, res_facet, no_change)
        candidate = (interior + d_interior, facet + d_facet)
        candidate_error = full_residual(system, *candidate, rhs_interior, rhs_facet)
        iterations += 1
        if not candidate_error < error:
            break
        (interior, facet), error = candidate, candidate_error
    if error > settings.RESIDUAL_TOLERANCE:
        logger.warning(
            "backward error %.3e above %.1e after %d refinement steps", error, settings.RESIDUAL_TOLERANCE, iterations
        )

    report = ResidualReport(
        condensed=condensed,
        full=error,
        free_unknowns=len(layout.free_dofs),
        refined=iterations > 0,
        iterations=iterations,
    )
    return SolutionState(layout=layout, interior=interior, facet=facet, time=float(time_value), residual=report)


def solve_monolithic(system, data, history=(), time_value=0.0):
    """Solve the uncondensed system directly; the reference for the condensed path."""

    layout = system.layout
    n_cells, ni = layout.mesh.n_cells, layout.element_size
    n_element = n_cells * ni
    rhs_interior, rhs_facet = step_rhs(system, data, history)

    operator = np.concatenate(
        [
            np.concatenate([system.interior_block, system.interior_facet], axis=2),
            np.concatenate([system.facet_interior, system.facet_block], axis=2),
        ],
        axis=1,
    )
    index = np.concatenate(
        [np.arange(n_element).reshape(n_cells, ni), n_element + layout.cell_facet_dofs], axis=1
    )
    size = n_element + layout.n_facet_dofs
    matrix = scatter(operator, index, index, (size, size))

    unknowns = np.concatenate([np.arange(n_element), n_element + layout.free_dofs])
    fixed = n_element + layout.constrained_dofs
    values = data.prescribed[layout.constrained_dofs]
    rhs = np.concatenate([rhs_interior.ravel(), rhs_facet])
    rows = matrix[unknowns]
    block = rows[:, unknowns].tocsc()
    row_scale, column_scale = equilibrate(block)
    scaled = (sparse.diags(row_scale) @ block @ sparse.diags(column_scale)).tocsc()
    solution = spsolve(scaled, row_scale * (rhs[unknowns] - rows[:, fixed] @ values))
    solution = column_scale * np.atleast_1d(solution)
    if not np.all(np.isfinite(solution)):
        raise SolverError("monolithic solve produced non-finite values")

    facet = np.zeros(layout.n_facet_dofs)
    facet[layout.constrained_dofs] = values
    facet[layout.free_dofs] = solution[n_element:]
    interior = solution[:n_element].reshape(n_cells, ni)
    return SolutionState(layout=layout, interior=interior, facet=facet, time=float(time_value))
