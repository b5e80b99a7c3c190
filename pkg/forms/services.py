"""Cell-batched evaluation of a_h, b_h, masses, norms and load vectors."""

import logging

import numpy as np
from scipy import sparse

from refbasis.quadrature import edge_quadrature
from refbasis.basis import EdgeBasis, LagrangeEdgeBasis

from .models import LocalBlocks

logger = logging.getLogger(__name__)


def _sizes(geometry):
    tables = geometry.tables
    return tables.n_cell, tables.n_pressure, tables.n_trace


def _edge_columns(geometry, edge):
    nk, _, nt = _sizes(geometry)
    return np.concatenate([np.arange(2 * nk), 2 * nk + edge * 2 * nt + np.arange(2 * nt)])


def strain_matrix(geometry):
    """(eps(u), eps(v)) on every cell, over the element displacement block."""

    nk, _, _ = _sizes(geometry)
    w, grads = geometry.volume_weights, geometry.volume_gradients
    laplace = np.einsum("cq,cqid,cqjd->cij", w, grads, grads)
    out = np.zeros((geometry.n_cells, 2 * nk, 2 * nk))
    for a in range(2):
        for b in range(2):
            cross = np.einsum("cq,cqi,cqj->cij", w, grads[..., b], grads[..., a])
            block = 0.5 * (laplace * (a == b) + cross)
            out[:, a * nk : (a + 1) * nk, b * nk : (b + 1) * nk] = block
    return out


def _face_operators(geometry, edge):
    """Jump operator [u | u_bar_e] -> u - u_bar and flux operator u -> (grad u + grad u^T) n."""

    nk, _, nt = _sizes(geometry)
    values = geometry.tables.face_values[edge]
    grads = geometry.face_gradients[:, edge]
    normal = geometry.normals[:, edge]
    trace = geometry.displacement_trace(edge)
    n_cells, n_points = trace.shape[:2]

    jump = np.zeros((n_cells, n_points, 2, 2 * nk + 2 * nt))
    flux = np.zeros_like(jump)
    normal_derivative = np.einsum("cqjd,cd->cqj", grads, normal)
    for a in range(2):
        jump[:, :, a, a * nk : (a + 1) * nk] = values
        jump[:, :, a, 2 * nk + a * nt : 2 * nk + (a + 1) * nt] = -trace
        for b in range(2):
            block = grads[..., a] * normal[:, None, None, b]
            if a == b:
                block = block + normal_derivative
            flux[:, :, a, b * nk : (b + 1) * nk] = block
    return jump, flux


def assemble_ah_local(geometry, params):
    """a_h on every cell over ``[u | u_bar edge 0, 1, 2]``, h_K the cell diameter."""

    nk, _, nt = _sizes(geometry)
    mu = params.mu
    size = 2 * nk + 6 * nt
    out = np.zeros((geometry.n_cells, size, size))
    out[:, : 2 * nk, : 2 * nk] = 2.0 * mu * strain_matrix(geometry)
    tau = 2.0 * params.penalty * mu / geometry.diameters
    for edge in range(3):
        jump, flux = _face_operators(geometry, edge)
        w = geometry.face_weights[:, edge]
        penalty = np.einsum("cq,cqam,cqan->cmn", w, jump, jump)
        consistency = mu * np.einsum("cq,cqam,cqan->cmn", w, jump, flux)
        local = tau[:, None, None] * penalty - consistency - consistency.transpose(0, 2, 1)
        columns = _edge_columns(geometry, edge)
        out[:, columns[:, None], columns[None, :]] += local
    return out


def assemble_bh_local(geometry):
    """b_h(v, q) = -(q, div v) + <q_bar, (v - v_bar) . n> as a matrix from v-slots to q-slots.

    Rows are ``[q | q_bar edge 0, 1, 2]``, columns ``[v | v_bar edge 0, 1, 2]``.
    For b_h((w, 0), q) use the first ``2 nk`` columns only.
    """

    nk, nq, nt = _sizes(geometry)
    tables = geometry.tables
    psi = tables.volume_values[:, :nq]
    w, grads = geometry.volume_weights, geometry.volume_gradients
    out = np.zeros((geometry.n_cells, nq + 3 * nt, 2 * nk + 6 * nt))
    for a in range(2):
        out[:, :nq, a * nk : (a + 1) * nk] = -np.einsum("cq,qi,cqj->cij", w, psi, grads[..., a])
    for edge in range(3):
        wf = geometry.face_weights[:, edge]
        normal = geometry.normals[:, edge]
        pressure = geometry.pressure_trace(edge)
        displacement = geometry.displacement_trace(edge)
        values = tables.face_values[edge]
        rows = nq + edge * nt + np.arange(nt)
        for a in range(2):
            element = np.einsum("cq,cqm,c,qj->cmj", wf, pressure, normal[:, a], values)
            trace = np.einsum("cq,cqm,c,cql->cml", wf, pressure, normal[:, a], displacement)
            out[:, rows[:, None], (a * nk + np.arange(nk))[None, :]] += element
            columns = 2 * nk + edge * 2 * nt + a * nt + np.arange(nt)
            out[:, rows[:, None], columns[None, :]] -= trace
    return out


def mass_matrices(geometry):
    """L2 mass of P_k (per component, block diagonal) and of P_(k-1)."""

    nk, nq, _ = _sizes(geometry)
    values = geometry.tables.volume_values
    w = geometry.volume_weights
    scalar = np.einsum("cq,qi,qj->cij", w, values, values)
    vector = np.zeros((geometry.n_cells, 2 * nk, 2 * nk))
    vector[:, :nk, :nk] = scalar
    vector[:, nk:, nk:] = scalar
    return vector, scalar[:, :nq, :nq]


def local_blocks(geometry, params):
    vector_mass, scalar_mass = mass_matrices(geometry)
    blocks = LocalBlocks(
        a_h=assemble_ah_local(geometry, params),
        divergence=assemble_bh_local(geometry),
        vector_mass=vector_mass,
        scalar_mass=scalar_mass,
    )
    logger.debug("local blocks for %d cells", blocks.n_cells)
    return blocks


def gram_v(geometry):
    """Gram matrix of |||(v, v_bar)|||_v^2 over ``[v | v_bar edges]``."""

    nk, _, nt = _sizes(geometry)
    size = 2 * nk + 6 * nt
    out = np.zeros((geometry.n_cells, size, size))
    out[:, : 2 * nk, : 2 * nk] = strain_matrix(geometry)
    for edge in range(3):
        jump, _ = _face_operators(geometry, edge)
        w = geometry.face_weights[:, edge] / geometry.diameters[:, None]
        columns = _edge_columns(geometry, edge)
        out[:, columns[:, None], columns[None, :]] += np.einsum("cq,cqam,cqan->cmn", w, jump, jump)
    return out


def gram_q(geometry):
    """Gram matrix of |||(q, q_bar)|||_q^2 over ``[q | q_bar edges]``."""

    _, nq, nt = _sizes(geometry)
    _, scalar_mass = mass_matrices(geometry)
    out = np.zeros((geometry.n_cells, nq + 3 * nt, nq + 3 * nt))
    out[:, :nq, :nq] = scalar_mass
    for edge in range(3):
        trace = geometry.pressure_trace(edge)
        w = geometry.face_weights[:, edge] * geometry.diameters[:, None]
        rows = nq + edge * nt + np.arange(nt)
        out[:, rows[:, None], rows[None, :]] = np.einsum("cq,cqm,cqn->cmn", w, trace, trace)
    return out


def displacement_index(layout):
    """Global index of ``[u | u_bar edges]`` in the vector ``[all element u | u_bar]``."""

    mesh, nk = layout.mesh, layout.n_cell_basis
    n_cells = mesh.n_cells
    element = (np.arange(n_cells) * 2 * nk)[:, None] + np.arange(2 * nk)[None, :]
    trace = layout.facet_displacement[mesh.cell_facets].reshape(n_cells, -1)
    return np.concatenate([element, n_cells * 2 * nk + trace], axis=1)


def pressure_index(layout, table):
    """Global index of ``[q | q_bar edges]`` in ``[all element q | q_bar of one trace field]``."""

    mesh, nq = layout.mesh, layout.n_pressure_basis
    n_cells = mesh.n_cells
    element = (np.arange(n_cells) * nq)[:, None] + np.arange(nq)[None, :]
    trace = table[mesh.cell_facets].reshape(n_cells, -1) - table.min()
    return np.concatenate([element, n_cells * nq + trace], axis=1)


def scatter(local, rows, cols, shape):
    """Sum cell matrices into a sparse CSR matrix; duplicate entries add."""

    n_cells, m, n = local.shape
    row_index = np.broadcast_to(rows[:, :, None], (n_cells, m, n)).ravel()
    col_index = np.broadcast_to(cols[:, None, :], (n_cells, m, n)).ravel()
    matrix = sparse.coo_matrix((local.ravel(), (row_index, col_index)), shape=shape)
    return matrix.tocsr()


def assemble_ah_global(layout, geometry, params):
    """Global a_h over ``[element u | u_bar]``; no constraints applied."""

    index = displacement_index(layout)
    size = layout.mesh.n_cells * 2 * layout.n_cell_basis + layout.n_displacement_trace
    return scatter(assemble_ah_local(geometry, params), index, index, (size, size))


def body_load(geometry, function):
    """(f, v) per cell for a vector field ``f(points) -> (N, 2)``, shape (n_cells, 2 nk)."""

    points = geometry.volume_points
    flat = points.reshape(-1, 2)
    values = np.broadcast_to(np.asarray(function(flat), dtype=float), (len(flat), 2)).reshape(points.shape)
    out = np.einsum("cq,cqa,qi->cai", geometry.volume_weights, values, geometry.tables.volume_values)
    return out.reshape(geometry.n_cells, -1)


def scalar_load(geometry, function):
    """(g, q) per cell against P_(k-1), shape (n_cells, nq)."""

    _, nq, _ = _sizes(geometry)
    points = geometry.volume_points
    flat = points.reshape(-1, 2)
    values = np.broadcast_to(np.asarray(function(flat), dtype=float), (len(flat),)).reshape(points.shape[:2])
    return np.einsum("cq,cq,qi->ci", geometry.volume_weights, values, geometry.tables.volume_values[:, :nq])


def boundary_samples(mesh, facets, exactness):
    """Quadrature points, weights and outward normals along boundary facets (global direction)."""

    rule = edge_quadrature(exactness)
    ends = mesh.vertices[mesh.facets[facets]]
    points = ends[:, None, 0, :] + rule.points[None, :, None] * (ends[:, None, 1, :] - ends[:, None, 0, :])
    weights = mesh.facet_lengths[facets][:, None] * rule.weights[None, :]
    normals = np.broadcast_to(mesh.facet_normals[facets][:, None, :], points.shape)
    return rule, points, weights, normals


def traction_load(layout, facets, traction):
    """<t, v_bar> on ``facets`` as a facet vector; ``traction(points, normals) -> (N, 2)``."""

    out = np.zeros(layout.n_facet_dofs)
    facets = np.asarray(facets, dtype=np.int64)
    if facets.size == 0:
        return out
    rule, points, weights, normals = boundary_samples(layout.mesh, facets, 2 * layout.degree + 2)
    values = np.asarray(traction(points.reshape(-1, 2), normals.reshape(-1, 2)), dtype=float)
    values = np.broadcast_to(values, (points.shape[0] * points.shape[1], 2)).reshape(points.shape)
    basis_type = LagrangeEdgeBasis if layout.variant.continuous_trace else EdgeBasis
    basis = basis_type(layout.degree).values(rule.points)
    contributions = np.einsum("nq,nqc,qm->ncm", weights, values, basis)
    np.add.at(out, layout.facet_displacement[facets].ravel(), contributions.ravel())
    return out


def flux_load(layout, facets, flux):
    """-<z_N, q_bar> on ``facets`` as a facet vector; ``flux(points, normals) -> (N,)`` is z . n."""

    out = np.zeros(layout.n_facet_dofs)
    facets = np.asarray(facets, dtype=np.int64)
    if facets.size == 0:
        return out
    rule, points, weights, normals = boundary_samples(layout.mesh, facets, 2 * layout.degree + 2)
    values = np.asarray(flux(points.reshape(-1, 2), normals.reshape(-1, 2)), dtype=float)
    values = np.broadcast_to(values, (points.shape[0] * points.shape[1],)).reshape(points.shape[:2])
    basis = EdgeBasis(layout.degree).values(rule.points)
    contributions = -np.einsum("nq,nq,qm->nm", weights, values, basis)
    np.add.at(out, layout.facet_pressure[facets].ravel(), contributions.ravel())
    return out


def ah_consistent_load(geometry, params, gradient):
    """a_h((u, u), (v, v_bar)) per cell for a smooth u given by ``gradient(points) -> (N, 2, 2)``.

    ``gradient[..., a, b]`` is d u_a / d x_b. The jump of (u, u) vanishes, so
    only the volume term and the flux consistency term remain.
    """

    nk, _, nt = _sizes(geometry)
    mu = params.mu
    out = np.zeros((geometry.n_cells, 2 * nk + 6 * nt))

    def strain(points):
        flat = points.reshape(-1, 2)
        grad = np.broadcast_to(np.asarray(gradient(flat), dtype=float), (len(flat), 2, 2))
        return (0.5 * (grad + grad.transpose(0, 2, 1))).reshape(points.shape[:-1] + (2, 2))

    eps = strain(geometry.volume_points)
    volume = 2.0 * mu * np.einsum("cq,cqab,cqib->cai", geometry.volume_weights, eps, geometry.volume_gradients)
    out[:, : 2 * nk] = volume.reshape(geometry.n_cells, -1)
    for edge in range(3):
        jump, _ = _face_operators(geometry, edge)
        traction = 2.0 * np.einsum("cqab,cb->cqa", strain(geometry.face_points[:, edge]), geometry.normals[:, edge])
        local = mu * np.einsum("cq,cqam,cqa->cm", geometry.face_weights[:, edge], jump, traction)
        out[:, _edge_columns(geometry, edge)] -= local
    return out
