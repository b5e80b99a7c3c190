"""Layout construction and projection of boundary data onto trace spaces."""

import logging

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from common.exceptions import ValidationError
from mesh.choices import DisplacementTag, FlowTag
from refbasis.basis import EdgeBasis, LagrangeEdgeBasis, TriangleBasis
from refbasis.mapping import affine_maps
from refbasis.quadrature import edge_quadrature

from .choices import TraceField, Variant
from .models import DofLayout

logger = logging.getLogger(__name__)


def build_layout(mesh, degree, variant=Variant.HDG):
    """Number all unknowns for polynomial degree ``degree`` (k >= 1)."""

    degree = int(degree)
    if degree < 1:
        raise ValidationError(f"polynomial degree must be >= 1 (P_(k-1) pressures), got {degree}")
    variant = Variant(variant)
    nf, nt = mesh.n_facets, degree + 1

    if variant is Variant.HDG:
        n_scalar = nf * nt
        scalar = np.arange(n_scalar).reshape(nf, nt)
    else:
        # vertex nodes first, then k - 1 interior nodes per facet
        n_scalar = mesh.n_vertices + (degree - 1) * nf
        scalar = np.empty((nf, nt), dtype=np.int64)
        scalar[:, 0] = mesh.facets[:, 0]
        scalar[:, -1] = mesh.facets[:, 1]
        if degree > 1:
            scalar[:, 1:-1] = mesh.n_vertices + np.arange((degree - 1) * nf).reshape(nf, degree - 1)
    facet_displacement = np.stack([scalar, scalar + n_scalar], axis=1)
    n_displacement = 2 * n_scalar

    offset = n_displacement
    facet_total_pressure = offset + np.arange(nf * nt).reshape(nf, nt)
    facet_pressure = offset + nf * nt + np.arange(nf * nt).reshape(nf, nt)

    constrained = np.zeros(n_displacement + 2 * nf * nt, dtype=bool)
    dirichlet = mesh.tagged_facets(displacement=DisplacementTag.DIRICHLET)
    pressure = mesh.tagged_facets(flow=FlowTag.PRESSURE)
    constrained[facet_displacement[dirichlet].ravel()] = True
    constrained[facet_pressure[pressure].ravel()] = True

    layout = DofLayout(
        mesh=mesh,
        degree=degree,
        variant=variant,
        facet_displacement=facet_displacement,
        facet_total_pressure=facet_total_pressure,
        facet_pressure=facet_pressure,
        n_displacement_trace=n_displacement,
        constrained=constrained,
    )
    logger.info("built %r", layout)
    return layout


def _facet_samples(mesh, facets, exactness):
    rule = edge_quadrature(exactness)
    ends = mesh.vertices[mesh.facets[facets]]
    points = ends[:, None, 0, :] + rule.points[None, :, None] * (ends[:, None, 1, :] - ends[:, None, 0, :])
    return rule, points


def _evaluate(function, points, components):
    flat = points.reshape(-1, 2)
    values = np.asarray(function(flat), dtype=float)
    shape = (len(flat), components) if components > 1 else (len(flat),)
    return np.broadcast_to(values, shape).reshape(points.shape[:2] + shape[1:])


def project_trace(layout, function, facets, field=TraceField.DISPLACEMENT):
    """Project ``function`` onto the trace space of ``field`` over ``facets``.

    Returns ``(dofs, values)``. Facet-wise L2 projection for modal traces;
    for the continuous displacement trace, the skeleton L2 best fit over the
    given facets (shared vertex nodes are fitted jointly).
    """

    field = TraceField(field)
    facets = np.asarray(facets, dtype=np.int64)
    if facets.size == 0:
        return np.empty(0, dtype=np.int64), np.empty(0)
    mesh, degree = layout.mesh, layout.degree
    rule, points = _facet_samples(mesh, facets, 2 * degree + 4)

    if field is not TraceField.DISPLACEMENT:
        samples = _evaluate(function, points, 1)
        coefficients = samples @ (rule.weights[:, None] * EdgeBasis(degree).values(rule.points))
        table = layout.facet_total_pressure if field is TraceField.TOTAL_PRESSURE else layout.facet_pressure
        return table[facets].ravel(), coefficients.ravel()

    samples = _evaluate(function, points, 2)  # (n, Q, 2)
    dofs = layout.facet_displacement[facets]  # (n, 2, nt)
    if not layout.variant.continuous_trace:
        basis = EdgeBasis(degree).values(rule.points)
        coefficients = np.einsum("q,nqc,qm->ncm", rule.weights, samples, basis)
        return dofs.ravel(), coefficients.ravel()

    basis = LagrangeEdgeBasis(degree).values(rule.points)
    lengths = mesh.facet_lengths[facets]
    local_mass = np.einsum("q,qj,ql->jl", rule.weights, basis, basis)
    scalar = dofs[:, 0, :]
    nodes, compact = np.unique(scalar, return_inverse=True)
    compact = compact.reshape(scalar.shape)
    rows = np.repeat(compact, layout.n_trace, axis=1).ravel()
    cols = np.tile(compact, (1, layout.n_trace)).ravel()
    data = (lengths[:, None, None] * local_mass[None]).ravel()
    mass = sparse.coo_matrix((data, (rows, cols)), shape=(len(nodes), len(nodes))).tocsc()
    loads = np.einsum("n,q,nqc,qj->cnj", lengths, rule.weights, samples, basis)
    rhs = np.zeros((2, len(nodes)))
    for component in range(2):
        np.add.at(rhs[component], compact.ravel(), loads[component].ravel())
    fitted = np.atleast_2d(spsolve(mass, rhs.T)).reshape(len(nodes), 2)
    n_scalar = layout.n_displacement_trace // 2
    return np.concatenate([nodes, nodes + n_scalar]), np.concatenate([fitted[:, 0], fitted[:, 1]])


def prescribed_facet_values(layout, displacement=None, pressure=None):
    """Facet vector carrying essential data on constrained slots, zero elsewhere."""

    values = np.zeros(layout.n_facet_dofs)
    mesh = layout.mesh
    if displacement is not None:
        dofs, data = project_trace(
            layout, displacement, mesh.tagged_facets(displacement=DisplacementTag.DIRICHLET)
        )
        values[dofs] = data
    if pressure is not None:
        dofs, data = project_trace(
            layout, pressure, mesh.tagged_facets(flow=FlowTag.PRESSURE), TraceField.PRESSURE
        )
        values[dofs] = data
    return values


def facet_trace_values(layout, facet_vector, facets, field=TraceField.DISPLACEMENT, points=None):
    """Evaluate a facet vector on ``facets`` at parameters ``points`` (global direction)."""

    field = TraceField(field)
    facets = np.asarray(facets, dtype=np.int64)
    if points is None:
        points = edge_quadrature(2 * layout.degree + 2).points
    if field is TraceField.DISPLACEMENT:
        basis = (LagrangeEdgeBasis if layout.variant.continuous_trace else EdgeBasis)(layout.degree)
        coefficients = facet_vector[layout.facet_displacement[facets]]  # (n, 2, nt)
        return np.einsum("qm,ncm->nqc", basis.values(points), coefficients)
    table = layout.facet_total_pressure if field is TraceField.TOTAL_PRESSURE else layout.facet_pressure
    return facet_vector[table[facets]] @ EdgeBasis(layout.degree).values(points).T


def element_values(layout, coefficients, cells, points):
    """Evaluate per-cell modal coefficients at physical points.

    ``coefficients`` is indexed by cell, (n_cells, nb) for a scalar field or
    (n_cells, 2 nk) for a vector field; ``cells[i]`` owns ``points[i]``.
    Returns (n,) or (n, 2).
    """

    cells = np.asarray(cells, dtype=np.int64)
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    coords = layout.mesh.cell_coordinates[cells]
    _, inverse, _ = affine_maps(coords)
    reference = np.einsum("nij,nj->ni", inverse, points - coords[:, 0])
    basis = TriangleBasis(layout.degree).values(reference)
    local = np.asarray(coefficients)[cells]
    nk = layout.n_cell_basis
    if local.shape[1] == 2 * nk:
        return np.einsum("nj,ncj->nc", basis, local.reshape(len(cells), 2, nk))
    return np.einsum("nj,nj->n", basis[:, : local.shape[1]], local)
