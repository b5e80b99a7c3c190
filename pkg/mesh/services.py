"""Mesh construction, refinement, tagging and point location."""

import logging
from dataclasses import replace

import numpy as np

from common.exceptions import MeshError
from refbasis.tables import LOCAL_EDGES

from .choices import DiagonalPattern, DisplacementTag, FlowTag
from .models import Mesh

logger = logging.getLogger(__name__)


def build_topology(vertices, cells, boundary_tags=None):
    """Derive facets, adjacency and normals from vertices and cell triples."""

    vertices = np.ascontiguousarray(vertices, dtype=float)
    cells = np.array(cells, dtype=np.int64).reshape(-1, 3)
    if len(cells) == 0:
        raise MeshError("mesh has no cells")

    x = vertices[cells]
    signed = (x[:, 1, 0] - x[:, 0, 0]) * (x[:, 2, 1] - x[:, 0, 1]) - (
        x[:, 1, 1] - x[:, 0, 1]
    ) * (x[:, 2, 0] - x[:, 0, 0])
    if np.any(signed == 0.0):
        raise MeshError(f"cell {int(np.flatnonzero(signed == 0.0)[0])} is degenerate")
    negative = signed < 0.0
    if np.any(negative):
        logger.debug("reorienting %d clockwise cells", int(negative.sum()))
        cells[negative] = cells[negative][:, [0, 2, 1]]

    local = np.array(LOCAL_EDGES)
    edges = np.sort(cells[:, local], axis=2).reshape(-1, 2)
    facets, inverse = np.unique(edges, axis=0, return_inverse=True)
    cell_facets = inverse.reshape(len(cells), 3)
    n_facets = len(facets)

    flat = cell_facets.ravel()
    counts = np.bincount(flat, minlength=n_facets)
    if np.any(counts > 2):
        raise MeshError("non-manifold mesh: a facet has more than two cells")
    order = np.argsort(flat, kind="stable")
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])

    facet_cells = np.full((n_facets, 2), -1, dtype=np.int64)
    facet_local = np.full((n_facets, 2), -1, dtype=np.int64)
    first = order[starts]
    facet_cells[:, 0] = first // 3
    facet_local[:, 0] = first % 3
    shared = counts == 2
    second = order[starts[shared] + 1]
    facet_cells[shared, 1] = second // 3
    facet_local[shared, 1] = second % 3

    ends = vertices[facets]
    tangent = ends[:, 1] - ends[:, 0]
    normals = np.column_stack([tangent[:, 1], -tangent[:, 0]])
    normals /= np.linalg.norm(normals, axis=1)[:, None]
    centroids = vertices[cells].mean(axis=1)
    outward = np.einsum("fi,fi->f", normals, ends.mean(axis=1) - centroids[facet_cells[:, 0]])
    normals[outward < 0.0] *= -1.0

    return Mesh(
        vertices=vertices,
        cells=cells,
        facets=facets,
        facet_cells=facet_cells,
        facet_local_edges=facet_local,
        facet_normals=normals,
        cell_facets=cell_facets,
        boundary_tags=dict(boundary_tags or {}),
    )


def _structured_cells(nx, ny, pattern):
    """Cells of an (nx + 1) x (ny + 1) lattice, plus centre points for crisscross."""

    def vid(i, j):
        return j * (nx + 1) + i

    cells = []
    n_lattice = (nx + 1) * (ny + 1)
    for j in range(ny):
        for i in range(nx):
            v00, v10, v01, v11 = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            if pattern == DiagonalPattern.RIGHT:
                cells.append((v00, v10, v11))
                cells.append((v00, v11, v01))
            else:
                centre = n_lattice + j * nx + i
                cells.extend([(v00, v10, centre), (v10, v11, centre), (v11, v01, centre), (v01, v00, centre)])
    return np.asarray(cells, dtype=np.int64)


def build_rectangle(x_range, y_range, nx, ny, diagonal_pattern=DiagonalPattern.RIGHT):
    """Structured triangulation of a rectangle; tags are applied by ``tag_boundary``."""

    (x0, x1), (y0, y1) = x_range, y_range
    if not (x1 > x0 and y1 > y0):
        raise MeshError(f"degenerate rectangle {tuple(x_range)} x {tuple(y_range)}")
    if nx < 1 or ny < 1:
        raise MeshError(f"need at least one subdivision per side, got nx={nx}, ny={ny}")
    pattern = DiagonalPattern(diagonal_pattern)

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    gx, gy = np.meshgrid(xs, ys)
    vertices = np.column_stack([gx.ravel(), gy.ravel()])
    if pattern == DiagonalPattern.CRISSCROSS:
        cx, cy = np.meshgrid(0.5 * (xs[:-1] + xs[1:]), 0.5 * (ys[:-1] + ys[1:]))
        vertices = np.vstack([vertices, np.column_stack([cx.ravel(), cy.ravel()])])
    return build_topology(vertices, _structured_cells(nx, ny, pattern))


def build_structured_square(n, diagonal_pattern=DiagonalPattern.RIGHT):
    if n < 1:
        raise MeshError(f"n must be >= 1, got {n}")
    return build_rectangle((0.0, 1.0), (0.0, 1.0), n, n, diagonal_pattern)


def everywhere(points):
    return np.ones(len(points), dtype=bool)


def on_line(axis, value, tol=1e-10):
    """Predicate selecting midpoints with coordinate ``axis`` equal to ``value``."""

    def predicate(points):
        return np.abs(points[:, axis] - value) <= tol * max(1.0, abs(value))

    return predicate


def _match(rule, tags, midpoints, partition):
    matches = np.zeros((len(midpoints), len(tags)), dtype=bool)
    for column, tag in enumerate(tags):
        predicate = rule.get(tag) or rule.get(tag.value)
        if predicate is not None:
            matches[:, column] = np.broadcast_to(predicate(midpoints), len(midpoints))
    counts = matches.sum(axis=1)
    for row in np.flatnonzero(counts != 1):
        problem = "matched by no" if counts[row] == 0 else "matched by several"
        raise MeshError(
            f"boundary facet with midpoint {midpoints[row].tolist()} is {problem} {partition} rule"
        )
    return [tags[column] for column in matches.argmax(axis=1)]


def tag_boundary(mesh, displacement_rule, flow_rule):
    """Tag every boundary facet in both partitions.

    Rules map a tag (enum or its letter) to a vectorized predicate on facet
    midpoints; each boundary facet must match exactly one tag per partition.
    """

    facets = mesh.boundary_facets
    midpoints = mesh.facet_midpoints[facets]
    dtags = _match(displacement_rule, list(DisplacementTag), midpoints, "displacement")
    ftags = _match(flow_rule, list(FlowTag), midpoints, "flow")
    tags = {int(f): (d, p) for f, d, p in zip(facets, dtags, ftags)}
    return replace(mesh, boundary_tags=tags).clean()


def uniform_refine(mesh):
    """Split every triangle into four congruent children; tags are inherited."""

    nv = mesh.n_vertices
    vertices = np.vstack([mesh.vertices, mesh.facet_midpoints])
    v = mesh.cells
    m = nv + mesh.cell_facets  # midpoint of the edge opposite local vertex e
    children = np.concatenate(
        [
            np.column_stack([v[:, 0], m[:, 2], m[:, 1]]),
            np.column_stack([m[:, 2], v[:, 1], m[:, 0]]),
            np.column_stack([m[:, 1], m[:, 0], v[:, 2]]),
            np.column_stack([m[:, 0], m[:, 1], m[:, 2]]),
        ]
    )
    # keep the four children of a parent together
    children = children.reshape(4, -1, 3).transpose(1, 0, 2).reshape(-1, 3)
    refined = build_topology(vertices, children)

    tags = {}
    for f in refined.boundary_facets:
        parent = int(refined.facets[f].max()) - nv
        if parent in mesh.boundary_tags:
            tags[int(f)] = mesh.boundary_tags[parent]
    return replace(refined, boundary_tags=tags)


def segment_measure(mesh, predicate=None, displacement=None, flow=None):
    """Total length of boundary facets selected by tags and/or a midpoint predicate."""

    if displacement is None and flow is None:
        facets = mesh.boundary_facets
    else:
        facets = mesh.tagged_facets(displacement=displacement, flow=flow)
    if predicate is not None and len(facets):
        facets = facets[np.broadcast_to(predicate(mesh.facet_midpoints[facets]), len(facets))]
    return float(mesh.facet_lengths[facets].sum())


def locate_points(mesh, points, tol=1e-12):
    """Owning cell and reference coordinates of each point.

    Points on shared edges go to the lowest-index cell containing them.
    """

    points = np.asarray(points, dtype=float).reshape(-1, 2)
    x = mesh.cell_coordinates
    e1 = x[:, 1] - x[:, 0]
    e2 = x[:, 2] - x[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    rel = points[:, None, :] - x[None, :, 0, :]
    xi = (rel[..., 0] * e2[:, 1] - rel[..., 1] * e2[:, 0]) / det
    eta = (e1[:, 0] * rel[..., 1] - e1[:, 1] * rel[..., 0]) / det
    inside = (xi >= -tol) & (eta >= -tol) & (xi + eta <= 1.0 + tol)
    found = inside.any(axis=1)
    if not np.all(found):
        raise MeshError(f"point {points[np.flatnonzero(~found)[0]].tolist()} lies outside the mesh")
    cells = inside.argmax(axis=1)
    rows = np.arange(len(points))
    reference = np.column_stack([xi[rows, cells], eta[rows, cells]])
    return cells, reference
