"""Cached reference evaluation tables shared by assembly, projection and errors."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .basis import EdgeBasis, LagrangeEdgeBasis, TriangleBasis, triangle_dimension
from .mapping import REFERENCE_VERTICES
from .quadrature import edge_quadrature, triangle_quadrature

# Local edge e joins local vertices (e + 1) % 3 -> (e + 2) % 3 (opposite vertex e).
LOCAL_EDGES = ((1, 2), (2, 0), (0, 1))


@dataclass(frozen=True)
class ReferenceTables:
    degree: int
    continuous_trace: bool
    exactness: int
    cell_basis: TriangleBasis
    displacement_trace_basis: object
    pressure_trace_basis: EdgeBasis
    volume_points: np.ndarray
    volume_weights: np.ndarray
    volume_values: np.ndarray
    volume_gradients: np.ndarray
    edge_points: np.ndarray
    edge_weights: np.ndarray
    face_points: np.ndarray
    face_values: np.ndarray
    face_gradients: np.ndarray
    displacement_trace: np.ndarray
    pressure_trace: np.ndarray

    @property
    def n_cell(self):
        """dim P_k on a cell."""
        return self.cell_basis.dimension

    @property
    def n_pressure(self):
        """dim P_{k-1} on a cell."""
        return triangle_dimension(self.degree - 1)

    @property
    def n_trace(self):
        return self.degree + 1


@lru_cache(maxsize=None)
def reference_tables(degree, continuous_trace=False, exactness=None):
    """Tables for degree ``degree``; quadrature exactness defaults to 2k + 2.

    ``face_*`` tables are indexed by local edge and sampled in the cell's
    local edge direction. Trace tables are indexed by orientation flip: a
    flipped edge runs against its facet's global direction, so facet basis
    functions are evaluated at ``1 - s``.
    """

    exactness = 2 * degree + 2 if exactness is None else int(exactness)
    cell_basis = TriangleBasis(degree)
    volume = triangle_quadrature(exactness)
    edge = edge_quadrature(exactness)

    face_points = np.stack(
        [
            REFERENCE_VERTICES[a] + np.outer(edge.points, REFERENCE_VERTICES[b] - REFERENCE_VERTICES[a])
            for a, b in LOCAL_EDGES
        ]
    )
    face_values = np.stack([cell_basis.values(points) for points in face_points])
    face_gradients = np.stack([cell_basis.gradients(points) for points in face_points])

    displacement_basis = LagrangeEdgeBasis(degree) if continuous_trace else EdgeBasis(degree)
    pressure_basis = EdgeBasis(degree)
    orientations = (edge.points, 1.0 - edge.points)
    displacement_trace = np.stack([displacement_basis.values(s) for s in orientations])
    pressure_trace = np.stack([pressure_basis.values(s) for s in orientations])

    return ReferenceTables(
        degree=degree,
        continuous_trace=continuous_trace,
        exactness=exactness,
        cell_basis=cell_basis,
        displacement_trace_basis=displacement_basis,
        pressure_trace_basis=pressure_basis,
        volume_points=volume.points,
        volume_weights=volume.weights,
        volume_values=cell_basis.values(volume.points),
        volume_gradients=cell_basis.gradients(volume.points),
        edge_points=edge.points,
        edge_weights=edge.weights,
        face_points=face_points,
        face_values=face_values,
        face_gradients=face_gradients,
        displacement_trace=displacement_trace,
        pressure_trace=pressure_trace,
    )
