"""Per-cell geometric factors at the quadrature points of the reference tables."""

from dataclasses import dataclass

import numpy as np

from refbasis.mapping import affine_maps
from refbasis.tables import reference_tables


@dataclass(frozen=True, eq=False)
class CellGeometry:
    """Batched geometry for every cell of a mesh (first axis = cell).

    Edge quantities are indexed by local edge; ``normals`` are outward for
    the cell and ``flips`` select the trace table orientation.
    """

    tables: object
    jacobian: np.ndarray
    inverse_jacobian: np.ndarray
    det: np.ndarray
    diameters: np.ndarray
    lengths: np.ndarray
    normals: np.ndarray
    flips: np.ndarray
    volume_points: np.ndarray
    volume_weights: np.ndarray
    volume_gradients: np.ndarray
    face_points: np.ndarray
    face_weights: np.ndarray
    face_gradients: np.ndarray

    @property
    def n_cells(self):
        return len(self.det)

    def displacement_trace(self, edge):
        """Displacement trace basis on ``edge`` for every cell, (n_cells, Qf, nt)."""
        return self.tables.displacement_trace[self.flips[:, edge]]

    def pressure_trace(self, edge):
        return self.tables.pressure_trace[self.flips[:, edge]]


def cell_geometry(mesh, degree, continuous_trace=False, exactness=None):
    tables = reference_tables(degree, continuous_trace, exactness)
    coords = mesh.cell_coordinates
    jacobian, inverse, det = affine_maps(coords)
    origin = coords[:, 0]

    volume_points = origin[:, None, :] + np.einsum("cij,qj->cqi", jacobian, tables.volume_points)
    face_points = origin[:, None, None, :] + np.einsum("cij,eqj->ceqi", jacobian, tables.face_points)
    lengths = mesh.facet_lengths[mesh.cell_facets]
    normals = mesh.facet_normals[mesh.cell_facets] * mesh.normal_signs[:, :, None]

    return CellGeometry(
        tables=tables,
        jacobian=jacobian,
        inverse_jacobian=inverse,
        det=det,
        diameters=mesh.cell_diameters,
        lengths=lengths,
        normals=normals,
        flips=mesh.edge_flips.astype(np.int64),
        volume_points=volume_points,
        volume_weights=det[:, None] * tables.volume_weights[None, :],
        volume_gradients=np.einsum("qjd,cde->cqje", tables.volume_gradients, inverse),
        face_points=face_points,
        face_weights=lengths[:, :, None] * tables.edge_weights[None, None, :],
        face_gradients=np.einsum("eqjd,cdf->ceqjf", tables.face_gradients, inverse),
    )
