"""Affine maps from the reference triangle to physical cells."""

from dataclasses import dataclass

import numpy as np

from common.exceptions import MeshError

REFERENCE_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


@dataclass(frozen=True)
class AffineMap:
    """x = origin + jacobian @ xi for one cell."""

    origin: np.ndarray
    jacobian: np.ndarray
    inverse_jacobian: np.ndarray
    det: float

    def to_physical(self, reference_points):
        return self.origin + np.asarray(reference_points) @ self.jacobian.T

    def to_reference(self, physical_points):
        return (np.asarray(physical_points) - self.origin) @ self.inverse_jacobian.T

    def physical_gradients(self, reference_gradients):
        """Map gradients (..., 2) with the inverse-jacobian transpose."""

        return np.asarray(reference_gradients) @ self.inverse_jacobian


def affine_map(cell_vertices):
    vertices = np.asarray(cell_vertices, dtype=float)
    jacobian = np.column_stack([vertices[1] - vertices[0], vertices[2] - vertices[0]])
    det = float(np.linalg.det(jacobian))
    if det <= 0.0:
        raise MeshError(
            f"degenerate or negatively oriented cell (det = {det:.3e}) at {vertices.tolist()}"
        )
    return AffineMap(
        origin=vertices[0].copy(),
        jacobian=jacobian,
        inverse_jacobian=np.linalg.inv(jacobian),
        det=det,
    )


def affine_maps(cell_coordinates):
    """Batched jacobians for an array of cells (n, 3, 2).

    Returns ``(jacobian, inverse_jacobian, det)`` with shapes (n, 2, 2),
    (n, 2, 2) and (n,).
    """

    coords = np.asarray(cell_coordinates, dtype=float)
    jacobian = np.stack([coords[:, 1] - coords[:, 0], coords[:, 2] - coords[:, 0]], axis=2)
    det = jacobian[:, 0, 0] * jacobian[:, 1, 1] - jacobian[:, 0, 1] * jacobian[:, 1, 0]
    bad = np.flatnonzero(det <= 0.0)
    if bad.size:
        raise MeshError(f"cell {int(bad[0])} is degenerate or negatively oriented")
    inverse = np.empty_like(jacobian)
    inverse[:, 0, 0] = jacobian[:, 1, 1] / det
    inverse[:, 1, 1] = jacobian[:, 0, 0] / det
    inverse[:, 0, 1] = -jacobian[:, 0, 1] / det
    inverse[:, 1, 0] = -jacobian[:, 1, 0] / det
    return jacobian, inverse, det
