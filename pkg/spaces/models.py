"""Degree-of-freedom layout for the element and facet spaces."""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from common.utils import fingerprint
from mesh.models import Mesh
from refbasis.basis import triangle_dimension

from .choices import TraceField, Variant


@dataclass(frozen=True, eq=False)
class DofLayout:
    """Numbering of element and facet unknowns.

    Element unknowns are stored per cell in the order
    ``[u_x, u_y, p_T, z_x, z_y, p]`` (``P_k``, ``P_k``, ``P_{k-1}``, ``P_k``,
    ``P_k``, ``P_{k-1}``). The global facet vector is ``[u_bar | pT_bar | p_bar]``.
    Each cell sees its facet unknowns edge by edge as
    ``[u_bar_x, u_bar_y, pT_bar, p_bar]``, ``n_trace`` entries each.
    """

    mesh: Mesh
    degree: int
    variant: Variant
    facet_displacement: np.ndarray  # (n_facets, 2, n_trace)
    facet_total_pressure: np.ndarray  # (n_facets, n_trace)
    facet_pressure: np.ndarray  # (n_facets, n_trace)
    n_displacement_trace: int
    constrained: np.ndarray  # bool over facet dofs

    def __repr__(self):
        return (
            f"DofLayout(k={self.degree}, variant={self.variant.value}, cells={self.mesh.n_cells}, "
            f"facet_dofs={self.n_facet_dofs}, free={self.n_free})"
        )

    @property
    def n_cell_basis(self):
        return triangle_dimension(self.degree)

    @property
    def n_pressure_basis(self):
        return triangle_dimension(self.degree - 1)

    @property
    def n_trace(self):
        return self.degree + 1

    @property
    def element_size(self):
        return 4 * self.n_cell_basis + 2 * self.n_pressure_basis

    @property
    def local_facet_size(self):
        return 12 * self.n_trace

    @cached_property
    def element_slices(self):
        """Slices of the per-cell element vector by field."""
        nk, nq = self.n_cell_basis, self.n_pressure_basis
        return {
            "u": slice(0, 2 * nk),
            "total_pressure": slice(2 * nk, 2 * nk + nq),
            "z": slice(2 * nk + nq, 4 * nk + nq),
            "pressure": slice(4 * nk + nq, 4 * nk + 2 * nq),
        }

    @cached_property
    def local_facet_slots(self):
        """Per-field positions inside the cell-local facet vector, indexed by edge."""
        nt = self.n_trace
        base = 4 * nt * np.arange(3)[:, None]
        offsets = np.arange(nt)[None, :]
        return {
            TraceField.DISPLACEMENT: np.stack([base + offsets, base + nt + offsets], axis=1),
            TraceField.TOTAL_PRESSURE: base + 2 * nt + offsets,
            TraceField.PRESSURE: base + 3 * nt + offsets,
        }

    @property
    def n_element_dofs(self):
        return self.mesh.n_cells * self.element_size

    @property
    def n_facet_dofs(self):
        return self.n_displacement_trace + 2 * self.mesh.n_facets * self.n_trace

    @property
    def n_total_dofs(self):
        return self.n_element_dofs + self.n_facet_dofs

    @cached_property
    def cell_facet_dofs(self):
        """Global facet dof of every cell-local facet slot, shape (n_cells, 12 * n_trace)."""

        cf = self.mesh.cell_facets
        blocks = np.concatenate(
            [
                self.facet_displacement[cf].reshape(self.mesh.n_cells, 3, -1),
                self.facet_total_pressure[cf],
                self.facet_pressure[cf],
            ],
            axis=2,
        )
        return blocks.reshape(self.mesh.n_cells, -1)

    @cached_property
    def free_index(self):
        """Position of each facet dof among the free ones, -1 where constrained."""
        index = np.full(self.n_facet_dofs, -1, dtype=np.int64)
        index[~self.constrained] = np.arange(self.n_free)
        return index

    @cached_property
    def free_dofs(self):
        return np.flatnonzero(~self.constrained)

    @cached_property
    def constrained_dofs(self):
        return np.flatnonzero(self.constrained)

    @property
    def n_free(self):
        return int((~self.constrained).sum())

    def dimensions(self):
        nc, nf = self.mesh.n_cells, self.mesh.n_facets
        pbar = self.facet_pressure.ravel()
        return {
            "V_h": 2 * nc * self.n_cell_basis,
            "Z_h": 2 * nc * self.n_cell_basis,
            "Q_h_total_pressure": nc * self.n_pressure_basis,
            "Q_h_pressure": nc * self.n_pressure_basis,
            "Vbar_h": self.n_displacement_trace,
            "Vbar_h_free": int((~self.constrained[: self.n_displacement_trace]).sum()),
            "Qbar_h_total_pressure": nf * self.n_trace,
            "Qbar_h_pressure": nf * self.n_trace,
            "Qbar0_h_pressure": int((~self.constrained[pbar]).sum()),
        }

    def fingerprint(self):
        return fingerprint(
            self.mesh.fingerprint(), self.degree, self.variant.value, self.cell_facet_dofs, self.constrained
        )
