"""Simplicial mesh with facet topology and two boundary partitions."""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Tuple

import numpy as np

from common.exceptions import ValidationError
from common.utils import fingerprint
from refbasis.tables import LOCAL_EDGES

from .choices import DisplacementTag, FlowTag

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation; immutable once built.

    ``facets`` hold sorted vertex pairs (lower index first), which also fixes
    the facet parametrization. ``facet_cells[f, 0]`` is the lower-index cell,
    ``facet_cells[f, 1]`` is -1 on the boundary, and ``facet_normals`` point
    out of ``facet_cells[f, 0]``.
    """

    vertices: np.ndarray
    cells: np.ndarray
    facets: np.ndarray
    facet_cells: np.ndarray
    facet_local_edges: np.ndarray
    facet_normals: np.ndarray
    cell_facets: np.ndarray
    boundary_tags: Dict[int, Tuple[DisplacementTag, FlowTag]] = field(default_factory=dict)

    def __repr__(self):
        return (
            f"Mesh(vertices={self.n_vertices}, cells={self.n_cells}, "
            f"facets={self.n_facets}, tagged={len(self.boundary_tags)})"
        )

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_facets(self):
        return len(self.facets)

    @cached_property
    def boundary_facets(self):
        return np.flatnonzero(self.facet_cells[:, 1] < 0)

    @cached_property
    def interior_facets(self):
        return np.flatnonzero(self.facet_cells[:, 1] >= 0)

    @cached_property
    def cell_coordinates(self):
        return self.vertices[self.cells]

    @cached_property
    def cell_areas(self):
        x = self.cell_coordinates
        e1 = x[:, 1] - x[:, 0]
        e2 = x[:, 2] - x[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def facet_lengths(self):
        ends = self.vertices[self.facets]
        return np.linalg.norm(ends[:, 1] - ends[:, 0], axis=1)

    @cached_property
    def facet_midpoints(self):
        return self.vertices[self.facets].mean(axis=1)

    @cached_property
    def cell_diameters(self):
        """Longest edge of each cell."""
        return self.facet_lengths[self.cell_facets].max(axis=1)

    @property
    def h_max(self):
        return float(self.cell_diameters.max())

    @property
    def area(self):
        return float(self.cell_areas.sum())

    @cached_property
    def normal_signs(self):
        """+1 where the global facet normal is outward for the cell, else -1."""
        owner = self.facet_cells[self.cell_facets, 0]
        return np.where(owner == np.arange(self.n_cells)[:, None], 1.0, -1.0)

    @cached_property
    def edge_flips(self):
        """True where local edge e runs against its facet's global direction."""
        local = np.array(LOCAL_EDGES)
        return self.cells[:, local[:, 0]] > self.cells[:, local[:, 1]]

    def displacement_tag(self, facet):
        return self.boundary_tags[int(facet)][0]

    def flow_tag(self, facet):
        return self.boundary_tags[int(facet)][1]

    def tagged_facets(self, displacement=None, flow=None):
        """Boundary facets carrying the given tag(s), in increasing order."""

        selected = [
            f
            for f, (dtag, ftag) in sorted(self.boundary_tags.items())
            if (displacement is None or dtag == displacement) and (flow is None or ftag == flow)
        ]
        return np.asarray(selected, dtype=int)

    def fingerprint(self):
        tags = tuple((f, d.value, p.value) for f, (d, p) in sorted(self.boundary_tags.items()))
        return fingerprint(self.vertices, self.cells, tags)

    def clean(self, strict=False):
        """Validate geometry and boundary tagging.

        With ``strict`` an empty Dirichlet or pressure partition is an error;
        otherwise it is only logged.
        """

        if np.any(self.cell_areas <= 0.0):
            bad = int(np.flatnonzero(self.cell_areas <= 0.0)[0])
            raise ValidationError(f"cell {bad} has non-positive area")
        counts = np.bincount(self.cell_facets.ravel(), minlength=self.n_facets)
        if np.any(counts > 2):
            raise ValidationError("facet shared by more than two cells")
        missing = [int(f) for f in self.boundary_facets if int(f) not in self.boundary_tags]
        if self.boundary_tags and missing:
            midpoint = self.facet_midpoints[missing[0]]
            raise ValidationError(f"boundary facet at {midpoint.tolist()} has no tags")
        if not self.boundary_tags:
            return self
        for name, measure in (
            ("Gamma_D", self.tagged_facets(displacement=DisplacementTag.DIRICHLET)),
            ("Gamma_P", self.tagged_facets(flow=FlowTag.PRESSURE)),
        ):
            if measure.size == 0:
                if strict:
                    raise ValidationError(f"{name} is empty")
                logger.warning("%s is empty on %r", name, self)
        return self
