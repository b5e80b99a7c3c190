"""Mesh-dependent norms |||.|||_v and |||.|||_q of discrete pairs."""

import numpy as np

from spaces.choices import TraceField

from .services import gram_q, gram_v


def _quadratic(gram, local):
    value = float(np.einsum("ci,cij,cj->", local, gram, local))
    return max(value, 0.0)


def local_displacement(layout, element, facet_vector):
    """Cell-local ``[v | v_bar edges]`` from element (n_cells, 2 nk) and facet coefficients."""

    cells = layout.mesh.cell_facets
    trace = facet_vector[layout.facet_displacement[cells]].reshape(layout.mesh.n_cells, -1)
    return np.concatenate([element, trace], axis=1)


def local_scalar(layout, element, facet_vector, field):
    table = layout.facet_total_pressure if field is TraceField.TOTAL_PRESSURE else layout.facet_pressure
    trace = facet_vector[table[layout.mesh.cell_facets]].reshape(layout.mesh.n_cells, -1)
    return np.concatenate([element, trace], axis=1)


def norm_v(layout, geometry, element, facet_vector, squared=False):
    """|||(v, v_bar)|||_v for element coefficients (n_cells, 2 nk) and a facet vector."""

    value = _quadratic(gram_v(geometry), local_displacement(layout, element, facet_vector))
    return value if squared else float(np.sqrt(value))


def norm_q(layout, geometry, element, facet_vector, field=TraceField.PRESSURE, squared=False):
    """|||(q, q_bar)|||_q for element coefficients (n_cells, nq) and a facet vector."""

    value = _quadratic(gram_q(geometry), local_scalar(layout, element, facet_vector, TraceField(field)))
    return value if squared else float(np.sqrt(value))
