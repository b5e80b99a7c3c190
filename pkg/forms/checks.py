"""Numerical coercivity check of a_h against |||.|||_v."""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from poro_hdg import settings

from .geometry import cell_geometry
from .services import assemble_ah_global, displacement_index, gram_v, scatter

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CoercivityReport:
    ratio: float
    method: str
    size: int
    beta: float

    @property
    def passed(self):
        return bool(self.ratio > 0.0)


def _restricted(layout, matrix):
    keep = np.concatenate(
        [
            np.ones(layout.mesh.n_cells * 2 * layout.n_cell_basis, dtype=bool),
            ~layout.constrained[: layout.n_displacement_trace],
        ]
    )
    index = np.flatnonzero(keep)
    return matrix[index][:, index]


def coercivity_check(layout, params, n_samples=None, seed=None, apply_constraints=True):
    """min a_h(v, v) / (mu |||v|||_v^2) over the discrete displacement pairs.

    Small problems use the smallest generalized eigenvalue on the range of the
    Gram matrix; larger ones (or an explicit ``n_samples``) sample random
    pairs. A non-positive ratio means beta is below the coercivity threshold.
    """

    geometry = cell_geometry(layout.mesh, layout.degree, layout.variant.continuous_trace)
    a_h = assemble_ah_global(layout, geometry, params)
    index = displacement_index(layout)
    gram = scatter(gram_v(geometry), index, index, a_h.shape)
    if apply_constraints:
        a_h, gram = _restricted(layout, a_h), _restricted(layout, gram)
    size = a_h.shape[0]

    if n_samples is None and size <= settings.DENSE_LIMIT:
        values, vectors = linalg.eigh(gram.toarray())
        keep = values > 1e-12 * values.max()
        basis = vectors[:, keep] / np.sqrt(values[keep])
        reduced = basis.T @ a_h.toarray() @ basis
        ratio = float(linalg.eigvalsh(0.5 * (reduced + reduced.T))[0] / params.mu)
        method = "eigen"
    else:
        rng = np.random.default_rng(settings.SEED if seed is None else seed)
        samples = rng.standard_normal((size, n_samples or 64))
        energy = np.einsum("ij,ij->j", samples, a_h @ samples)
        norm = params.mu * np.einsum("ij,ij->j", samples, gram @ samples)
        valid = norm > 1e-12 * norm.max()
        ratio = float((energy[valid] / norm[valid]).min())
        method = "sampled"

    report = CoercivityReport(ratio=ratio, method=method, size=size, beta=params.penalty)
    if not report.passed:
        logger.warning("coercivity check failed: ratio %.3e with beta %.3g", ratio, params.penalty)
    else:
        logger.info("coercivity ratio %.3e (%s, %d unknowns)", ratio, method, size)
    return report
