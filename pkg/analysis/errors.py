"""Quadrature-based error and energy evaluation of discrete states."""

import logging

import numpy as np

from forms.geometry import cell_geometry
from forms.norms import local_displacement
from forms.services import assemble_ah_local, mass_matrices

from .models import ErrorRecord

logger = logging.getLogger(__name__)


def _evaluate(function, points, shape):
    flat = points.reshape(-1, 2)
    values = np.broadcast_to(np.asarray(function(flat), dtype=float), (len(flat),) + shape)
    return values.reshape(points.shape[:-1] + shape)


class ErrorMeter:
    """Errors of states on one layout against an exact solution.

    ``exact`` provides ``displacement``, ``displacement_gradient``,
    ``total_pressure``, ``velocity`` and ``pressure`` as ``f(points, t)``.
    Quadrature is exact to degree 2k + 4.
    """

    def __init__(self, layout, exact, params):
        self.layout = layout
        self.exact = exact
        self.params = params
        self.geometry = cell_geometry(
            layout.mesh, layout.degree, layout.variant.continuous_trace, exactness=2 * layout.degree + 4
        )

    def _vector(self, coefficients, values):
        nk = self.layout.n_cell_basis
        return np.einsum("qi,cai->cqa", values, coefficients.reshape(len(coefficients), 2, nk))

    def _scalar(self, coefficients, values):
        return np.einsum("qi,ci->cq", values[:, : coefficients.shape[1]], coefficients)

    def _l2(self, difference):
        weights = self.geometry.volume_weights
        if difference.ndim == 3:
            difference = np.einsum("cqa,cqa->cq", difference, difference)
        else:
            difference = difference**2
        return float(np.sqrt(max(np.einsum("cq,cq->", weights, difference), 0.0)))

    def errors(self, state, time, velocity_history=None):
        """ErrorRecord at ``time``; ``velocity_history`` is sum(dt ||z - z_h||^2) when observed."""

        layout, geometry, exact, params = self.layout, self.geometry, self.exact, self.params
        tables = geometry.tables
        points = geometry.volume_points
        values = tables.volume_values

        u_h = self._vector(state.u, values)
        z_h = self._vector(state.z, values)
        pT_h = self._scalar(state.total_pressure, values)
        p_h = self._scalar(state.pressure, values)
        u = _evaluate(lambda x: exact.displacement(x, time), points, (2,))
        z = _evaluate(lambda x: exact.velocity(x, time), points, (2,))
        pT = _evaluate(lambda x: exact.total_pressure(x, time), points, ())
        p = _evaluate(lambda x: exact.pressure(x, time), points, ())
        du, dz, dpT, dp = u - u_h, z - z_h, pT - pT_h, p - p_h

        e_u, e_z, e_pT, e_p = self._l2(du), self._l2(dz), self._l2(dpT), self._l2(dp)
        e_mix = self._l2(params.alpha * dp - dpT)

        # |||(u - u_h, u - u_bar_h)|||_v: strain error plus h^-1 |u_h - u_bar_h|^2 on cell boundaries
        nk = layout.n_cell_basis
        grad_h = np.einsum("cai,cqib->cqab", state.u.reshape(-1, 2, nk), geometry.volume_gradients)
        dgrad = _evaluate(lambda x: exact.displacement_gradient(x, time), points, (2, 2)) - grad_h
        dstrain = 0.5 * (dgrad + dgrad.transpose(0, 1, 3, 2))
        strain = float(np.einsum("cq,cqab,cqab->", geometry.volume_weights, dstrain, dstrain))

        pairs = local_displacement(layout, state.u, state.facet)
        nt = layout.n_trace
        pT_trace = state.facet[layout.facet_total_pressure[layout.mesh.cell_facets]]  # (c, 3, nt)
        jump = 0.0
        trace_pT = 0.0
        for edge in range(3):
            face_values = tables.face_values[edge]
            inside = np.einsum("qi,cai->cqa", face_values, state.u.reshape(-1, 2, nk))
            coefficients = pairs[:, 2 * nk + edge * 2 * nt : 2 * nk + (edge + 1) * 2 * nt].reshape(-1, 2, nt)
            trace = np.einsum("cqm,cam->cqa", geometry.displacement_trace(edge), coefficients)
            weights = geometry.face_weights[:, edge]
            jump += float(np.einsum("cq,c,cqa,cqa->", weights, 1.0 / geometry.diameters, inside - trace, inside - trace))
            pT_bar = np.einsum("cqm,cm->cq", geometry.pressure_trace(edge), pT_trace[:, edge])
            exact_pT = _evaluate(lambda x: exact.total_pressure(x, time), geometry.face_points[:, edge], ())
            trace_pT += float(np.einsum("cq,c,cq->", weights, geometry.diameters, (exact_pT - pT_bar) ** 2))
        e_u_v = float(np.sqrt(max(strain + jump, 0.0)))
        e_pT_q = float(np.sqrt(max(e_pT**2 + trace_pT, 0.0)))

        composite_a = np.sqrt(params.c0) * e_p + e_mix / np.sqrt(params.lam) + np.sqrt(params.mu) * e_u_v
        if velocity_history is not None:
            composite_a += np.sqrt(max(velocity_history, 0.0) / params.kappa)
        mesh = layout.mesh
        return ErrorRecord(
            cells=mesh.n_cells,
            dofs=layout.n_total_dofs,
            facet_dofs=layout.n_facet_dofs,
            h=mesh.h_max,
            time=float(time),
            e_u=e_u,
            e_pT=e_pT,
            e_z=e_z,
            e_p=e_p,
            e_u_v=e_u_v,
            e_pT_q=e_pT_q,
            e_storage=e_mix,
            composite_a=float(composite_a),
            composite_b=float(e_pT_q / np.sqrt(params.mu)),
            norm_u=self._l2(u),
            norm_pT=self._l2(pT),
            norm_z=self._l2(z),
            norm_p=self._l2(p),
        )


def compute_errors(state, exact, time, params, velocity_history=None):
    return ErrorMeter(state.layout, exact, params).errors(state, time, velocity_history)


class EnergyMeter:
    """Discrete energies X^2 = a_h(u, u) + lambda^-1 ||p_T - alpha p||^2 + c0 ||p||^2 and Y^2 = kappa^-1 ||z||^2."""

    def __init__(self, layout, params, geometry=None):
        self.layout = layout
        self.params = params
        geometry = geometry or cell_geometry(layout.mesh, layout.degree, layout.variant.continuous_trace)
        self.a_h = assemble_ah_local(geometry, params)
        self.vector_mass, self.scalar_mass = mass_matrices(geometry)

    def __call__(self, state):
        params = self.params
        pairs = local_displacement(self.layout, state.u, state.facet)
        elastic = np.einsum("ci,cij,cj->", pairs, self.a_h, pairs)
        mix = state.total_pressure - params.alpha * state.pressure
        storage = np.einsum("ci,cij,cj->", mix, self.scalar_mass, mix) / params.lam
        storage += params.c0 * np.einsum("ci,cij,cj->", state.pressure, self.scalar_mass, state.pressure)
        flow = np.einsum("ci,cij,cj->", state.z, self.vector_mass, state.z) / params.kappa
        return float(np.sqrt(max(elastic + storage, 0.0))), float(np.sqrt(max(flow, 0.0)))
