"""Solution state, time weights and the condensed global operator."""

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from spaces.models import DofLayout


@dataclass(frozen=True)
class TimeWeights:
    """Weights of the storage term: ``leading`` on the new level, ``history`` on past levels.

    The storage form H(p, p_T) = (c0 p, q) + lambda^-1 (alpha p - p_T, alpha q)
    enters the pressure equation as ``leading * H(new) - sum(history[j] * H(level n - j))``.
    """

    leading: float
    history: Tuple[float, ...] = ()
    label: str = ""


def backward_euler(dt):
    return TimeWeights(leading=1.0 / dt, history=(1.0 / dt,), label="be")


def bdf2(dt):
    return TimeWeights(leading=1.5 / dt, history=(2.0 / dt, -0.5 / dt), label="bdf2")


def static():
    return TimeWeights(leading=1.0, history=(), label="static")


@dataclass(eq=False)
class SolutionState:
    """Coefficients of all seven unknowns at one time level."""

    layout: DofLayout
    interior: np.ndarray  # (n_cells, element_size)
    facet: np.ndarray  # (n_facet_dofs,)
    time: float = 0.0
    residual: object = field(default=None, compare=False)

    @classmethod
    def zeros(cls, layout, time=0.0):
        return cls(
            layout=layout,
            interior=np.zeros((layout.mesh.n_cells, layout.element_size)),
            facet=np.zeros(layout.n_facet_dofs),
            time=float(time),
        )

    def copy(self):
        return SolutionState(self.layout, self.interior.copy(), self.facet.copy(), self.time, self.residual)

    def _element(self, name):
        return self.interior[:, self.layout.element_slices[name]]

    @property
    def u(self):
        return self._element("u")

    @property
    def total_pressure(self):
        return self._element("total_pressure")

    @property
    def z(self):
        return self._element("z")

    @property
    def pressure(self):
        return self._element("pressure")

    @property
    def u_bar(self):
        return self.facet[: self.layout.n_displacement_trace]

    @property
    def total_pressure_bar(self):
        return self.facet[self.layout.facet_total_pressure.ravel()]

    @property
    def pressure_bar(self):
        return self.facet[self.layout.facet_pressure.ravel()]

    def is_finite(self):
        return bool(np.all(np.isfinite(self.interior)) and np.all(np.isfinite(self.facet)))

    def max_abs(self):
        return float(max(np.abs(self.interior).max(initial=0.0), np.abs(self.facet).max(initial=0.0)))


@dataclass(frozen=True)
class StepData:
    """Right-hand side ingredients at the new time level."""

    body: np.ndarray  # (n_cells, 2 nk): (f, v)
    source: np.ndarray  # (n_cells, nq): (g, q)
    facet_load: np.ndarray  # (n_facet_dofs,): <t, v_bar> and -<z_N, q_bar>
    prescribed: np.ndarray  # (n_facet_dofs,): essential values on constrained slots

    @classmethod
    def zeros(cls, layout):
        n_cells = layout.mesh.n_cells
        return cls(
            body=np.zeros((n_cells, 2 * layout.n_cell_basis)),
            source=np.zeros((n_cells, layout.n_pressure_basis)),
            facet_load=np.zeros(layout.n_facet_dofs),
            prescribed=np.zeros(layout.n_facet_dofs),
        )


@dataclass(frozen=True)
class ResidualReport:
    """``condensed`` is measured on the equilibrated facet system, so every row counts alike."""

    condensed: float
    full: float
    free_unknowns: int
    refined: bool = False
    iterations: int = 0


@dataclass(eq=False)
class CondensedSystem:
    """Cell blocks of the coupled step operator and the factored facet Schur complement."""

    layout: DofLayout
    params: object
    weights: TimeWeights
    interior_block: np.ndarray  # K_ii (n_cells, ni, ni)
    interior_facet: np.ndarray  # K_if (n_cells, ni, nf)
    facet_interior: np.ndarray  # K_fi (n_cells, nf, ni)
    facet_block: np.ndarray  # K_ff (n_cells, nf, nf)
    eliminated: np.ndarray  # K_ii^-1 K_if
    schur_free: object  # CSC, free rows and columns
    schur_coupling: object  # CSR, free rows, constrained columns
    factor: object = field(repr=False, default=None)  # SuperLU of R schur_free C
    storage: np.ndarray = field(repr=False, default=None)  # (c0 + alpha^2/lambda) M_q, (n_cells, nq, nq)
    coupling: np.ndarray = field(repr=False, default=None)  # (alpha/lambda) M_q
    row_scale: np.ndarray = field(repr=False, default=None)  # diagonal of R
    column_scale: np.ndarray = field(repr=False, default=None)  # diagonal of C

    @property
    def n_free(self):
        return self.schur_free.shape[0]

    def solve_free(self, rhs):
        """x with schur_free x = rhs, through the factor of the equilibrated matrix."""

        return self.column_scale * self.factor.solve(self.row_scale * rhs)

    def scaled_residual(self, solution, rhs):
        """||R (rhs - schur_free x)|| / ||R rhs||."""

        scaled_rhs = self.row_scale * rhs
        scale = np.linalg.norm(scaled_rhs) or 1.0
        return float(np.linalg.norm(scaled_rhs - self.row_scale * (self.schur_free @ solution)) / scale)
