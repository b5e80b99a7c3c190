"""Closed-form solutions of the total-pressure Biot system and their derived data."""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import sympy as sym

from common.utils import as_points, broadcast_field
from timeloop.choices import Scheme
from timeloop.models import ProblemData

logger = logging.getLogger(__name__)

x, y, t = sym.symbols("x y t")


def _compile(expression):
    return sym.lambdify((x, y, t), expression, "numpy")


def _compile_entries(expression):
    """Compile scalars directly and matrices entry by entry (entries may be constants)."""

    if isinstance(expression, sym.MatrixBase):
        return [[_compile(expression[i, j]) for j in range(expression.shape[1])] for i in range(expression.shape[0])]
    return _compile(expression)


class ExactSolution:
    """u(x, t) and p(x, t) with every derived field and load.

    p_T = -lambda div u + alpha p, z = -kappa grad p, sigma = 2 mu eps(u) - p_T I,
    f = -div sigma and g = d/dt S + div z with storage S = c0 p + alpha/lambda (alpha p - p_T).
    With ``static`` the time derivative is dropped: g = S + div z.
    """

    def __init__(self, displacement, pressure, params, static=False, name=""):
        self.params = params
        self.static = static
        self.name = name
        mu, lam, alpha, kappa, c0 = params.mu, params.lam, params.alpha, params.kappa, params.c0

        u = sym.Matrix([sym.sympify(component) for component in displacement])
        p = sym.sympify(pressure)
        grad_u = u.jacobian([x, y])
        div_u = grad_u[0, 0] + grad_u[1, 1]
        strain = (grad_u + grad_u.T) / 2
        p_total = -lam * div_u + alpha * p
        velocity = -kappa * sym.Matrix([sym.diff(p, x), sym.diff(p, y)])
        stress = 2 * mu * strain - p_total * sym.eye(2)
        body = -sym.Matrix([sym.diff(stress[a, 0], x) + sym.diff(stress[a, 1], y) for a in range(2)])
        storage = c0 * p + alpha / lam * (alpha * p - p_total)
        div_z = sym.diff(velocity[0], x) + sym.diff(velocity[1], y)
        source = (storage if static else sym.diff(storage, t)) + div_z

        self.symbols = {
            "u": u,
            "p": p,
            "grad_u": grad_u,
            "grad_p": sym.Matrix([sym.diff(p, x), sym.diff(p, y)]),
            "p_T": p_total,
            "z": velocity,
            "sigma": stress,
            "f": body,
            "storage": storage,
            "g": source,
        }
        self._functions = {name: _compile_entries(expression) for name, expression in self.symbols.items()}

    def __repr__(self):
        return f"ExactSolution({self.name or 'custom'}, static={self.static})"

    def evaluate(self, name, points, time):
        """Evaluate a derived field at (N, 2) points: scalars (N,), vectors (N, 2), tensors (N, 2, 2)."""

        points = as_points(points).reshape(-1, 2)
        n = len(points)
        compiled = self._functions[name]
        if not isinstance(compiled, list):
            return broadcast_field(compiled(points[:, 0], points[:, 1], time), (n,))
        out = np.empty((n, len(compiled), len(compiled[0])))
        for i, row in enumerate(compiled):
            for j, entry in enumerate(row):
                out[:, i, j] = broadcast_field(entry(points[:, 0], points[:, 1], time), (n,))
        return out[:, :, 0] if out.shape[2] == 1 else out

    def displacement(self, points, time):
        return self.evaluate("u", points, time)

    def displacement_gradient(self, points, time):
        return self.evaluate("grad_u", points, time)

    def pressure(self, points, time):
        return self.evaluate("p", points, time)

    def pressure_gradient(self, points, time):
        return self.evaluate("grad_p", points, time)

    def total_pressure(self, points, time):
        return self.evaluate("p_T", points, time)

    def velocity(self, points, time):
        return self.evaluate("z", points, time)

    def stress(self, points, time):
        return self.evaluate("sigma", points, time)

    def body_force(self, points, time):
        return self.evaluate("f", points, time)

    def source(self, points, time):
        return self.evaluate("g", points, time)

    def storage(self, points, time):
        return self.evaluate("storage", points, time)

    def traction(self, points, normals, time):
        return np.einsum("nab,nb->na", self.stress(points, time), np.asarray(normals).reshape(-1, 2))

    def flux(self, points, normals, time):
        return np.einsum("na,na->n", self.velocity(points, time), np.asarray(normals).reshape(-1, 2))

    def problem_data(self):
        """Loads, boundary data and initial fields taken from this solution."""

        return ProblemData(
            body_force=self.body_force,
            source=self.source,
            traction=self.traction,
            flux=self.flux,
            displacement=self.displacement,
            pressure=self.pressure,
            initial_displacement=lambda points: self.displacement(points, 0.0),
            initial_displacement_gradient=lambda points: self.displacement_gradient(points, 0.0),
            initial_pressure=lambda points: self.pressure(points, 0.0),
            initial_pressure_gradient=lambda points: self.pressure_gradient(points, 0.0),
        )

    def original_form_residuals(self, points, time):
        """Relative mismatch of f and g against the displacement-pressure form of Biot's equations.

        There sigma = 2 mu eps(u) + lambda div u I - alpha p I and the flow
        equation reads d/dt (c0 p + alpha div u) - div(kappa grad p) = g.
        """

        params = self.params
        u, p = self.symbols["u"], self.symbols["p"]
        grad_u = u.jacobian([x, y])
        div_u = grad_u[0, 0] + grad_u[1, 1]
        stress = params.mu * (grad_u + grad_u.T) + (params.lam * div_u - params.alpha * p) * sym.eye(2)
        body = -sym.Matrix([sym.diff(stress[a, 0], x) + sym.diff(stress[a, 1], y) for a in range(2)])
        content = params.c0 * p + params.alpha * div_u
        laplace = sym.diff(params.kappa * sym.diff(p, x), x) + sym.diff(params.kappa * sym.diff(p, y), y)
        source = (content if self.static else sym.diff(content, t)) - laplace

        points = as_points(points).reshape(-1, 2)
        n = len(points)
        f_orig = np.column_stack(
            [broadcast_field(_compile(body[a])(points[:, 0], points[:, 1], time), (n,)) for a in range(2)]
        )
        g_orig = broadcast_field(_compile(source)(points[:, 0], points[:, 1], time), (n,))
        return {
            "f": _relative(self.body_force(points, time), f_orig),
            "g": _relative(self.source(points, time), g_orig),
        }

    def numeric_residuals(self, points, time, step=1e-3):
        """Relative mismatch of f and g against fourth-order central differences of sigma, z and S."""

        points = as_points(points).reshape(-1, 2)
        weights = np.array([1.0, -8.0, 8.0, -1.0]) / (12.0 * step)
        offsets = np.array([-2.0, -1.0, 1.0, 2.0]) * step

        def derivative(function, axis):
            total = 0.0
            for weight, offset in zip(weights, offsets):
                shifted = points.copy()
                shifted[:, axis] += offset
                total = total + weight * function(shifted)
            return total

        def stress_column(column):
            return lambda pts: self.stress(pts, time)[:, :, column]

        def velocity_component(component):
            return lambda pts: self.velocity(pts, time)[:, component]

        f_fd = -(derivative(stress_column(0), 0) + derivative(stress_column(1), 1))
        div_z = derivative(velocity_component(0), 0) + derivative(velocity_component(1), 1)
        if self.static:
            rate = self.storage(points, time)
        else:
            rate = sum(w * self.storage(points, time + o) for w, o in zip(weights, offsets))
        return {
            "f": _relative(self.body_force(points, time), f_fd),
            "g": _relative(self.source(points, time), rate + div_z),
        }


def _relative(value, reference):
    scale = max(float(np.abs(reference).max(initial=0.0)), float(np.abs(value).max(initial=0.0)), 1e-300)
    return float(np.abs(value - reference).max(initial=0.0) / scale)


@dataclass(frozen=True)
class BenchmarkCase:
    """A named problem: domain, boundary partitions, parameters, data and run defaults."""

    name: str
    params: object
    x_range: Tuple[float, float]
    y_range: Tuple[float, float]
    displacement_rule: Dict[str, Callable]
    flow_rule: Dict[str, Callable]
    problem: ProblemData
    exact: Optional[ExactSolution] = None
    scheme: Scheme = Scheme.BDF2
    t_final: float = 0.0
    dt: float = 0.0
    variant: str = "hdg"
    nx: int = 4
    ny: int = 4
    line_samples: Tuple[float, ...] = ()
    notes: Dict[str, object] = field(default_factory=dict)

    @property
    def is_static(self):
        return self.scheme is Scheme.STATIC
