"""Benchmark problem registry: manufactured solutions, footing and cantilever."""

import logging
from dataclasses import replace

import numpy as np
import sympy as sym

from common.exceptions import ConfigError
from forms.models import ModelParams
from mesh.services import build_rectangle, on_line, tag_boundary, uniform_refine
from timeloop.choices import Scheme
from timeloop.models import ProblemData

from .models import BenchmarkCase, ExactSolution, t, x, y

logger = logging.getLogger(__name__)

FOOTING_LOAD = 1.0e4
FOOTING_HALF_WIDTH = 50.0 / 3.0
CANTILEVER_LINES = (0.26, 0.33, 0.40, 0.46)


def _either(*predicates):
    return lambda points: np.logical_or.reduce([predicate(points) for predicate in predicates])


def unit_square_rules():
    """Sides of the unit square: 1 bottom, 2 right, 3 top, 4 left.

    Gamma_D = 1, 3, 4 and Gamma_T = 2; Gamma_P = 1, 2 and Gamma_F = 3, 4.
    """

    bottom, right, top, left = on_line(1, 0.0), on_line(0, 1.0), on_line(1, 1.0), on_line(0, 0.0)
    return (
        {"D": _either(bottom, top, left), "T": right},
        {"P": _either(bottom, right), "F": _either(top, left)},
    )


def static_case(E=1e4, nu=0.4, degree=1, variant="hdg"):
    """Steady manufactured solution on the unit square (storage without time derivative)."""

    params = ModelParams(E=E, nu=nu, c0=1e-5, alpha=0.1, kappa=1e-7, degree=degree)
    a, b, lam = 1e-4, sym.pi, params.lam
    displacement = (
        a * (sym.sin(sym.pi * x) * sym.cos(sym.pi * y) + x**2 / (2 * lam)),
        a * (-sym.cos(sym.pi * x) * sym.sin(sym.pi * y) + y**2 / (2 * lam)),
    )
    pressure = b * sym.sin(sym.pi * x) * sym.sin(sym.pi * y)
    exact = ExactSolution(displacement, pressure, params, static=True, name="static")
    displacement_rule, flow_rule = unit_square_rules()
    return BenchmarkCase(
        name="static",
        params=params,
        x_range=(0.0, 1.0),
        y_range=(0.0, 1.0),
        displacement_rule=displacement_rule,
        flow_rule=flow_rule,
        problem=exact.problem_data(),
        exact=exact,
        scheme=Scheme.STATIC,
        variant=variant,
        nx=2,
        ny=2,
    )


def quasistatic_case(degree=1, variant="hdg", dt=1e-3, t_final=0.1):
    """Time-dependent manufactured solution on the unit square with u(x, 0) = 0."""

    params = ModelParams(E=1e4, nu=0.2, c0=0.1, alpha=0.1, kappa=1e-2, degree=degree)
    displacement = (
        sym.sin(sym.pi * t) * sym.sin(sym.pi * x) * sym.sin(sym.pi * y),
        sym.sin(sym.pi * t) * sym.sin(sym.pi * x) * sym.cos(sym.pi * y),
    )
    pressure = sym.sin(sym.pi * (x - y - t))
    exact = ExactSolution(displacement, pressure, params, name="quasistatic")
    displacement_rule, flow_rule = unit_square_rules()
    return BenchmarkCase(
        name="quasistatic",
        params=params,
        x_range=(0.0, 1.0),
        y_range=(0.0, 1.0),
        displacement_rule=displacement_rule,
        flow_rule=flow_rule,
        problem=exact.problem_data(),
        exact=exact,
        scheme=Scheme.BDF2,
        t_final=t_final,
        dt=dt,
        variant=variant,
        nx=4,
        ny=4,
    )


def footing_traction(points, normals, time, load=FOOTING_LOAD):
    """(0, -load) on the loaded part of the top, zero elsewhere.

    The load is evaluated pointwise, so the edges x = +-50/3 need not be mesh
    vertices: on the default 64 x 64 grid they fall inside a top facet, which
    then carries the load only at its quadrature points with |x| <= 50/3.
    """

    points = np.asarray(points).reshape(-1, 2)
    loaded = (np.abs(points[:, 0]) <= FOOTING_HALF_WIDTH) & np.isclose(points[:, 1], 75.0)
    out = np.zeros_like(points)
    out[loaded, 1] = -load
    return out


def footing_case(degree=2, variant="hdg", nx=64, ny=64, dt=1.0, t_final=50.0):
    """Rectangle (-50, 50) x (0, 75) loaded on the middle third of the top; p = 0 on the boundary."""

    params = ModelParams(E=3e4, nu=0.4995, c0=1e-3, alpha=0.1, kappa=1e-4, degree=degree)
    top = on_line(1, 75.0)
    return BenchmarkCase(
        name="footing",
        params=params,
        x_range=(-50.0, 50.0),
        y_range=(0.0, 75.0),
        displacement_rule={"T": top, "D": lambda points: ~top(points)},
        flow_rule={"P": lambda points: np.ones(len(points), dtype=bool)},
        problem=ProblemData(traction=footing_traction),
        scheme=Scheme.BDF2,
        t_final=t_final,
        dt=dt,
        variant=variant,
        nx=nx,
        ny=ny,
        notes={"loaded_half_width": FOOTING_HALF_WIDTH, "load": FOOTING_LOAD},
    )


def cantilever_traction(points, normals, time):
    """(0, -1) on the top side, zero on the other traction sides."""

    points = np.asarray(points).reshape(-1, 2)
    normals = np.asarray(normals).reshape(-1, 2)
    out = np.zeros_like(points)
    out[(normals[:, 1] > 0.5) & np.isclose(points[:, 1], 1.0), 1] = -1.0
    return out


def cantilever_case(degree=2, variant="edg-hdg", nx=8, ny=8, dt=1e-3, t_final=5e-3):
    """Unit square clamped at x = 0, pulled down on top, no flow through the boundary."""

    params = ModelParams(E=1e5, nu=0.4, c0=0.0, alpha=0.93, kappa=1e-7, degree=degree)
    left = on_line(0, 0.0)
    return BenchmarkCase(
        name="cantilever",
        params=params,
        x_range=(0.0, 1.0),
        y_range=(0.0, 1.0),
        displacement_rule={"D": left, "T": lambda points: ~left(points)},
        flow_rule={"F": lambda points: np.ones(len(points), dtype=bool)},
        problem=ProblemData(traction=cantilever_traction),
        scheme=Scheme.BDF2,
        t_final=t_final,
        dt=dt,
        variant=variant,
        nx=nx,
        ny=ny,
        line_samples=CANTILEVER_LINES,
    )


CASES = {
    "static": static_case,
    "static_mms": static_case,
    "quasistatic": quasistatic_case,
    "quasistatic_mms": quasistatic_case,
    "footing": footing_case,
    "cantilever": cantilever_case,
}


def get_case(name, **options):
    try:
        factory = CASES[name]
    except KeyError:
        raise ConfigError(f"unknown case {name!r}; choose from {', '.join(sorted(CASES))}") from None
    logger.debug("building case %s with %s", name, options)
    return factory(**options)


def build_case_mesh(case, nx=None, ny=None, level=0, diagonal_pattern="right"):
    """Tagged structured mesh of ``case``, uniformly refined ``level`` times.

    A lone ``nx`` applies to both directions.
    """

    if nx is None and ny is None:
        nx, ny = case.nx, case.ny
    else:
        nx = nx or ny
        ny = ny or nx
    mesh = build_rectangle(case.x_range, case.y_range, nx, ny, diagonal_pattern)
    for _ in range(level):
        mesh = uniform_refine(mesh)
    return tag_boundary(mesh, case.displacement_rule, case.flow_rule)


def mesh_sequence(case, n_levels, nx=None, ny=None):
    """Meshes with 4x cells per level, starting from the case's base subdivision."""

    return [build_case_mesh(case, nx, ny, level) for level in range(n_levels)]


def with_params(case, params):
    """Copy of ``case`` with new parameters; manufactured data is re-derived for them."""

    if case.exact is None:
        return replace(case, params=params)
    exact = ExactSolution(
        tuple(case.exact.symbols["u"]), case.exact.symbols["p"], params, static=case.exact.static, name=case.exact.name
    )
    return replace(case, params=params, exact=exact, problem=exact.problem_data())


def manufactured_case(displacement, pressure, params, static=False, variant="hdg", dt=1e-3, t_final=0.1, name="custom"):
    """Unit-square case from user expressions in x, y and t, with the standard boundary split."""

    try:
        exact = ExactSolution(displacement, pressure, params, static=static, name=name)
    except (sym.SympifyError, TypeError) as error:
        raise ConfigError(f"cannot parse manufactured solution: {error}") from error
    displacement_rule, flow_rule = unit_square_rules()
    return BenchmarkCase(
        name=name,
        params=params,
        x_range=(0.0, 1.0),
        y_range=(0.0, 1.0),
        displacement_rule=displacement_rule,
        flow_rule=flow_rule,
        problem=exact.problem_data(),
        exact=exact,
        scheme=Scheme.STATIC if static else Scheme.BDF2,
        t_final=0.0 if static else t_final,
        dt=0.0 if static else dt,
        variant=variant,
    )
