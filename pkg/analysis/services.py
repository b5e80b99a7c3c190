"""Convergence studies, robustness comparisons, energy traces and rate gates."""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from common.exceptions import ValidationError
from common.utils import progress
from mms.cases import build_case_mesh, mesh_sequence
from spaces.services import build_layout
from timeloop.choices import Scheme
from timeloop.models import ProblemData, TimeGrid
from timeloop.observers import EnergyObserver, ErrorObserver
from timeloop.services import run, run_static

from .errors import EnergyMeter, ErrorMeter
from .models import FIELDS, RateTable

logger = logging.getLogger(__name__)


def solve_case(case, layout, params, scheme=None, dt=None, t_final=None):
    """Run ``case`` on ``layout``; returns (terminal state, error record or None, run result or None)."""

    scheme = Scheme(scheme or case.scheme)
    if scheme is Scheme.STATIC:
        state = run_static(layout, params, case.problem)
        record = ErrorMeter(layout, case.exact, params).errors(state, 0.0) if case.exact else None
        return state, record, None

    grid = TimeGrid.from_step(t_final or case.t_final, dt or case.dt)
    observers = [ErrorObserver(layout, case.exact, params, grid.dt)] if case.exact else []
    result = run(layout, params, grid, scheme, case.problem, observers=observers)
    record = observers[0].last if observers else None
    return result.final, record, result


def convergence_study(case, degree=None, variant=None, n_levels=3, scheme=None, dt=None, t_final=None, nx=None, ny=None):
    """Errors of ``case`` on ``n_levels`` uniformly refined meshes."""

    if n_levels < 2:
        raise ValidationError(f"a convergence study needs at least 2 levels, got {n_levels}")
    if case.exact is None:
        raise ValidationError(f"case {case.name!r} has no exact solution")
    degree = degree or case.params.degree
    variant = variant or case.variant
    params = case.params.replace(degree=degree)
    table = RateTable(label=f"{case.name} {variant} k={degree}")

    for mesh in progress(mesh_sequence(case, n_levels, nx, ny), desc="levels"):
        layout = build_layout(mesh, degree, variant)
        _, record, _ = solve_case(case, layout, params, scheme, dt, t_final)
        table.append(record)
        logger.info(
            "%s level with %d cells: e_u=%.3e e_pT=%.3e e_z=%.3e e_p=%.3e",
            case.name, record.cells, record.e_u, record.e_pT, record.e_z, record.e_p,
        )
    return table


@dataclass(frozen=True)
class GateReport:
    rates: Dict[str, float]
    minimum: Dict[str, float]
    results: Dict[str, bool]

    @property
    def passed(self):
        return all(self.results.values())


def rate_gate(table, minimum_rates):
    """Compare the finest-level rates with ``minimum_rates`` (field -> minimum).

    A NaN rate (errors at rounding level on both levels) passes.
    """

    rates = table.final_rates()
    results = {}
    for name, minimum in minimum_rates.items():
        if name not in FIELDS:
            raise ValidationError(f"unknown field {name!r} in rate gate")
        rate = rates[name]
        results[name] = bool(math.isnan(rate) or rate >= minimum)
    report = GateReport(rates=rates, minimum=dict(minimum_rates), results=results)
    if not report.passed:
        logger.warning("rate gate failed: %s", {k: v for k, v in results.items() if not v})
    return report


@dataclass
class RobustnessReport:
    degree: int
    variant: str
    records: List[object] = field(default_factory=list)
    parameters: List[tuple] = field(default_factory=list)

    def ratios(self):
        """max / min error over the parameter grid, per field."""

        out = {}
        for name in FIELDS:
            errors = np.array([record.error(name) for record in self.records])
            positive = errors[errors > 0.0]
            out[name] = float(positive.max() / positive.min()) if positive.size else 1.0
        return out

    def passed(self, max_ratio=3.0, fields=FIELDS):
        ratios = self.ratios()
        return all(ratios[name] <= max_ratio for name in fields)


def robustness_compare(factory, parameter_grid, degree, variant="hdg", level=2, nx=None):
    """Errors of ``factory(E=..., nu=...)`` at one mesh level across a grid of (E, nu)."""

    report = RobustnessReport(degree=degree, variant=variant)
    for E, nu in parameter_grid:
        case = factory(E=E, nu=nu, degree=degree, variant=variant)
        layout = build_layout(build_case_mesh(case, nx, level=level), degree, variant)
        _, record, _ = solve_case(case, layout, case.params)
        report.records.append(record)
        report.parameters.append((E, nu))
        logger.info("E=%g nu=%g: e_u=%.3e e_z=%.3e e_p=%.3e", E, nu, record.e_u, record.e_z, record.e_p)
    return report


def energy_trace(states, params):
    """(X_n, Y_n) for each state."""

    if not states:
        return []
    meter = EnergyMeter(states[0].layout, params)
    return [meter(state) for state in states]


@dataclass(frozen=True)
class EnergyDecayReport:
    X: List[float]
    Y: List[float]
    passed: bool


def energy_decay_check(layout, params, n_steps=20, dt=0.01, tol=1e-12):
    """Zero-data backward-Euler run from a nonzero consistent state; X_n must not increase.

    The start state comes from one step driven by a unit source and body force.
    """

    forcing = ProblemData(
        body_force=lambda points, t: np.ones((len(points), 2)),
        source=lambda points, t: np.ones(len(points)),
    )
    start = run(layout, params, TimeGrid(dt, 1), Scheme.BE, forcing).final
    observer = EnergyObserver(layout, params)
    grid = TimeGrid(n_steps * dt, n_steps)
    run(layout, params, grid, Scheme.BE, ProblemData(), observers=[observer], initial=start)
    passed = observer.nonincreasing(tol)
    if not passed:
        logger.warning("discrete energy increased: %s", observer.X)
    return EnergyDecayReport(X=list(observer.X), Y=list(observer.Y), passed=passed)
