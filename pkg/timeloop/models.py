"""Time grid, problem data bundles and run results."""

from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from common.exceptions import ValidationError


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of (0, t_final] into ``n_steps`` steps."""

    t_final: float
    n_steps: int

    def __post_init__(self):
        self.clean()

    @classmethod
    def from_step(cls, t_final, dt):
        n_steps = int(round(t_final / dt))
        if n_steps < 1 or abs(n_steps * dt - t_final) > 1e-9 * max(t_final, 1.0):
            raise ValidationError(f"dt={dt} does not divide T={t_final}")
        return cls(t_final=float(t_final), n_steps=n_steps)

    @property
    def dt(self):
        return self.t_final / self.n_steps

    def time(self, step):
        return step * self.dt

    def times(self):
        return np.linspace(0.0, self.t_final, self.n_steps + 1)

    def clean(self):
        if not (self.t_final > 0.0 and np.isfinite(self.t_final)):
            raise ValidationError(f"final time must be positive, got {self.t_final}")
        if self.n_steps < 1:
            raise ValidationError(f"need at least one step, got {self.n_steps}")


@dataclass(frozen=True)
class ProblemData:
    """Loads, boundary data and initial fields of one problem.

    Time-dependent callables take ``(points, t)`` (boundary ones
    ``(points, normals, t)``) and return arrays over the points; ``None``
    means zero. ``flux`` is the prescribed z . n on no-flow facets.
    """

    body_force: Optional[Callable] = None
    source: Optional[Callable] = None
    traction: Optional[Callable] = None
    flux: Optional[Callable] = None
    displacement: Optional[Callable] = None
    pressure: Optional[Callable] = None
    initial_displacement: Optional[Callable] = None
    initial_displacement_gradient: Optional[Callable] = None
    initial_pressure: Optional[Callable] = None
    initial_pressure_gradient: Optional[Callable] = None

    @property
    def zero_initial_displacement(self):
        return self.initial_displacement is None


@dataclass(eq=False)
class RunResult:
    final: object
    previous: object = None
    states: List[object] = field(default_factory=list)
    times: List[float] = field(default_factory=list)
    steps: int = 0
    elapsed: float = 0.0
    observers: tuple = ()
