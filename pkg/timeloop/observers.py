"""Step observers: called after each completed step, never mutate the state."""

import logging
from pathlib import Path

import numpy as np

from analysis.errors import EnergyMeter, ErrorMeter
from forms.geometry import cell_geometry

from .checkpoints import save_checkpoint

logger = logging.getLogger(__name__)


class Observer:
    """Base observer; subclasses record whatever they need in ``__call__``."""

    def start(self, step, state):
        pass

    def __call__(self, step, state, previous):
        raise NotImplementedError

    def as_rows(self):
        return []


class EnergyObserver(Observer):
    """Tracks X_n and Y_n; ``nonincreasing`` checks X_(n+1) <= X_n up to ``tol`` relative."""

    def __init__(self, layout, params):
        self.meter = EnergyMeter(layout, params)
        self.steps, self.times, self.X, self.Y = [], [], [], []

    def _record(self, step, state):
        x, y = self.meter(state)
        self.steps.append(step)
        self.times.append(state.time)
        self.X.append(x)
        self.Y.append(y)

    def start(self, step, state):
        self._record(step, state)

    def __call__(self, step, state, previous):
        self._record(step, state)

    def nonincreasing(self, tol=1e-12):
        values = np.asarray(self.X)
        return bool(np.all(values[1:] <= values[:-1] * (1.0 + tol)))

    def as_rows(self):
        return [{"step": s, "time": t, "X": x, "Y": y} for s, t, x, y in zip(self.steps, self.times, self.X, self.Y)]


class ErrorObserver(Observer):
    """Errors per step and the accumulated sum(dt ||z - z_h||^2)."""

    def __init__(self, layout, exact, params, dt):
        self.meter = ErrorMeter(layout, exact, params)
        self.dt = dt
        self.velocity_history = 0.0
        self.records = []
        self.state = None

    def __call__(self, step, state, previous):
        record = self.meter.errors(state, state.time)
        self.state = state
        self.velocity_history += self.dt * record.e_z**2
        self.records.append(record)

    @property
    def last(self):
        """Last record with the accumulated velocity term in the composite."""
        if self.state is None:
            return None
        return self.meter.errors(self.state, self.state.time, self.velocity_history)

    def as_rows(self):
        return [record.as_dict() for record in self.records]


class MaxPressureObserver(Observer):
    """max |p_h| over volume quadrature points per step."""

    def __init__(self, layout):
        tables = cell_geometry(layout.mesh, layout.degree).tables
        self.values = tables.volume_values[:, : layout.n_pressure_basis]
        self.steps, self.times, self.maxima = [], [], []

    def __call__(self, step, state, previous):
        self.steps.append(step)
        self.times.append(state.time)
        self.maxima.append(float(np.abs(state.pressure @ self.values.T).max()))

    @property
    def overall(self):
        return max(self.maxima, default=0.0)

    def as_rows(self):
        return [{"step": s, "time": t, "max_abs_p": m} for s, t, m in zip(self.steps, self.times, self.maxima)]


class CheckpointObserver(Observer):
    """Writes ``step_XXXXX.npz`` every ``every`` steps."""

    def __init__(self, layout, directory, every=1):
        self.layout = layout
        self.directory = Path(directory)
        self.every = max(int(every), 1)
        self.paths = []

    def __call__(self, step, state, previous):
        if step % self.every == 0:
            path = self.directory / f"step_{step:05d}.npz"
            self.paths.append(save_checkpoint(path, self.layout, step, state, previous))
