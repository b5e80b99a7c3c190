"""Physical parameters and per-cell operator blocks."""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from poro_hdg import settings


class ModelParams(BaseModel):
    """Constant coefficients of one run; Lame parameters follow plane strain."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    E: float = Field(gt=0.0)
    nu: float = Field(gt=0.0, lt=0.5)
    c0: float = Field(ge=0.0)
    alpha: float = Field(gt=0.0, le=1.0)
    kappa: float = Field(gt=0.0)
    degree: int = Field(default=1, ge=1)
    beta: Optional[float] = Field(default=None, gt=0.0)

    @field_validator("E", "nu", "c0", "alpha", "kappa")
    @classmethod
    def finite(cls, value):
        if not np.isfinite(value):
            raise ValueError("must be finite")
        return value

    @property
    def mu(self):
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def lam(self):
        return self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))

    @property
    def penalty(self):
        """beta, defaulting to ``PENALTY_FACTOR * k**2``."""
        if self.beta is not None:
            return self.beta
        return settings.PENALTY_FACTOR * self.degree**2

    def replace(self, **changes):
        return type(self)(**{**self.model_dump(), **changes})


@dataclass(frozen=True)
class LocalBlocks:
    """Cell-batched dense blocks (first axis = cell).

    ``displacement`` matrices act on ``[u (2 nk) | u_bar edge 0, 1, 2 (2 nt each)]``;
    ``divergence`` maps that vector to ``[q (nq) | q_bar edge 0, 1, 2 (nt each)]``
    and realizes b_h with the test/trial roles fixed by the caller. The velocity
    coupling b_h((w, 0), q) is the ``divergence`` block restricted to the
    element columns.
    """

    a_h: np.ndarray
    divergence: np.ndarray
    vector_mass: np.ndarray  # (2 nk, 2 nk)
    scalar_mass: np.ndarray  # (nq, nq)

    @property
    def n_cells(self):
        return len(self.a_h)
