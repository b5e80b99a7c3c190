"""Versioned ``.npz`` checkpoints of the current and previous time level."""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from common.exceptions import ValidationError
from poro_hdg import settings
from system.models import SolutionState

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Checkpoint:
    step: int
    state: SolutionState
    previous: SolutionState = None


def save_checkpoint(path, layout, step, state, previous=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {
        "format_version": np.array(settings.CHECKPOINT_FORMAT_VERSION),
        "mesh_fingerprint": np.array(layout.mesh.fingerprint()),
        "layout_fingerprint": np.array(layout.fingerprint()),
        "step": np.array(step),
        "time": np.array(state.time),
        "interior": state.interior,
        "facet": state.facet,
        "has_previous": np.array(previous is not None),
    }
    if previous is not None:
        arrays.update(
            previous_time=np.array(previous.time),
            previous_interior=previous.interior,
            previous_facet=previous.facet,
        )
    with path.open("wb") as handle:
        np.savez(handle, **arrays)
    logger.debug("checkpoint step %d written to %s", step, path)
    return path


def load_checkpoint(path, layout):
    """Read a checkpoint written for ``layout``; other layouts are rejected."""

    with np.load(Path(path), allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != settings.CHECKPOINT_FORMAT_VERSION:
            raise ValidationError(f"checkpoint format {version} is not supported")
        if str(data["layout_fingerprint"]) != layout.fingerprint():
            raise ValidationError(f"checkpoint {path} was written for a different mesh or layout")
        state = SolutionState(layout, data["interior"].copy(), data["facet"].copy(), float(data["time"]))
        previous = None
        if bool(data["has_previous"]):
            previous = SolutionState(
                layout, data["previous_interior"].copy(), data["previous_facet"].copy(), float(data["previous_time"])
            )
        return Checkpoint(step=int(data["step"]), state=state, previous=previous)
