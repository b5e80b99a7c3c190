"""Shared enums for boundary partitions and structured patterns."""

from enum import Enum


class DisplacementTag(str, Enum):
    DIRICHLET = "D"
    TRACTION = "T"


class FlowTag(str, Enum):
    PRESSURE = "P"
    FLUX = "F"


class DiagonalPattern(str, Enum):
    RIGHT = "right"
    CRISSCROSS = "crisscross"
