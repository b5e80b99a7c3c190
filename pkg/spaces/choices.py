"""Trace-space variants."""

from enum import Enum


class Variant(str, Enum):
    HDG = "hdg"
    EDG_HDG = "edg-hdg"

    @property
    def continuous_trace(self):
        return self is Variant.EDG_HDG


class TraceField(str, Enum):
    DISPLACEMENT = "displacement"
    TOTAL_PRESSURE = "total_pressure"
    PRESSURE = "pressure"
