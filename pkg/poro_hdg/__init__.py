"""HDG and EDG-HDG solvers for the total-pressure formulation of Biot's model."""

__version__ = "0.4.0"
