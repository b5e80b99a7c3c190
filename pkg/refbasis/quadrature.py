"""Quadrature rules on the reference triangle and the unit interval."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from common.exceptions import QuadratureError

# Collapsed Gauss-Jacobi rules stay accurate well past this; the cap only
# guards against runaway requests.
MAX_EXACTNESS = 60


@dataclass(frozen=True)
class QuadratureRule:
    """Points and positive weights, exact for polynomials up to ``exactness``."""

    points: np.ndarray
    weights: np.ndarray
    exactness: int

    def __len__(self):
        return len(self.weights)

    def integrate(self, values):
        """Integrate samples taken at ``points`` (first axis) over the reference cell."""

        return np.tensordot(self.weights, np.asarray(values), axes=(0, 0))


# Symmetric rules for the lowest degrees; everything above is collapsed.
_TRIANGLE_TABLE = {
    0: (np.array([[1.0 / 3.0, 1.0 / 3.0]]), np.array([0.5])),
    1: (np.array([[1.0 / 3.0, 1.0 / 3.0]]), np.array([0.5])),
    2: (
        np.array([[1.0 / 6.0, 1.0 / 6.0], [2.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 3.0]]),
        np.full(3, 1.0 / 6.0),
    ),
}


def _check_exactness(exactness):
    if exactness < 0:
        raise QuadratureError(f"exactness must be non-negative, got {exactness}")
    if exactness > MAX_EXACTNESS:
        raise QuadratureError(
            f"no quadrature rule of exactness {exactness} (maximum {MAX_EXACTNESS})"
        )


def _collapsed_rule(exactness):
    n = exactness // 2 + 1
    t, wt = roots_jacobi(n, 1.0, 0.0)
    s, ws = roots_legendre(n)
    y = 0.5 * (1.0 + t)
    xi = 0.5 * (1.0 + s)
    yy, xx = np.meshgrid(y, xi, indexing="ij")
    points = np.column_stack([((1.0 - yy) * xx).ravel(), yy.ravel()])
    weights = np.outer(wt, ws).ravel() / 8.0
    return points, weights


@lru_cache(maxsize=None)
def triangle_quadrature(exactness):
    """Rule on {x, y >= 0, x + y <= 1} exact up to total degree ``exactness``."""

    exactness = int(exactness)
    _check_exactness(exactness)
    if exactness in _TRIANGLE_TABLE:
        points, weights = _TRIANGLE_TABLE[exactness]
    else:
        points, weights = _collapsed_rule(exactness)
    points.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(points=points, weights=weights, exactness=exactness)


@lru_cache(maxsize=None)
def edge_quadrature(exactness):
    """Gauss-Legendre rule on [0, 1]; ``m`` points are exact to degree ``2m - 1``."""

    exactness = int(exactness)
    _check_exactness(exactness)
    s, ws = roots_legendre(exactness // 2 + 1)
    points = 0.5 * (1.0 + s)
    weights = 0.5 * ws
    points.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(points=points, weights=weights, exactness=exactness)
