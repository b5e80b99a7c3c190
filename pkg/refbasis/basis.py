"""Orthonormal modal bases on the reference triangle and edge, nodal edge basis."""

from math import gamma, sqrt

import numpy as np
from numpy.polynomial import legendre
from scipy.special import eval_jacobi

from common.exceptions import ValidationError


def triangle_dimension(degree):
    return (degree + 1) * (degree + 2) // 2


def _normalized_jacobi(x, alpha, beta, n):
    """Jacobi polynomial scaled to unit norm in its weighted L2([-1, 1])."""

    norm2 = (
        2.0 ** (alpha + beta + 1)
        / (2 * n + alpha + beta + 1)
        * gamma(n + alpha + 1)
        * gamma(n + beta + 1)
        / (gamma(n + alpha + beta + 1) * gamma(n + 1))
    )
    return eval_jacobi(n, alpha, beta, x) / sqrt(norm2)


def _normalized_jacobi_derivative(x, alpha, beta, n):
    if n == 0:
        return np.zeros_like(x)
    return sqrt(n * (n + alpha + beta + 1)) * _normalized_jacobi(x, alpha + 1, beta + 1, n - 1)


class TriangleBasis:
    """Orthonormal (Dubiner) basis of P_k on {x, y >= 0, x + y <= 1}.

    Modes are ordered by total degree, so the first ``triangle_dimension(k - 1)``
    functions span P_{k-1}.
    """

    def __init__(self, degree):
        if degree < 0:
            raise ValidationError(f"degree must be non-negative, got {degree}")
        self.degree = int(degree)
        self.modes = [(i, d - i) for d in range(self.degree + 1) for i in range(d + 1)]
        self.dimension = len(self.modes)

    def __repr__(self):
        return f"TriangleBasis(degree={self.degree})"

    @staticmethod
    def _collapsed(points):
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        x, y = points[:, 0], points[:, 1]
        one_minus_y = 1.0 - y
        safe = np.abs(one_minus_y) > 1e-14
        a = np.full_like(x, -1.0)
        a[safe] = 2.0 * x[safe] / one_minus_y[safe] - 1.0
        b = 2.0 * y - 1.0
        return a, b

    def values(self, points):
        a, b = self._collapsed(points)
        table = np.empty((len(a), self.dimension))
        for index, (i, j) in enumerate(self.modes):
            h1 = _normalized_jacobi(a, 0.0, 0.0, i)
            h2 = _normalized_jacobi(b, 2.0 * i + 1.0, 0.0, j)
            # 2 * sqrt(2) rescales the biunit-triangle normalization to area 1/2
            table[:, index] = 2.0 * sqrt(2.0) * h1 * h2 * (1.0 - b) ** i
        return table

    def gradients(self, points):
        a, b = self._collapsed(points)
        table = np.empty((len(a), self.dimension, 2))
        half = 0.5 * (1.0 - b)
        for index, (i, j) in enumerate(self.modes):
            fa = _normalized_jacobi(a, 0.0, 0.0, i)
            dfa = _normalized_jacobi_derivative(a, 0.0, 0.0, i)
            gb = _normalized_jacobi(b, 2.0 * i + 1.0, 0.0, j)
            dgb = _normalized_jacobi_derivative(b, 2.0 * i + 1.0, 0.0, j)

            dr = dfa * gb
            ds = dfa * gb * 0.5 * (1.0 + a)
            if i > 0:
                dr = dr * half ** (i - 1)
                ds = ds * half ** (i - 1)
            tmp = dgb * half**i
            if i > 0:
                tmp = tmp - 0.5 * i * gb * half ** (i - 1)
            ds = ds + fa * tmp

            scale = 2.0 ** (i + 0.5)
            # d/dx = 2 d/dr, d/dy = 2 d/ds, times the factor 2 of values()
            table[:, index, 0] = 4.0 * scale * dr
            table[:, index, 1] = 4.0 * scale * ds
        return table


class EdgeBasis:
    """Orthonormal Legendre basis of P_k on [0, 1]."""

    def __init__(self, degree):
        if degree < 0:
            raise ValidationError(f"degree must be non-negative, got {degree}")
        self.degree = int(degree)
        self.dimension = self.degree + 1

    def __repr__(self):
        return f"EdgeBasis(degree={self.degree})"

    def values(self, points):
        s = 2.0 * np.asarray(points, dtype=float).ravel() - 1.0
        return np.column_stack(
            [sqrt(2 * n + 1) * eval_jacobi(n, 0.0, 0.0, s) for n in range(self.dimension)]
        )

    def derivatives(self, points):
        s = 2.0 * np.asarray(points, dtype=float).ravel() - 1.0
        columns = [np.zeros_like(s)]
        for n in range(1, self.dimension):
            # P_n' = (n + 1) / 2 * P_{n-1}^{(1,1)}; chain rule gives another 2
            columns.append(sqrt(2 * n + 1) * (n + 1) * eval_jacobi(n - 1, 1.0, 1.0, s))
        return np.column_stack(columns)


def gauss_lobatto_nodes(degree):
    """Gauss-Lobatto points of ``degree + 1`` nodes on [0, 1], endpoints first and last."""

    if degree < 1:
        raise ValidationError("Gauss-Lobatto nodes need degree >= 1")
    interior = np.sort(legendre.Legendre.basis(degree).deriv().roots().real) if degree > 1 else []
    return np.concatenate([[0.0], 0.5 * (1.0 + np.asarray(interior)), [1.0]])


class LagrangeEdgeBasis:
    """Nodal P_k basis on [0, 1] at Gauss-Lobatto points.

    Node 0 sits at s = 0 and node k at s = 1, so endpoint functions can be
    shared between edges meeting at a vertex.
    """

    def __init__(self, degree):
        self.degree = int(degree)
        self.nodes = gauss_lobatto_nodes(self.degree)
        self.dimension = self.degree + 1

    def __repr__(self):
        return f"LagrangeEdgeBasis(degree={self.degree})"

    def values(self, points):
        s = np.asarray(points, dtype=float).ravel()
        table = np.ones((len(s), self.dimension))
        for j, node in enumerate(self.nodes):
            for m, other in enumerate(self.nodes):
                if m != j:
                    table[:, j] *= (s - other) / (node - other)
        return table

    def derivatives(self, points):
        s = np.asarray(points, dtype=float).ravel()
        table = np.zeros((len(s), self.dimension))
        for j, node in enumerate(self.nodes):
            for skip, skipped in enumerate(self.nodes):
                if skip == j:
                    continue
                term = np.full_like(s, 1.0 / (node - skipped))
                for m, other in enumerate(self.nodes):
                    if m not in (j, skip):
                        term *= (s - other) / (node - other)
                table[:, j] += term
        return table
