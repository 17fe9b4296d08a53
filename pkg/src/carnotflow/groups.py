"""Stratified group arithmetic: group law, dilations, homogeneous gauge.

Points live in R^n with a polynomial group law.  Two families are
provided: the first Heisenberg group H1 (n=3, homogeneous dimension 4)
and abelian Euclidean groups R^n.  All point operations are vectorized
over leading axes; a point is the trailing axis of length n.
"""

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np

__all__ = [
    "GroupDescriptor", "heisenberg", "euclidean",
    "identity", "multiply", "inverse", "dilate", "gauge", "dist",
    "left_field_matrix", "right_field_matrix", "unit_ball_volume",
]


@dataclass(frozen=True)
class GroupDescriptor:
    """Immutable description of a stratified group.

    Attributes
    ----------
    name : str
        'heisenberg' or 'euclidean'.
    exponents : tuple of int
        Dilation exponent of each coordinate; delta_a multiplies
        coordinate i by a**exponents[i].
    horizontal_dim : int
        Number of horizontal (first-layer) directions m.
    """

    name: str
    exponents: tuple
    horizontal_dim: int

    @property
    def n(self):
        return len(self.exponents)

    @property
    def homogeneous_dimension(self):
        return int(sum(self.exponents))

    @property
    def is_abelian(self):
        return self.name == "euclidean"


def heisenberg():
    """The first Heisenberg group H1: exponents (1,1,2), m=2, N=4."""
    return GroupDescriptor("heisenberg", (1, 1, 2), 2)


def euclidean(n):
    """Abelian R^n with isotropic dilations; m = n = N."""
    if n < 1:
        raise ValueError("euclidean group needs n >= 1")
    return GroupDescriptor("euclidean", (1,) * n, n)


def _check_points(g, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != g.n:
        raise ValueError(f"expected points with last axis {g.n}, got shape {x.shape}")
    return x


def identity(g):
    return np.zeros(g.n)


def multiply(g, x, y):
    """Group product x . y."""
    x = _check_points(g, x)
    y = _check_points(g, y)
    if g.is_abelian:
        return x + y
    out = x + y
    # central twist: (x.y)_3 = x3 + y3 + (x1 y2 - y1 x2)/2
    out = out.copy()
    out[..., 2] += 0.5 * (x[..., 0] * y[..., 1] - y[..., 0] * x[..., 1])
    return out


def inverse(g, x):
    """Group inverse; -x for the graded groups handled here."""
    return -_check_points(g, x)


def dilate(g, alpha, x):
    """Anisotropic dilation delta_alpha."""
    x = _check_points(g, x)
    scale = np.asarray(alpha, dtype=float)[..., None] ** np.array(g.exponents, dtype=float)
    return x * scale


def gauge(g, x):
    """Homogeneous gauge: Koranyi-type on H1, Euclidean norm otherwise."""
    x = _check_points(g, x)
    if g.is_abelian:
        return np.sqrt(np.sum(x * x, axis=-1))
    horiz = x[..., 0] ** 2 + x[..., 1] ** 2
    return (horiz ** 2 + 16.0 * x[..., 2] ** 2) ** 0.25


def dist(g, x, y):
    """Left-invariant quasi-distance gauge(y^{-1} . x).

    Note gauge(u) = gauge(u^{-1}) here, so this is symmetric in (x, y);
    left-invariance dist(z.x, z.y) = dist(x, y) holds exactly, which the
    right-translate form would not satisfy on H1.
    """
    return gauge(g, multiply(g, inverse(g, y), x))


def left_field_matrix(g, points):
    """Coefficients of the left-invariant horizontal frame.

    Returns an array c of shape points.shape[:-1] + (m, n) such that
    X_j f = sum_k c[..., j, k] * d_k f.  On H1:
    X1 = d1 - (x2/2) d3,  X2 = d2 + (x1/2) d3.
    """
    points = _check_points(g, points)
    base = points.shape[:-1]
    c = np.zeros(base + (g.horizontal_dim, g.n))
    for j in range(g.horizontal_dim):
        c[..., j, j] = 1.0
    if not g.is_abelian:
        c[..., 0, 2] = -0.5 * points[..., 1]
        c[..., 1, 2] = 0.5 * points[..., 0]
    return c


def right_field_matrix(g, points):
    """Right-invariant frame: Y1 = d1 + (x2/2) d3, Y2 = d2 - (x1/2) d3 on H1."""
    points = _check_points(g, points)
    base = points.shape[:-1]
    c = np.zeros(base + (g.horizontal_dim, g.n))
    for j in range(g.horizontal_dim):
        c[..., j, j] = 1.0
    if not g.is_abelian:
        c[..., 0, 2] = 0.5 * points[..., 1]
        c[..., 1, 2] = -0.5 * points[..., 0]
    return c


@lru_cache(maxsize=None)
def unit_ball_volume(g, cells_per_axis=400):
    """Volume of the unit gauge ball, |B(e,r)| = v_N r^N.

    Euclidean volumes are exact; the H1 Koranyi ball is computed by
    midpoint quadrature over its bounding box (|x3| <= 1/4).
    """
    if g.is_abelian:
        n = g.n
        return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)
    # H1: radial reduction; ball = {r^4 + 16 x3^2 <= 1} with r^2 = x1^2+x2^2
    # vol = int_0^1 2 pi r * 2 sqrt(1-r^4)/4 dr, done by midpoint rule.
    r = (np.arange(cells_per_axis) + 0.5) / cells_per_axis
    dr = 1.0 / cells_per_axis
    return float(np.sum(2.0 * math.pi * r * 0.5 * np.sqrt(1.0 - r ** 4)) * dr)
