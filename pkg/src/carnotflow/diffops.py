"""Invariant derivatives: X_j, Y_j, gradient, divergence, sub-Laplacian.

The fields are evaluated from their closed-form coefficient polynomials
(H1: X1 = d1 - (x2/2) d3, X2 = d2 + (x1/2) d3; right frame with flipped
signs) and discretized with centered differences (2nd order by default,
4th order available where the heat march wants the extra accuracy).
Periodic wrap throughout; the composed J = -sum X_j X_j is exactly
self-adjoint and positive semidefinite on the discrete inner product
because centered differences are skew-adjoint and the x3 coefficients
do not depend on x3.
"""

import numpy as np
import scipy.sparse as sp

from .grids import Grid, ScalarField, VectorField

__all__ = [
    "axis_derivative", "left_derivative", "right_derivative",
    "horizontal_gradient", "divergence", "sublaplacian_apply",
    "derivative_matrix", "left_field_operator", "sublaplacian_matrix",
]

_STENCILS = {
    2: ((1, 0.5), (-1, -0.5)),
    4: ((1, 8.0 / 12.0), (-1, -8.0 / 12.0), (2, -1.0 / 12.0), (-2, 1.0 / 12.0)),
}


def axis_derivative(values, grid: Grid, axis: int, order: int = 2):
    """Centered periodic difference d/dx_axis."""
    h = grid.spacing[axis]
    out = np.zeros_like(values)
    for shift, coef in _STENCILS[order]:
        out += coef * np.roll(values, -shift, axis=axis)
    return out / h


def _frame_apply(f: ScalarField, j: int, sign: float, order: int) -> ScalarField:
    g = f.grid.descriptor
    if not 0 <= j < g.horizontal_dim:
        raise ValueError(f"horizontal index {j} out of range")
    vals = axis_derivative(f.values, f.grid, j, order)
    if not g.is_abelian:
        # X1 -+ (x2/2) d3, X2 +- (x1/2) d3 (left frame sign = -1 on j=0)
        coef = f.grid.coordinate(1) if j == 0 else f.grid.coordinate(0)
        s = -sign if j == 0 else sign
        vals = vals + s * 0.5 * coef * axis_derivative(f.values, f.grid, 2, order)
    return f.with_values(vals)


def left_derivative(f: ScalarField, j: int, order: int = 2) -> ScalarField:
    """Left-invariant horizontal derivative X_j f."""
    return _frame_apply(f, j, +1.0, order)


def right_derivative(f: ScalarField, j: int, order: int = 2) -> ScalarField:
    """Right-invariant horizontal derivative Y_j f."""
    return _frame_apply(f, j, -1.0, order)


def horizontal_gradient(f: ScalarField, order: int = 2) -> VectorField:
    m = f.grid.descriptor.horizontal_dim
    comps = tuple(left_derivative(f, j, order).values for j in range(m))
    return VectorField(f.grid, comps)


def divergence(v: VectorField, order: int = 2) -> ScalarField:
    out = np.zeros(v.grid.shape)
    for j, comp in enumerate(v.components):
        out += left_derivative(ScalarField(v.grid, comp), j, order).values
    return ScalarField(v.grid, out)


def sublaplacian_apply(f: ScalarField, order: int = 2) -> ScalarField:
    """J f = -sum_j X_j (X_j f), composed centered differences."""
    m = f.grid.descriptor.horizontal_dim
    out = np.zeros(f.grid.shape)
    for j in range(m):
        out -= left_derivative(left_derivative(f, j, order), j, order).values
    return f.with_values(out)


# --- sparse assembly (used by the implicit heat propagator) ---------------

def _circulant_diff(m, h, order):
    rows, cols, data = [], [], []
    idx = np.arange(m)
    for shift, coef in _STENCILS[order]:
        rows.append(idx)
        cols.append((idx + shift) % m)
        data.append(np.full(m, coef / h))
    return sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(m, m))


def derivative_matrix(grid: Grid, axis: int, order: int = 2):
    """Sparse centered difference along one axis on the flattened grid."""
    mats = []
    for i, m in enumerate(grid.shape):
        if i == axis:
            mats.append(_circulant_diff(m, grid.spacing[axis], order))
        else:
            mats.append(sp.identity(m, format="csr"))
    out = mats[0]
    for mat in mats[1:]:
        out = sp.kron(out, mat, format="csr")
    return out


def left_field_operator(grid: Grid, j: int, order: int = 2):
    """Sparse X_j on the flattened grid."""
    g = grid.descriptor
    op = derivative_matrix(grid, j, order)
    if not g.is_abelian:
        coef = np.broadcast_to(
            grid.coordinate(1) if j == 0 else grid.coordinate(0), grid.shape).ravel()
        s = -0.5 if j == 0 else 0.5
        op = op + sp.diags(s * coef) @ derivative_matrix(grid, 2, order)
    return op.tocsr()


def sublaplacian_matrix(grid: Grid, order: int = 2):
    """Sparse J = -sum X_j X_j."""
    m = grid.descriptor.horizontal_dim
    out = None
    for j in range(m):
        x = left_field_operator(grid, j, order)
        term = -(x @ x)
        out = term if out is None else out + term
    return out.tocsr()
