"""Divergence-free velocity recipes.

Velocities are built from a stream function sampled at cell corners, so
the face-normal fluxes are discretely divergence-free to roundoff: the
conservative upwind transport then preserves constants exactly, which is
what the maximum-principle checks lean on.

On the Heisenberg grid the transporting coordinate field of v.grad with
v = (v1, v2) horizontal is b = (v1, v2, (x1 v2 - x2 v1)/2).  When v does
not depend on x3 the third face array is x3-independent, so it drops out
of the discrete divergence and the horizontal corner construction alone
decides mass conservation.
"""

import numpy as np

from .grids import Grid, ScalarField, VectorField

RECIPES = ("zero", "constant", "stream")


def _corner_points(grid):
    """(x1, x2) at the i+1/2, j+1/2 corners, broadcast to grid shape."""
    x1 = grid.coordinate(0) + 0.5 * grid.spacing[0]
    x2 = grid.coordinate(1) + 0.5 * grid.spacing[1]
    return x1, x2


def _vertical_faces(grid, v1c, v2c):
    if grid.descriptor.is_abelian:
        if grid.descriptor.n > 2:
            return [np.zeros(grid.shape) for _ in range(grid.descriptor.n - 2)]
        return []
    x1 = grid.coordinate(0)
    x2 = grid.coordinate(1)
    return [0.5 * (x1 * v2c - x2 * v1c) * np.ones(grid.shape)]


def zero_velocity(grid: Grid) -> VectorField:
    return VectorField.zero(grid)


def constant_velocity(grid: Grid, drift) -> VectorField:
    m = grid.descriptor.horizontal_dim
    drift = tuple(float(c) for c in np.atleast_1d(drift))
    if len(drift) != m:
        raise ValueError(f"drift needs {m} horizontal components")
    comps = tuple(np.full(grid.shape, c) for c in drift)
    faces = [np.full(grid.shape, drift[0])]
    if m > 1:
        faces.append(np.full(grid.shape, drift[1]))
    faces.extend(_vertical_faces(grid, comps[0], comps[1] if m > 1 else 0.0))
    return VectorField(grid, comps, tuple(faces))


def stream_velocity(grid: Grid, amplitude=1.0, modes=(1, 1), psi=None) -> VectorField:
    """v = (-d2 psi, d1 psi) from corner-sampled psi(x1, x2).

    The default stream function is sin(2 pi k1 x1 / L1) sin(2 pi k2 x2 / L2).
    Face arrays come from exact corner differences, cell-centered
    components from face averages.
    """
    if grid.descriptor.n < 2:
        raise ValueError("stream recipe needs at least two axes")
    h1, h2 = grid.spacing[0], grid.spacing[1]
    L1, L2 = grid.lengths[0], grid.lengths[1]
    x1c, x2c = _corner_points(grid)
    if psi is None:
        k1, k2 = modes
        psi_c = amplitude * (np.sin(2 * np.pi * k1 * x1c / L1)
                             * np.sin(2 * np.pi * k2 * x2c / L2))
    else:
        psi_c = amplitude * psi(x1c, x2c)
    psi_c = psi_c * np.ones(grid.shape)
    # u1 lives on x1-faces (i+1/2, j): minus the corner difference in x2
    u1 = -(psi_c - np.roll(psi_c, 1, axis=1)) / h2
    # u2 lives on x2-faces (i, j+1/2): the corner difference in x1
    u2 = (psi_c - np.roll(psi_c, 1, axis=0)) / h1
    v1c = 0.5 * (u1 + np.roll(u1, 1, axis=0))
    v2c = 0.5 * (u2 + np.roll(u2, 1, axis=1))
    m = grid.descriptor.horizontal_dim
    comps = [v1c, v2c] + [np.zeros(grid.shape) for _ in range(m - 2)]
    faces = [u1, u2] + _vertical_faces(grid, v1c, v2c)
    return VectorField(grid, tuple(comps), tuple(faces))


def velocity_recipe(grid: Grid, name: str, **params) -> VectorField:
    if name == "zero":
        return zero_velocity(grid)
    if name == "constant":
        return constant_velocity(grid, params.get("drift", (0.5, 0.25)[:grid.descriptor.horizontal_dim]))
    if name == "stream":
        return stream_velocity(grid, amplitude=params.get("amplitude", 1.0),
                               modes=tuple(params.get("modes", (1, 1))))
    raise ValueError(f"unknown velocity recipe {name!r}; choose from {RECIPES}")


def face_divergence(v: VectorField) -> ScalarField:
    """Discrete divergence of the face fluxes (diagnostic; ~0 by design)."""
    grid = v.grid
    if v.faces is None:
        raise ValueError("velocity has no face data")
    div = np.zeros(grid.shape)
    for ax, f in enumerate(v.faces):
        div += (f - np.roll(f, 1, axis=ax)) / grid.spacing[ax]
    return ScalarField(grid, div)
