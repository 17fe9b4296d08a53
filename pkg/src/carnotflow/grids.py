"""Uniform periodic grids, scalar/vector fields, quadrature and snapshots.

A Grid couples a GroupDescriptor with a box [-L_i/2, L_i/2) sampled at
M_i points per axis; quadrature is the plain product (Haar = Lebesgue)
Riemann sum.  Fields are thin immutable wrappers around numpy arrays.

Snapshot format (External Interface): a single NDJSON header line with
grid metadata followed by the raw row-major (C-order) little-endian
float64 payload.
"""

from dataclasses import dataclass, field, replace
import json

import numpy as np

from .groups import GroupDescriptor, heisenberg, euclidean

__all__ = [
    "Grid", "ScalarField", "VectorField",
    "integrate", "lp_norm", "clamp_velocity", "boundary_mass_fraction",
    "write_snapshot", "read_snapshot",
]

SNAPSHOT_MAGIC = "carnot-flow-field"


@dataclass(frozen=True)
class Grid:
    """Periodic uniform grid on the group's coordinate box."""

    descriptor: GroupDescriptor
    lengths: tuple
    shape: tuple
    boundary: str = "periodic"

    def __post_init__(self):
        if len(self.lengths) != self.descriptor.n or len(self.shape) != self.descriptor.n:
            raise ValueError("grid rank must match descriptor dimension")
        if any(m < 8 for m in self.shape):
            raise ValueError("need at least 8 points per axis")
        if any(l <= 0 for l in self.lengths):
            raise ValueError("box extents must be positive")
        if self.boundary not in ("periodic", "zero"):
            raise ValueError(f"unknown boundary {self.boundary!r}")

    @property
    def spacing(self):
        return tuple(l / m for l, m in zip(self.lengths, self.shape))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def size(self):
        return int(np.prod(self.shape))

    def axis_coords(self, i):
        """Coordinates along axis i, centered so that 0 is a grid point."""
        m = self.shape[i]
        h = self.lengths[i] / m
        return (np.arange(m) - m // 2) * h

    def points(self):
        """All grid points, shape self.shape + (n,)."""
        axes = [self.axis_coords(i) for i in range(self.descriptor.n)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def coordinate(self, i):
        """Broadcastable coordinate array for axis i."""
        c = self.axis_coords(i)
        shp = [1] * self.descriptor.n
        shp[i] = self.shape[i]
        return c.reshape(shp)

    def center_index(self):
        return tuple(m // 2 for m in self.shape)

    @property
    def twist_per_cell(self):
        """H1 only: the group twist h1*h2/2 measured in x3-cells."""
        if self.descriptor.is_abelian:
            return 0.0
        h = self.spacing
        return h[0] * h[1] / (2.0 * h[2])

    def meta(self):
        return {
            "group": self.descriptor.name,
            "exponents": list(self.descriptor.exponents),
            "horizontal_dim": self.descriptor.horizontal_dim,
            "lengths": list(self.lengths),
            "shape": list(self.shape),
            "boundary": self.boundary,
        }

    @staticmethod
    def from_meta(meta):
        if meta["group"] == "heisenberg":
            g = heisenberg()
        else:
            g = euclidean(len(meta["shape"]))
        return Grid(g, tuple(meta["lengths"]), tuple(meta["shape"]), meta["boundary"])


@dataclass(frozen=True)
class ScalarField:
    grid: Grid
    values: np.ndarray
    time_tag: float = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite field values")
        object.__setattr__(self, "values", v)

    def with_values(self, values, time_tag=None):
        return ScalarField(self.grid, values, self.time_tag if time_tag is None else time_tag)

    @staticmethod
    def from_function(grid, fn, time_tag=None):
        """Sample fn(points)->array on the grid."""
        return ScalarField(grid, fn(grid.points()), time_tag)

    @staticmethod
    def zeros(grid):
        return ScalarField(grid, np.zeros(grid.shape))


@dataclass(frozen=True)
class VectorField:
    """Horizontal vector field: m cell-centered component arrays.

    `faces` optionally carries exactly divergence-free face-normal
    velocities (one array per coordinate axis, face i+1/2 stored at
    index i) used by the conservative upwind transport.
    """

    grid: Grid
    components: tuple
    faces: tuple = None

    def __post_init__(self):
        comps = tuple(np.asarray(c, dtype=float) for c in self.components)
        if len(comps) != self.grid.descriptor.horizontal_dim:
            raise ValueError("component count must equal horizontal dimension m")
        for c in comps:
            if c.shape != self.grid.shape:
                raise ValueError("component shape mismatch")
            if not np.all(np.isfinite(c)):
                raise ValueError("non-finite velocity values")
        object.__setattr__(self, "components", comps)
        if self.faces is not None:
            f = tuple(np.asarray(a, dtype=float) for a in self.faces)
            if len(f) != self.grid.descriptor.n:
                raise ValueError("need one face array per axis")
            object.__setattr__(self, "faces", f)

    def max_speed(self):
        return max((float(np.max(np.abs(c))) for c in self.components), default=0.0)

    @staticmethod
    def zero(grid):
        m = grid.descriptor.horizontal_dim
        z = [np.zeros(grid.shape) for _ in range(m)]
        faces = tuple(np.zeros(grid.shape) for _ in range(grid.descriptor.n))
        return VectorField(grid, tuple(z), faces)


def integrate(f: ScalarField) -> float:
    """Haar quadrature: fixed-order pairwise summation (deterministic)."""
    return float(np.sum(f.values)) * f.grid.cell_volume


def lp_norm(f: ScalarField, p) -> float:
    if p == np.inf or p == "inf":
        return float(np.max(np.abs(f.values)))
    p = float(p)
    if p < 1:
        raise ValueError("lp_norm needs p >= 1")
    return float(np.sum(np.abs(f.values) ** p) * f.grid.cell_volume) ** (1.0 / p)


def clamp_velocity(v: VectorField, k: float) -> VectorField:
    """Componentwise clamp to [-k, k] (the *-weak approximation f_k).

    Faces are clamped too; note a genuinely clamped field is generally
    no longer exactly divergence-free at the discrete level.
    """
    if k <= 0:
        raise ValueError("clamp level must be positive")
    comps = tuple(np.clip(c, -k, k) for c in v.components)
    faces = None if v.faces is None else tuple(np.clip(a, -k, k) for a in v.faces)
    return VectorField(v.grid, comps, faces)


def boundary_mass_fraction(f: ScalarField, shell=0.125) -> float:
    """Fraction of the |f| mass in the outer `shell` of each axis.

    Domain-truncation validity diagnostic: trustworthy runs keep this
    small.
    """
    a = np.abs(f.values)
    total = float(np.sum(a))
    if total == 0.0:
        return 0.0
    mask = np.zeros(f.grid.shape, dtype=bool)
    for i, m in enumerate(f.grid.shape):
        w = max(1, int(round(shell * m)))
        idx = [slice(None)] * f.grid.descriptor.n
        sl = np.zeros(m, dtype=bool)
        sl[:w] = True
        sl[-w:] = True
        idx[i] = sl
        mask[tuple(idx)] = True
    return float(np.sum(a[mask])) / total


def write_snapshot(path, f: ScalarField, extra=None):
    """NDJSON header line + raw little-endian float64 C-order payload."""
    header = {
        "format": SNAPSHOT_MAGIC,
        "version": 1,
        "dtype": "<f8",
        "order": "C",
        "time_tag": f.time_tag,
        "grid": f.grid.meta(),
    }
    if extra:
        header["extra"] = extra
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode())
        fh.write(b"\n")
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_snapshot(path):
    """Inverse of write_snapshot; returns (ScalarField, header dict)."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        if header.get("format") != SNAPSHOT_MAGIC:
            raise ValueError("not a field snapshot")
        grid = Grid.from_meta(header["grid"])
        payload = fh.read()
    values = np.frombuffer(payload, dtype="<f8").reshape(grid.shape).astype(float)
    return ScalarField(grid, values, header.get("time_tag")), header
