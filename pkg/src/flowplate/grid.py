"""Box fluid domain, node lattice, boundary classification and trapezoid quadrature.

The fluid occupies ``[0, lx] x [0, ly] x [-lz, 0]``.  The elastic plate is the
open top face ``x3 = 0``; every other part of the boundary is rigid wall.
Nodes are stored in C order over ``(i, j, k)`` so ``x`` varies slowest.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigurationError

STENCIL_WIDTH = 5


class Tag(enum.IntEnum):
    INTERIOR = 0
    OMEGA_FACE = 1
    S_FACE = 2
    EDGE = 3
    CORNER = 4


# face ids: (axis, side) with side 0 = low coordinate, 1 = high coordinate
FACES = [(0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1)]
TOP_FACE = (2, 1)


@dataclass(frozen=True)
class BoxDomain:
    lx: float = 1.0
    ly: float = 1.0
    lz: float = 1.0

    def __post_init__(self):
        for name in ("lx", "ly", "lz"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ConfigurationError(f"domain length {name} must be positive, got {value!r}")

    @property
    def lengths(self):
        return (self.lx, self.ly, self.lz)

    @property
    def volume(self):
        return self.lx * self.ly * self.lz


def trapezoid_weights(n, h):
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


@dataclass(frozen=True, eq=False)
class Grid:
    """Collocated node lattice on a :class:`BoxDomain`.

    Heavy derived data (coordinates, weights, tags) is computed lazily and
    cached; the object is otherwise immutable.
    """

    domain: BoxDomain
    nx: int
    ny: int
    nz: int

    @property
    def shape(self):
        return (self.nx, self.ny, self.nz)

    @property
    def shape2d(self):
        return (self.nx, self.ny)

    @property
    def size(self):
        return self.nx * self.ny * self.nz

    @property
    def hx(self):
        return self.domain.lx / (self.nx - 1)

    @property
    def hy(self):
        return self.domain.ly / (self.ny - 1)

    @property
    def hz(self):
        return self.domain.lz / (self.nz - 1)

    @property
    def spacings(self):
        return (self.hx, self.hy, self.hz)

    @cached_property
    def axes(self):
        x = np.linspace(0.0, self.domain.lx, self.nx)
        y = np.linspace(0.0, self.domain.ly, self.ny)
        z = np.linspace(-self.domain.lz, 0.0, self.nz)
        z[-1] = 0.0
        return x, y, z

    @cached_property
    def coords(self):
        """Arrays ``X, Y, Z`` of shape ``(nx, ny, nz)``."""
        return np.meshgrid(*self.axes, indexing="ij")

    @cached_property
    def coords2d(self):
        """Arrays ``X, Y`` of shape ``(nx, ny)`` on the top face."""
        x, y, _ = self.axes
        return np.meshgrid(x, y, indexing="ij")

    def index(self, i, j, k):
        return (np.asarray(i) * self.ny + np.asarray(j)) * self.nz + np.asarray(k)

    def unravel(self, flat):
        return np.unravel_index(flat, self.shape)

    # ---- quadrature -------------------------------------------------------
    @cached_property
    def weights1d(self):
        return tuple(trapezoid_weights(n, h) for n, h in zip(self.shape, self.spacings))

    @cached_property
    def volume_weights(self):
        wx, wy, wz = self.weights1d
        return np.einsum("i,j,k->ijk", wx, wy, wz)

    @cached_property
    def omega_weights(self):
        """Trapezoid weights over the closed top face, shape ``(nx, ny)``."""
        wx, wy, _ = self.weights1d
        return np.outer(wx, wy)

    @cached_property
    def boundary_weights(self):
        """Surface trapezoid weights over all of the box boundary (3-D array).

        Nodes on edges and corners collect the contribution of every face
        they belong to.
        """
        w = np.zeros(self.shape)
        for axis, side in FACES:
            w[_face_slice(axis, side)] += self.face_weights(axis)
        return w

    def face_weights(self, axis):
        others = [a for a in range(3) if a != axis]
        return np.outer(self.weights1d[others[0]], self.weights1d[others[1]])

    @cached_property
    def rim_weights(self):
        """Curve weights on the rim of the top face, corners excluded, shape ``(nx, ny)``."""
        w = np.zeros(self.shape2d)
        w[1:-1, 0] += self.hx
        w[1:-1, -1] += self.hx
        w[0, 1:-1] += self.hy
        w[-1, 1:-1] += self.hy
        return w

    def integrate(self, values, exact=False):
        """Volume trapezoid rule; ``exact`` uses compensated summation."""
        terms = np.asarray(values) * self.volume_weights
        return _sum(terms, exact)

    def integrate_omega(self, values, exact=False):
        return _sum(np.asarray(values) * self.omega_weights, exact)

    def integrate_rim(self, values, exact=False):
        return _sum(np.asarray(values) * self.rim_weights, exact)

    def integrate_boundary(self, values, exact=False):
        return _sum(np.asarray(values) * self.boundary_weights, exact)

    # ---- plate index sets -------------------------------------------------
    @cached_property
    def omega_interior_mask(self):
        m = np.zeros(self.shape2d, dtype=bool)
        m[1:-1, 1:-1] = True
        return m

    @property
    def n_omega(self):
        return (self.nx - 2) * (self.ny - 2)

    def omega_to_full(self, values):
        """Embed plate interior values into a ``(nx, ny)`` array, zero on the rim."""
        out = np.zeros(self.shape2d)
        out[1:-1, 1:-1] = np.reshape(values, (self.nx - 2, self.ny - 2))
        return out

    def omega_interior(self, full2d):
        return np.asarray(full2d)[1:-1, 1:-1].ravel()

    @cached_property
    def top_interior_nodes(self):
        """Flat 3-D node indices of the top-face interior, in plate DOF order."""
        i, j = np.meshgrid(np.arange(1, self.nx - 1), np.arange(1, self.ny - 1), indexing="ij")
        return self.index(i.ravel(), j.ravel(), self.nz - 1)

    @cached_property
    def interior_nodes(self):
        m = np.zeros(self.shape, dtype=bool)
        m[1:-1, 1:-1, 1:-1] = True
        return np.flatnonzero(m)

    @cached_property
    def on_face(self):
        """Boolean array ``(6, nx, ny, nz)``: node lies on face ``FACES[f]``."""
        out = np.zeros((6,) + self.shape, dtype=bool)
        for f, (axis, side) in enumerate(FACES):
            out[f][_face_slice(axis, side)] = True
        return out


def _face_slice(axis, side):
    sl = [slice(None)] * 3
    sl[axis] = -1 if side else 0
    return tuple(sl)


def _sum(terms, exact):
    if exact:
        import math

        return math.fsum(np.ravel(terms))
    return float(np.sum(terms))


def build_grid(domain, resolution):
    """Build a :class:`Grid`; ``resolution`` is an int or a per-axis triple."""
    if np.isscalar(resolution):
        resolution = (int(resolution),) * 3
    resolution = tuple(int(n) for n in resolution)
    if len(resolution) != 3:
        raise ConfigurationError(f"resolution needs three node counts, got {resolution}")
    for axis, n in zip("xyz", resolution):
        if n < STENCIL_WIDTH:
            raise ConfigurationError(
                f"resolution along {axis} is {n}; at least {STENCIL_WIDTH} nodes are required"
            )
    return Grid(domain, *resolution)


@dataclass(frozen=True)
class BoundaryInfo:
    """Per-node boundary classification.

    ``tags`` holds a :class:`Tag` per node (``INTERIOR`` off the boundary).
    ``normals`` holds the outward unit normal on face nodes and zeros on
    edges/corners.  ``rim_normals`` is the in-plane outward normal of the top
    face on its rim (zero at the four corners and off the rim).
    """

    tags: np.ndarray
    face_id: np.ndarray
    normals: np.ndarray
    rim_normals: np.ndarray

    def count(self, tag):
        return int(np.sum(self.tags == tag))


def classify_boundary(grid):
    faces = grid.on_face
    nfaces = faces.sum(axis=0)
    top = faces[FACES.index(TOP_FACE)]

    tags = np.full(grid.shape, Tag.INTERIOR, dtype=np.int8)
    tags[(nfaces == 1) & top] = Tag.OMEGA_FACE
    tags[(nfaces == 1) & ~top] = Tag.S_FACE
    tags[nfaces == 2] = Tag.EDGE
    tags[nfaces == 3] = Tag.CORNER

    face_id = np.full(grid.shape, -1, dtype=np.int8)
    normals = np.zeros((3,) + grid.shape)
    for f, (axis, side) in enumerate(FACES):
        single = faces[f] & (nfaces == 1)
        face_id[single] = f
        normals[axis][single] = 1.0 if side else -1.0

    rim = np.zeros((2,) + grid.shape2d)
    rim[0, 0, 1:-1] = -1.0
    rim[0, -1, 1:-1] = 1.0
    rim[1, 1:-1, 0] = -1.0
    rim[1, 1:-1, -1] = 1.0
    return BoundaryInfo(tags=tags, face_id=face_id, normals=normals, rim_normals=rim)
