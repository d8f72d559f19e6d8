"""Finite-difference operators on the collocated grid.

Two first-derivative closures are available:

``"second_order"``
    centered interior, one-sided three-point second-order rows at the ends.
``"sbp"``
    centered interior, two-point first-order rows at the ends.  Together
    with the trapezoid weights this is a summation-by-parts pair,
    ``H D + (H D)^T = diag(-1, 0, ..., 0, 1)``, so discrete Green identities
    hold exactly.  The generator is assembled with this closure.

Fields are numpy arrays of shape ``grid.shape`` (scalars) or
``(3,) + grid.shape`` (vectors); plate fields have shape ``grid.shape2d``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sps

from .errors import ConfigurationError

CLOSURES = ("second_order", "sbp")


@dataclass(frozen=True)
class FluidParams:
    nu: float = 0.5
    lam: float = 0.25
    eta: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.nu) and self.nu > 0):
            raise ConfigurationError(f"nu must be > 0, got {self.nu!r}")
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ConfigurationError(f"lambda must be >= 0, got {self.lam!r}")
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise ConfigurationError(f"eta must be > 0, got {self.eta!r}")


# ---- 1-D stencils ---------------------------------------------------------
def first_derivative_1d(n, h, closure="second_order"):
    if closure not in CLOSURES:
        raise ValueError(f"unknown closure {closure!r}")
    D = sps.lil_matrix((n, n))
    for i in range(1, n - 1):
        D[i, i - 1] = -0.5 / h
        D[i, i + 1] = 0.5 / h
    if closure == "sbp":
        D[0, 0], D[0, 1] = -1.0 / h, 1.0 / h
        D[n - 1, n - 2], D[n - 1, n - 1] = -1.0 / h, 1.0 / h
    else:
        D[0, 0:3] = np.array([-1.5, 2.0, -0.5]) / h
        D[n - 1, n - 3:] = np.array([0.5, -2.0, 1.5]) / h
    return D.tocsr()


def second_derivative_1d(n, h):
    D = sps.lil_matrix((n, n))
    for i in range(1, n - 1):
        D[i, i - 1:i + 2] = np.array([1.0, -2.0, 1.0]) / h**2
    D[0, 0:4] = np.array([2.0, -5.0, 4.0, -1.0]) / h**2
    D[n - 1, n - 4:] = np.array([-1.0, 4.0, -5.0, 2.0]) / h**2
    return D.tocsr()


def _along(axis, op1d, shape):
    mats = [sps.identity(n, format="csr") for n in shape]
    mats[axis] = op1d
    out = mats[0]
    for m in mats[1:]:
        out = sps.kron(out, m, format="csr")
    return out


@lru_cache(maxsize=32)
def _operator_set(grid, closure):
    d1 = [_along(a, first_derivative_1d(n, h, closure), grid.shape)
          for a, (n, h) in enumerate(zip(grid.shape, grid.spacings))]
    d2 = [_along(a, second_derivative_1d(n, h), grid.shape)
          for a, (n, h) in enumerate(zip(grid.shape, grid.spacings))]
    return d1, d2


def derivative_matrices(grid, closure="second_order"):
    """Sparse ``(Dx, Dy, Dz)`` acting on flattened scalar fields."""
    return _operator_set(grid, closure)[0]


def second_derivative_matrices(grid):
    return _operator_set(grid, "second_order")[1]


def _check(grid, f, vector=False):
    f = np.asarray(f, dtype=float)
    expected = ((3,) if vector else ()) + grid.shape
    if f.shape != expected:
        raise ConfigurationError(f"field shape {f.shape} does not match grid shape {expected}")
    return f


def partial(grid, f, axis, closure="second_order"):
    f = _check(grid, f)
    return (derivative_matrices(grid, closure)[axis] @ f.ravel()).reshape(grid.shape)


def grad(grid, f, closure="second_order"):
    f = _check(grid, f)
    return np.stack([(D @ f.ravel()).reshape(grid.shape) for D in derivative_matrices(grid, closure)])


def div(grid, u, closure="second_order"):
    u = _check(grid, u, vector=True)
    Ds = derivative_matrices(grid, closure)
    return sum((Ds[a] @ u[a].ravel()).reshape(grid.shape) for a in range(3))


def advect(grid, U, f, closure="second_order"):
    """``(U . grad) f`` for scalar ``f`` or componentwise for vector ``f``.

    ``U`` is an array ``(3,) + grid.shape`` of ambient velocity values.
    """
    U = _check(grid, U, vector=True)
    f = np.asarray(f, dtype=float)
    if f.shape == (3,) + grid.shape:
        return np.stack([advect(grid, U, f[c], closure) for c in range(3)])
    g = grad(grid, f, closure)
    return np.einsum("a...,a...->...", U, g)


def laplacian(grid, f):
    f = _check(grid, f)
    return sum((D @ f.ravel()).reshape(grid.shape) for D in second_derivative_matrices(grid))


def strain(grid, u, closure="second_order"):
    """Symmetric gradient ``e_ij = (d_i u_j + d_j u_i) / 2``, shape ``(3, 3) + grid.shape``."""
    u = _check(grid, u, vector=True)
    G = np.stack([grad(grid, u[j], closure) for j in range(3)], axis=1)  # G[i, j] = d_i u_j
    return 0.5 * (G + np.swapaxes(G, 0, 1))


def stress(grid, u, params, closure="second_order"):
    e = strain(grid, u, closure)
    tr = np.trace(e, axis1=0, axis2=1)
    s = 2.0 * params.nu * e
    for i in range(3):
        s[i, i] += params.lam * tr
    return s


def div_stress(grid, u, params, closure="second_order"):
    """Row divergence of the discrete stress tensor (nested first derivatives)."""
    s = stress(grid, u, params, closure)
    return np.stack([sum(partial(grid, s[i, j], j, closure) for j in range(3)) for i in range(3)])


def lame_operator(grid, u, params):
    """``nu Lap u + (nu + lam) grad div u`` with second-derivative stencils.

    Mixed derivatives use products of first-derivative stencils.
    """
    u = _check(grid, u, vector=True)
    dv = div(grid, u)
    gd = grad(grid, dv)
    return np.stack([params.nu * laplacian(grid, u[i]) + (params.nu + params.lam) * gd[i] for i in range(3)])


# ---- plate (top-face) operators --------------------------------------------
def _plate_d1_1d(n, h):
    """Centered first derivative with clamped ghost reflection at both ends."""
    D = sps.lil_matrix((n, n))
    for i in range(1, n - 1):
        D[i, i - 1] = -0.5 / h
        D[i, i + 1] = 0.5 / h
    return D.tocsr()


def _plate_d2_1d(n, h):
    """Centered second derivative; ghost node ``w(-h) = w(h)`` at both ends."""
    D = sps.lil_matrix((n, n))
    for i in range(1, n - 1):
        D[i, i - 1:i + 2] = np.array([1.0, -2.0, 1.0]) / h**2
    D[0, 0], D[0, 1] = -2.0 / h**2, 2.0 / h**2
    D[n - 1, n - 1], D[n - 1, n - 2] = -2.0 / h**2, 2.0 / h**2
    return D.tocsr()


@lru_cache(maxsize=32)
def plate_matrices(grid):
    """Clamped plate stencils on the full ``(nx, ny)`` top-face lattice.

    Returns a dict with ``dx, dy, dxx, dyy, dxy, lap`` (all
    ``nx*ny x nx*ny``) and ``embed`` (interior DOFs -> full lattice).
    The ghost reflection encodes ``d_nu w = 0``; values on the rim are
    taken as given (zero for clamped fields).
    """
    nx, ny = grid.shape2d
    Ix, Iy = sps.identity(nx, format="csr"), sps.identity(ny, format="csr")
    dx = sps.kron(_plate_d1_1d(nx, grid.hx), Iy, format="csr")
    dy = sps.kron(Ix, _plate_d1_1d(ny, grid.hy), format="csr")
    dxx = sps.kron(_plate_d2_1d(nx, grid.hx), Iy, format="csr")
    dyy = sps.kron(Ix, _plate_d2_1d(ny, grid.hy), format="csr")
    interior = np.flatnonzero(grid.omega_interior_mask.ravel())
    embed = sps.csr_matrix((np.ones(interior.size), (interior, np.arange(interior.size))),
                           shape=(nx * ny, interior.size))
    return {"dx": dx, "dy": dy, "dxx": dxx, "dyy": dyy, "dxy": (dx @ dy).tocsr(),
            "lap": (dxx + dyy).tocsr(), "embed": embed}


def _check2d(grid, w):
    w = np.asarray(w, dtype=float)
    if w.shape != grid.shape2d:
        raise ConfigurationError(f"plate field shape {w.shape} does not match {grid.shape2d}")
    return w


def plate_apply(grid, name, w):
    w = _check2d(grid, w)
    return (plate_matrices(grid)[name] @ w.ravel()).reshape(grid.shape2d)


def plate_laplacian(grid, w):
    return plate_apply(grid, "lap", w)


def tangential_gradient(grid, w):
    return np.stack([plate_apply(grid, "dx", w), plate_apply(grid, "dy", w)])


@lru_cache(maxsize=32)
def biharmonic_matrix(grid):
    """13-point clamped biharmonic on interior plate nodes.

    Built from the stencil with ghost values ``w(-h) = w(h)`` across each
    edge and ``w = 0`` on the rim.  Symmetric positive definite.
    """
    nx, ny = grid.shape2d
    hx, hy = grid.hx, grid.hy
    mx, my = nx - 2, ny - 2
    stencil = {
        (0, 0): 6 / hx**4 + 6 / hy**4 + 8 / (hx**2 * hy**2),
        (1, 0): -4 / hx**4 - 4 / (hx**2 * hy**2), (-1, 0): -4 / hx**4 - 4 / (hx**2 * hy**2),
        (0, 1): -4 / hy**4 - 4 / (hx**2 * hy**2), (0, -1): -4 / hy**4 - 4 / (hx**2 * hy**2),
        (2, 0): 1 / hx**4, (-2, 0): 1 / hx**4, (0, 2): 1 / hy**4, (0, -2): 1 / hy**4,
        (1, 1): 2 / (hx**2 * hy**2), (1, -1): 2 / (hx**2 * hy**2),
        (-1, 1): 2 / (hx**2 * hy**2), (-1, -1): 2 / (hx**2 * hy**2),
    }

    def reflect(i, n):
        # lattice index on [0, n-1]; ghost -1 -> 1, n -> n-2
        if i < 0:
            return -i
        if i > n - 1:
            return 2 * (n - 1) - i
        return i

    rows, cols, vals = [], [], []
    for a in range(1, nx - 1):
        for b in range(1, ny - 1):
            r = (a - 1) * my + (b - 1)
            for (da, db), c in stencil.items():
                i, j = reflect(a + da, nx), reflect(b + db, ny)
                if i in (0, nx - 1) or j in (0, ny - 1):
                    continue  # rim value is zero
                rows.append(r)
                cols.append((i - 1) * my + (j - 1))
                vals.append(c)
    return sps.csr_matrix((vals, (rows, cols)), shape=(mx * my, mx * my))


def biharmonic(grid, w):
    """Apply the clamped biharmonic to a plate field; returns a full ``(nx, ny)`` array, zero on the rim."""
    w = _check2d(grid, w)
    return grid.omega_to_full(biharmonic_matrix(grid) @ grid.omega_interior(w))


# ---- traces ----------------------------------------------------------------
def restrict_omega(grid, f):
    """Top-face values of a scalar field, shape ``(nx, ny)``."""
    return _check(grid, f)[:, :, -1].copy()


def boundary_normal_trace(grid, u):
    """``u . n`` on each face, as a list of ``(face, values)`` pairs."""
    from .grid import FACES

    u = _check(grid, u, vector=True)
    out = []
    for axis, side in FACES:
        sl = [slice(None)] * 3
        sl[axis] = -1 if side else 0
        sign = 1.0 if side else -1.0
        out.append(((axis, side), sign * u[axis][tuple(sl)]))
    return out
