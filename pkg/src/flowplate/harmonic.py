"""Discrete harmonic extension of top-face data and spectral fractional norms on the plate."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .errors import PreconditionError, SolverError


def _lap1d(n, h):
    return sps.diags([np.ones(n - 1), -2 * np.ones(n), np.ones(n - 1)], [-1, 0, 1]) / h**2


def _interior_laplacian(grid):
    """7-point Laplacian on interior nodes with homogeneous Dirichlet closure."""
    mx, my, mz = (n - 2 for n in grid.shape)
    Ix, Iy, Iz = (sps.identity(m) for m in (mx, my, mz))
    L = (sps.kron(sps.kron(_lap1d(mx, grid.hx), Iy), Iz)
         + sps.kron(sps.kron(Ix, _lap1d(my, grid.hy)), Iz)
         + sps.kron(sps.kron(Ix, Iy), _lap1d(mz, grid.hz)))
    return L.tocsc()


@dataclass(eq=False)
class DirichletSolver:
    """Harmonic extension of data on the interior top-face nodes, zero on the rigid walls."""

    grid: object
    _lu: object = field(default=None, repr=False)

    def __post_init__(self):
        self._lu = spla.splu(_interior_laplacian(self.grid))

    @cached_property
    def _coupling(self):
        # interior nodes adjacent to the top face receive phi / hz^2 on the right-hand side
        g = self.grid
        mx, my, mz = g.nx - 2, g.ny - 2, g.nz - 2
        rows = np.arange(mx * my) * mz + (mz - 1)
        return sps.csr_matrix((np.full(mx * my, 1.0 / g.hz**2), (rows, np.arange(mx * my))),
                              shape=(mx * my * mz, mx * my))

    def _embed(self, interior_vals, phi):
        g = self.grid
        f = np.zeros(g.shape + interior_vals.shape[1:])
        f[1:-1, 1:-1, 1:-1] = interior_vals.reshape((g.nx - 2, g.ny - 2, g.nz - 2) + interior_vals.shape[1:])
        f[1:-1, 1:-1, -1] = phi.reshape((g.nx - 2, g.ny - 2) + phi.shape[1:])
        return f

    def apply(self, phi):
        """Extend ``phi`` (interior top-face values, flat or ``(nx-2, ny-2)``) to the box."""
        phi = np.asarray(phi, dtype=float).reshape(self.grid.n_omega)
        rhs = -(self._coupling @ phi)
        sol = self._lu.solve(rhs)
        res = np.linalg.norm(_interior_laplacian(self.grid) @ sol - rhs)
        if not np.isfinite(res) or res > 1e-8 * max(1.0, np.linalg.norm(rhs)):
            raise SolverError("harmonic extension solve failed", residual=float(res))
        return self._embed(sol, phi)

    @cached_property
    def matrix(self):
        """Dense ``N x n_omega`` map from top-face data to flattened box values."""
        rhs = -self._coupling.toarray()
        sol = self._lu.solve(rhs)
        return self._embed(sol, np.eye(self.grid.n_omega)).reshape(self.grid.size, self.grid.n_omega)

    def dense_oracle(self, phi):
        """Same linear system solved with a dense LU factorization."""
        A = _interior_laplacian(self.grid).toarray()
        phi = np.asarray(phi, dtype=float).reshape(self.grid.n_omega)
        return self._embed(sla.solve(A, -(self._coupling @ phi)), phi)


def apply_dirichlet_map(grid, phi, solver=None):
    return (solver or DirichletSolver(grid)).apply(phi)


@dataclass(eq=False)
class FractionalBoundaryNorm:
    """Spectral ``H^s`` norms on the plate from the 2-D Dirichlet Laplacian.

    ``||phi||_s^2 = sum_k lambda_k^s |phi_k|^2`` with coefficients taken in
    the ``L^2(Omega)``-orthonormal eigenbasis.
    """

    grid: object

    def __post_init__(self):
        g = self.grid
        mx, my = g.nx - 2, g.ny - 2
        L = -(sps.kron(_lap1d(mx, g.hx), sps.identity(my)) + sps.kron(sps.identity(mx), _lap1d(my, g.hy)))
        vals, vecs = np.linalg.eigh(L.toarray())
        self.eigenvalues = vals
        self._cell = g.hx * g.hy
        # columns orthonormal in the weighted L^2(Omega) inner product
        self.eigenvectors = vecs / np.sqrt(self._cell)

    def coefficients(self, phi):
        phi = np.asarray(phi, dtype=float).reshape(self.grid.n_omega)
        return self._cell * (self.eigenvectors.T @ phi)

    def norm(self, phi, s):
        c = self.coefficients(phi)
        return float(np.sqrt(np.sum(self.eigenvalues**s * c**2)))

    def l2_norm(self, phi):
        return self.norm(phi, 0.0)

    def mode(self, k):
        """Eigenvector ``k`` with unit ``L^2(Omega)`` norm."""
        return self.eigenvectors[:, k].copy()


def h_minus_half_norm(grid, phi, norms=None):
    return (norms or FractionalBoundaryNorm(grid)).norm(phi, -0.5)


def l2_box_norm(grid, f):
    return float(np.sqrt(grid.integrate(np.asarray(f) ** 2)))


def h1_box_norm(grid, f):
    from . import diffops

    gr = diffops.grad(grid, f)
    return float(np.sqrt(grid.integrate(f**2 + np.sum(gr**2, axis=0))))


@dataclass
class RatioRow:
    resolution: int
    sup_ratio: float
    top_mode_ratio: float
    probes: int


def dirichlet_ratio_probes(grid, rng, n_random=40, n_high=12):
    """Probe set: random data plus the highest-frequency eigenvectors."""
    norms = FractionalBoundaryNorm(grid)
    probes = [rng.standard_normal(grid.n_omega) for _ in range(n_random)]
    top = norms.eigenvalues.size
    probes += [norms.mode(k) for k in range(top - 1, max(top - 1 - n_high, -1), -1)]
    probes.append(norms.mode(0))
    return norms, probes


def estimate_D_operator_norm(domain, resolutions, seed=0, n_random=40, n_high=12):
    """Sup of ``||D phi||_{L^2} / ||phi||_{H^-1/2}`` over probes, per resolution."""
    from .grid import build_grid

    if len(resolutions) < 2:
        raise PreconditionError("at least two resolutions are required")
    rows = []
    for n in resolutions:
        grid = build_grid(domain, n)
        rng = np.random.default_rng(seed)
        norms, probes = dirichlet_ratio_probes(grid, rng, n_random, n_high)
        solver = DirichletSolver(grid)
        D = solver.matrix
        ratios = []
        for phi in probes:
            den = norms.norm(phi, -0.5)
            if den == 0:
                raise PreconditionError("zero probe")
            ratios.append(l2_box_norm(grid, (D @ phi).reshape(grid.shape)) / den)
        top = norms.mode(norms.eigenvalues.size - 1)
        top_ratio = l2_box_norm(grid, (D @ top).reshape(grid.shape)) / norms.norm(top, -0.5)
        rows.append(RatioRow(int(n), float(max(ratios)), float(top_ratio), len(probes)))
    return rows


def smooth_interior_datum(grid):
    """Smooth top-face datum vanishing in a neighbourhood of the rim."""
    X, Y = grid.coords2d
    lx, ly = grid.domain.lx, grid.domain.ly
    r2 = ((X - lx / 2) / (lx / 2)) ** 2 + ((Y - ly / 2) / (ly / 2)) ** 2
    with np.errstate(divide="ignore", over="ignore"):
        bump = np.where(r2 < 0.5, np.exp(-1.0 / np.maximum(0.5 - r2, 1e-300)), 0.0)
    return grid.omega_interior(bump)


def h1_extension_ratio(grid, phi=None):
    """``||D phi||_{H^1} / ||phi||_{H^1/2}`` for a smooth datum."""
    phi = smooth_interior_datum(grid) if phi is None else phi
    f = DirichletSolver(grid).apply(phi)
    return h1_box_norm(grid, f) / FractionalBoundaryNorm(grid).norm(phi, 0.5)
