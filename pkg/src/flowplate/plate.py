"""Plate-side geometry: normal extension, flux field, commutator and the flux-multiplier identity."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffops
from .errors import AssemblyError, PreconditionError


@dataclass(frozen=True)
class NormalExtension:
    """Smooth field on the closed top face whose trace on each edge is the outward normal.

    ``g = (-cos(pi x / lx), -cos(pi y / ly))``.  On the edge ``x = 0`` the
    first component is ``-1 = nu_1`` and on ``x = lx`` it is ``+1``; along
    edges ``g . nu = 1`` exactly (corners excluded, where ``nu`` is undefined).
    """

    lx: float = 1.0
    ly: float = 1.0

    def value(self, X, Y):
        return np.stack([-np.cos(np.pi * X / self.lx), -np.cos(np.pi * Y / self.ly)])

    def gradient(self, X, Y):
        """``G[i, j] = d g_i / d x_j`` (diagonal for this separable ramp)."""
        z = np.zeros_like(np.asarray(X, dtype=float))
        gx = (np.pi / self.lx) * np.sin(np.pi * X / self.lx)
        gy = (np.pi / self.ly) * np.sin(np.pi * Y / self.ly)
        return np.array([[gx, z], [z, gy]])

    def laplacian(self, X, Y):
        return np.stack([(np.pi / self.lx) ** 2 * np.cos(np.pi * X / self.lx),
                         (np.pi / self.ly) ** 2 * np.cos(np.pi * Y / self.ly)])


def normal_extension_for(grid):
    return NormalExtension(grid.domain.lx, grid.domain.ly)


@dataclass(frozen=True)
class FluxField:
    """``h = U|_top - alpha g`` with analytic derivatives.

    ``U`` is an :class:`~flowplate.ambient.AmbientFlow` (or ``None`` for a
    zero flow); ``g`` a :class:`NormalExtension` (or ``None``).  An explicit
    ``custom`` triple of callables ``(value, gradient, laplacian)`` replaces
    both, which is how test fields such as ``h = (x, y)`` are supplied.
    """

    U: object = None
    g: object = None
    alpha: float = 0.0
    custom: tuple | None = None

    def __post_init__(self):
        if not np.isfinite(self.alpha) or self.alpha < 0:
            raise PreconditionError(f"alpha must be a nonnegative number, got {self.alpha!r}")

    def _parts(self, X, Y, which):
        if self.custom is not None:
            return self.custom[which](X, Y)
        shape = np.shape(X)
        out = np.zeros(((2,) if which != 1 else (2, 2)) + shape)
        if self.U is not None:
            out = out + (self.U.omega, self.U.omega_gradient, self.U.omega_laplacian)[which](X, Y)
        if self.g is not None and self.alpha != 0.0:
            out = out - self.alpha * (self.g.value, self.g.gradient, self.g.laplacian)[which](X, Y)
        return out

    def value(self, X, Y):
        return self._parts(X, Y, 0)

    def gradient(self, X, Y):
        """``G[i, j] = d h_i / d x_j``."""
        return self._parts(X, Y, 1)

    def laplacian(self, X, Y):
        return self._parts(X, Y, 2)

    def divergence(self, X, Y):
        G = self.gradient(X, Y)
        return G[0, 0] + G[1, 1]


def linear_flux(c11=1.0, c12=0.0, c21=0.0, c22=1.0, b1=0.0, b2=0.0):
    """Affine ``h(x) = C x + b``; ``linear_flux()`` is the Euler field ``(x, y)``."""
    C = np.array([[c11, c12], [c21, c22]], dtype=float)

    def value(X, Y):
        return np.stack([C[0, 0] * X + C[0, 1] * Y + b1, C[1, 0] * X + C[1, 1] * Y + b2])

    def gradient(X, Y):
        return np.einsum("ij,...->ij...", C, np.ones_like(np.asarray(X, dtype=float)))

    def laplacian(X, Y):
        return np.zeros((2,) + np.shape(X))

    return FluxField(custom=(value, gradient, laplacian))


def _rim_normal_products(grid, field2):
    """``F . nu`` on non-corner rim nodes (flat), the rim mask and the normal field."""
    nu = np.zeros((2,) + grid.shape2d)
    nu[0, 0, 1:-1], nu[0, -1, 1:-1] = -1.0, 1.0
    nu[1, 1:-1, 0], nu[1, 1:-1, -1] = -1.0, 1.0
    rim = np.abs(nu).sum(axis=0) > 0
    return np.einsum("a...,a...->...", field2, nu)[rim], rim, nu


def alpha_min(U, g, grid):
    """Smallest ``alpha >= 0`` with ``U . nu - alpha g . nu <= 0`` on the non-corner rim."""
    X, Y = grid.coords2d
    gn, _, _ = _rim_normal_products(grid, g.value(X, Y))
    if np.any(gn <= 0):
        raise AssemblyError("normal extension has g . nu <= 0 on the rim")
    if U is None:
        return 0.0
    un, _, _ = _rim_normal_products(grid, U.omega(X, Y))
    ratio = un / gn
    # values at the level of rounding are treated as zero
    ratio[np.abs(un) <= 1e-13 * max(1.0, float(np.max(np.abs(U.omega(X, Y)))))] = 0.0
    return float(max(0.0, np.max(ratio)))


def rim_flux(h, grid):
    """``h . nu`` on the rim, as a ``(nx, ny)`` array (zero off the rim and at corners)."""
    X, Y = grid.coords2d
    _, rim, nu = _rim_normal_products(grid, np.zeros((2,) + grid.shape2d))
    return np.einsum("a...,a...->...", h.value(X, Y), nu)


def commutator_apply(h, w, grid):
    """``[Lap, h . grad] w`` from the product rule.

    Analytic derivatives of ``h`` and clamped discrete derivatives of ``w``.
    Returns a ``(nx, ny)`` array.
    """
    X, Y = grid.coords2d
    G = h.gradient(X, Y)
    L = h.laplacian(X, Y)
    d = {k: diffops.plate_apply(grid, k, w) for k in ("dx", "dy", "dxx", "dyy", "dxy")}
    return (L[0] * d["dx"] + L[1] * d["dy"]
            + 2.0 * G[0, 0] * d["dxx"] + 2.0 * G[1, 1] * d["dyy"]
            + 2.0 * (G[0, 1] + G[1, 0]) * d["dxy"])


def commutator_printed(h, w, grid):
    """The variant whose mixed term uses ``2 div(h) d12 w``; kept only for comparison."""
    X, Y = grid.coords2d
    G = h.gradient(X, Y)
    L = h.laplacian(X, Y)
    d = {k: diffops.plate_apply(grid, k, w) for k in ("dx", "dy", "dxx", "dyy", "dxy")}
    return (L[0] * d["dx"] + L[1] * d["dy"] + 2.0 * G[0, 0] * d["dxx"] + 2.0 * G[1, 1] * d["dyy"]
            + 2.0 * (G[0, 0] + G[1, 1]) * d["dxy"])


def _d1_fourth(f, axis, h):
    out = np.zeros_like(f)
    n = f.shape[axis]
    f = np.moveaxis(f, axis, 0)
    o = np.moveaxis(out, axis, 0)
    o[2:n - 2] = (-f[4:] + 8 * f[3:n - 1] - 8 * f[1:n - 3] + f[:n - 4]) / (12 * h)
    return out


def _d2_fourth(f, axis, h):
    out = np.zeros_like(f)
    n = f.shape[axis]
    f = np.moveaxis(f, axis, 0)
    o = np.moveaxis(out, axis, 0)
    o[2:n - 2] = (-f[4:] + 16 * f[3:n - 1] - 30 * f[2:n - 2] + 16 * f[1:n - 3] - f[:n - 4]) / (12 * h**2)
    return out


def commutator_oracle(h, w, grid):
    """``Lap_h(h . grad_h w) - h . grad_h(Lap_h w)`` composed from discrete operators.

    Fourth-order central stencils are used so the oracle is more accurate
    than the formula it checks.  Values are meaningful on nodes at least
    four cells from the rim; the returned array is zero elsewhere.
    """
    w = np.asarray(w, dtype=float)
    X, Y = grid.coords2d
    hv = h.value(X, Y)
    hx, hy = grid.hx, grid.hy

    def lap(f):
        return _d2_fourth(f, 0, hx) + _d2_fourth(f, 1, hy)

    def directional(f):
        return hv[0] * _d1_fourth(f, 0, hx) + hv[1] * _d1_fourth(f, 1, hy)

    out = lap(directional(w)) - directional(lap(w))
    return np.where(oracle_band(grid), out, 0.0)


def oracle_band(grid):
    band = np.zeros(grid.shape2d, dtype=bool)
    band[4:-4, 4:-4] = True
    return band


@dataclass(frozen=True)
class MultiplierTerms:
    lhs: float
    commutator_term: float
    rim_term: float
    divergence_term: float

    @property
    def rhs(self):
        # -(Lap w, [Lap, h.grad] w) - 1/2 rim + 1/2 div + rim
        return self.commutator_term - 0.5 * self.rim_term + self.divergence_term + self.rim_term

    @property
    def residual(self):
        return abs(self.lhs - self.rhs)

    @property
    def boundary_term(self):
        """``1/2 int_rim (h . nu) |Lap w|^2``; nonpositive once ``alpha >= alpha_min``."""
        return 0.5 * self.rim_term


def multiplier_terms(h, w, grid):
    """Discrete quadrature of each term of the flux-multiplier identity for clamped ``w``."""
    w = np.asarray(w, dtype=float)
    X, Y = grid.coords2d
    lap = diffops.plate_laplacian(grid, w)
    bih = diffops.biharmonic(grid, w)
    hv = h.value(X, Y)
    hgrad = hv[0] * diffops.plate_apply(grid, "dx", w) + hv[1] * diffops.plate_apply(grid, "dy", w)
    lhs = -grid.integrate_omega(bih * hgrad)
    comm = -grid.integrate_omega(lap * commutator_apply(h, w, grid))
    rim = grid.integrate_rim(rim_flux(h, grid) * lap**2)
    divt = 0.5 * grid.integrate_omega(h.divergence(X, Y) * lap**2)
    return MultiplierTerms(lhs, comm, rim, divt)


def multiplier_identity_residual(h, w, grid):
    return multiplier_terms(h, w, grid).residual


def clamped_bump(grid, kx=1, ky=1):
    """``sin^2(kx pi x / lx) sin^2(ky pi y / ly)`` on the top-face lattice."""
    X, Y = grid.coords2d
    return np.sin(kx * np.pi * X / grid.domain.lx) ** 2 * np.sin(ky * np.pi * Y / grid.domain.ly) ** 2


def random_clamped_field(grid, rng, modes=4):
    """Random combination of clamped bumps times smooth trigonometric factors."""
    X, Y = grid.coords2d
    lx, ly = grid.domain.lx, grid.domain.ly
    base = np.sin(np.pi * X / lx) ** 2 * np.sin(np.pi * Y / ly) ** 2
    out = np.zeros(grid.shape2d)
    for _ in range(modes):
        a, b = rng.integers(0, 3, size=2)
        c = rng.standard_normal()
        out += c * np.cos(a * np.pi * X / lx + rng.uniform(0, np.pi)) * np.cos(b * np.pi * Y / ly + rng.uniform(0, np.pi))
    return base * out


def commutator_bound_constant(h, grid, samples=20, seed=0):
    """Max of ``||[Lap, h.grad] w|| / ||Lap w||`` over random clamped fields."""
    if samples < 20:
        raise PreconditionError("at least 20 samples are required")
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(samples):
        w = random_clamped_field(grid, rng)
        num = np.sqrt(grid.integrate_omega(commutator_apply(h, w, grid) ** 2))
        den = np.sqrt(grid.integrate_omega(diffops.plate_laplacian(grid, w) ** 2))
        if den > 0:
            best = max(best, num / den)
    return float(best)
