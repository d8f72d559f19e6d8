"""Ambient (background) flow fields.

Each family is written once as a sympy expression; velocity, gradient,
divergence and the derivatives of the top-face restriction are generated from
it, so no derivative is coded by hand.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import sympy as sp

_x, _y, _z = sp.symbols("x y z", real=True)
SYMBOLS = (_x, _y, _z)


def _lambdify(expr, args):
    f = sp.lambdify(args, expr, modules="numpy")

    def evaluate(*xs):
        xs = np.broadcast_arrays(*[np.asarray(a, dtype=float) for a in xs])
        return np.broadcast_to(np.asarray(f(*xs), dtype=float), xs[0].shape).copy()

    return evaluate


@dataclass(frozen=True, eq=False)
class AmbientFlow:
    family: str
    params: dict
    components: tuple  # three sympy expressions in x, y, z
    analytic_div_sup: float | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def _fn(self, key, expr_builder, args=(_x, _y, _z)):
        if key not in self._cache:
            self._cache[key] = _lambdify(expr_builder(), args)
        return self._cache[key]

    def velocity(self, X, Y, Z):
        return np.stack([self._fn(("U", i), lambda i=i: self.components[i])(X, Y, Z) for i in range(3)])

    def gradient(self, X, Y, Z):
        """``G[i, j] = dU_i / dx_j``."""
        syms = (_x, _y, _z)
        rows = []
        for i in range(3):
            rows.append(np.stack([
                self._fn(("dU", i, j), lambda i=i, j=j: sp.diff(self.components[i], syms[j]))(X, Y, Z)
                for j in range(3)
            ]))
        return np.stack(rows)

    def divergence(self, X, Y, Z):
        return self._fn("div", lambda: sum(sp.diff(c, s) for c, s in zip(self.components, (_x, _y, _z))))(X, Y, Z)

    def advective_acceleration(self, X, Y, Z):
        """``(U . grad) U``."""
        U = self.velocity(X, Y, Z)
        G = self.gradient(X, Y, Z)
        return np.einsum("ij...,j...->i...", G, U)

    # ---- top-face restriction (x3 = 0), tangential components -------------
    def _omega_expr(self, i):
        return self.components[i].subs(_z, 0)

    def omega(self, X, Y):
        return np.stack([self._fn(("O", i), lambda i=i: self._omega_expr(i), (_x, _y))(X, Y) for i in range(2)])

    def omega_gradient(self, X, Y):
        """``G[i, j] = d(U_i|_Omega) / dx_j`` for ``i, j`` in the plane."""
        syms = (_x, _y)
        return np.stack([
            np.stack([
                self._fn(("dO", i, j), lambda i=i, j=j: sp.diff(self._omega_expr(i), syms[j]), (_x, _y))(X, Y)
                for j in range(2)
            ])
            for i in range(2)
        ])

    def omega_laplacian(self, X, Y):
        return np.stack([
            self._fn(("lapO", i), lambda i=i: sp.diff(self._omega_expr(i), _x, 2) + sp.diff(self._omega_expr(i), _y, 2), (_x, _y))(X, Y)
            for i in range(2)
        ])

    def omega_normal_component(self, X, Y):
        """``U_3`` on the plate; zero for every admissible field."""
        return self._fn(("O", 2), lambda: self._omega_expr(2), (_x, _y))(X, Y)

    @property
    def is_zero(self):
        return all(sp.simplify(c) == 0 for c in self.components)


def make_zero_flow():
    return AmbientFlow("zero", {}, (sp.Integer(0),) * 3, analytic_div_sup=0.0)


def make_channel_flow(amplitude, lx=1.0):
    """``U = (a0 sin(pi x1 / lx), 0, 0)``; divergence ``a0 (pi/lx) cos(pi x1/lx)``."""
    a0 = float(amplitude)
    if not np.isfinite(a0):
        raise ValueError("channel amplitude must be finite")
    u1 = sp.Float(a0) * sp.sin(sp.pi * _x / sp.Float(lx))
    return AmbientFlow("channel", {"amplitude": a0, "lx": lx}, (u1, sp.Integer(0), sp.Integer(0)),
                       analytic_div_sup=abs(a0) * np.pi / lx)


def make_swirl_flow(amplitude, lx=1.0, ly=1.0, lz=1.0, profile=None):
    """Divergence-free swirl ``U = (d2 psi, -d1 psi, 0) * phi(x3)``.

    ``psi = s0 sin^2(pi x1/lx) sin^2(pi x2/ly)`` is constant on the lateral
    rim, so ``U . n`` vanishes on every face.  ``profile`` is a sympy
    expression in ``z``; the default is ``cos(pi x3 / (2 lz))``.
    """
    s0 = float(amplitude)
    psi = sp.Float(s0) * sp.sin(sp.pi * _x / sp.Float(lx)) ** 2 * sp.sin(sp.pi * _y / sp.Float(ly)) ** 2
    phi = profile if profile is not None else sp.cos(sp.pi * _z / (2 * sp.Float(lz)))
    comps = (sp.diff(psi, _y) * phi, -sp.diff(psi, _x) * phi, sp.Integer(0))
    return AmbientFlow("swirl", {"amplitude": s0, "lx": lx, "ly": ly, "lz": lz}, comps, analytic_div_sup=0.0)


def make_flow(family, amplitude, domain):
    family = family.lower()
    if family == "zero":
        return make_zero_flow()
    if family == "channel":
        return make_channel_flow(amplitude, domain.lx)
    if family == "swirl":
        return make_swirl_flow(amplitude, domain.lx, domain.ly, domain.lz)
    raise ValueError(f"unknown ambient family {family!r}")


def div_sup(U, grid):
    """Grid maximum of ``|div U|``."""
    return float(np.max(np.abs(U.divergence(*grid.coords))))


def normal_trace(U, grid):
    """``|U . n|`` for every face each boundary node lies on, flattened."""
    vel = U.velocity(*grid.coords)
    out = []
    for axis in range(3):
        on = grid.on_face[2 * axis] | grid.on_face[2 * axis + 1]
        out.append(np.abs(vel[axis][on]))
    return np.concatenate(out)
