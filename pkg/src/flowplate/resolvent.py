"""Resolvent solves for the shifted generator.

The staged solver follows the constructive route: fluid solution maps for
zero boundary data and for plate boundary data, a plate-only bilinear form
``B`` with right-hand side ``F``, then reconstruction of the fluid fields
from the plate displacement.  A monolithic sparse solve serves as oracle.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .errors import PreconditionError, SolverError


def _lu(mat, what):
    try:
        lu = spla.splu(sps.csc_matrix(mat))
    except RuntimeError as exc:
        raise SolverError(f"{what}: factorization failed ({exc})") from exc
    return lu


def _condition_estimate(mat):
    dense = mat.toarray() if sps.issparse(mat) else mat
    return float(np.linalg.cond(dense)) if dense.shape[0] <= 3000 else float("nan")


@dataclass
class FluidSolution:
    p: np.ndarray  # nodal pressure, flat
    u_free: np.ndarray
    velocity: np.ndarray  # full velocity (3N,), boundary datum included

    def x(self):
        return np.concatenate([self.p, self.u_free])


class FluidBvpSolver:
    """Fluid rows of ``((xi + eps) I - Ahat)`` with the top-face vertical velocity as boundary datum."""

    def __init__(self, asm, xi, eps=0.0):
        shift = float(xi) + float(eps)
        if not shift > 0:
            raise PreconditionError(f"xi + eps must be positive, got {shift}")
        self.asm, self.xi, self.eps, self.shift = asm, float(xi), float(eps), shift
        nf = asm.n_fluid
        diag = np.concatenate([shift + asm.half_div_diag[:nf]])
        F = (sps.diags(diag, shape=(nf, asm.fluid_X.shape[1])) - asm.fluid_X).tocsr()
        self.F_ff = F[:, :nf].tocsc()
        self.F_fg = F[:, nf:].tocsc()
        self._lu = _lu(self.F_ff, "fluid system")

    @property
    def n_fluid(self):
        return self.asm.n_fluid

    def solve_x(self, data, g=None):
        rhs = np.array(data, dtype=float)
        if g is not None:
            rhs = rhs - self.F_fg @ np.asarray(g, dtype=float)
        x = self._lu.solve(rhs)
        res = np.linalg.norm(self.F_ff @ x - rhs)
        if not np.isfinite(res) or res > 1e-10 * max(np.linalg.norm(rhs), 1e-300) and res > 1e-13:
            raise SolverError("fluid solve residual too large", residual=float(res),
                              condition=_condition_estimate(self.F_ff))
        return x

    def solve(self, p_star=None, v_star=None, g=None):
        asm = self.asm
        lay = asm.layout
        p_star = np.zeros(lay.n_p) if p_star is None else np.ravel(p_star)
        v_star = np.zeros(lay.n_u) if v_star is None else np.ravel(v_star)
        g = np.zeros(lay.n_w) if g is None else np.ravel(g)
        x = self.solve_x(np.concatenate([p_star, v_star]), g)
        vel = asm.LiftX @ np.concatenate([x, g])
        return FluidSolution(x[:lay.n_p], x[lay.n_p:], vel)

    @cached_property
    def boundary_map(self):
        """Dense ``Z`` with ``x(g) = Z g`` for zero interior data."""
        return -self._lu.solve(self.F_fg.toarray())


def solve_fluid_bvp(asm, xi, eps, p_star=None, v_star=None, g=None):
    return FluidBvpSolver(asm, xi, eps).solve(p_star, v_star, g)


# ---- fluid solution estimates --------------------------------------------------
def discrete_h1_norm(asm, velocity):
    """``(||u||^2 + ||grad u||^2)^(1/2)`` for a full velocity vector."""
    from .diffops import derivative_matrices

    grid = asm.grid
    N = grid.size
    W = grid.volume_weights.ravel()
    total = 0.0
    D = derivative_matrices(grid, "sbp")
    for c in range(3):
        uc = velocity[c * N:(c + 1) * N]
        total += W @ uc**2 + sum(W @ (Da @ uc) ** 2 for Da in D)
    return float(np.sqrt(total))


@dataclass
class LemmaRow:
    xi: float
    p_norm: float
    v_h1: float


@dataclass
class LemmaReport:
    rows: list
    slope: float
    h1_spread: float  # max / min of the velocity H^1 norms

    def passes(self, slope_tol=0.15, spread=2.0):
        return abs(self.slope + 1.0) <= slope_tol and self.h1_spread < spread


def lemma_data(asm, seed=0):
    lay = asm.layout
    rng = np.random.default_rng(seed)
    X, Y = asm.grid.coords2d
    g = asm.grid.omega_interior(np.sin(np.pi * X / asm.grid.domain.lx) * np.sin(np.pi * Y / asm.grid.domain.ly))
    return rng.standard_normal(lay.n_p), rng.standard_normal(lay.n_u), g


def verify_lemma_estimates(asm, xi_sweep, eps=0.0, data=None, fit_range=(1e2, 1e4)):
    """Pressure and velocity norms of the fluid solution along a ``xi`` sweep."""
    xi_sweep = sorted(float(x) for x in xi_sweep)
    if xi_sweep[-1] / xi_sweep[0] < 100 - 1e-9:
        raise PreconditionError("the sweep must span at least two decades")
    p_star, v_star, g = lemma_data(asm) if data is None else data
    W = asm.grid.volume_weights.ravel()
    rows = []
    for xi in xi_sweep:
        sol = FluidBvpSolver(asm, xi, eps).solve(p_star, v_star, g)
        rows.append(LemmaRow(xi, float(np.sqrt(W @ sol.p**2)), discrete_h1_norm(asm, sol.velocity)))
    sel = [r for r in rows if fit_range[0] <= r.xi <= fit_range[1]] or rows
    if all(r.p_norm == 0 for r in rows):
        return LemmaReport(rows, float("nan"), 1.0)
    lx = np.log([r.xi for r in sel])
    ly = np.log([r.p_norm for r in sel])
    slope = float(np.polyfit(lx, ly, 1)[0])
    h1 = [r.v_h1 for r in rows]
    return LemmaReport(rows, slope, float(max(h1) / min(h1)))


# ---- the plate form ----------------------------------------------------------------
class PlateBForm:
    """The plate-only bilinear form and its right-hand side at fixed ``xi``.

    ``matrix`` is the algebraic elimination of all fluid unknowns;
    ``display_matrix`` re-assembles the same form term by term from the
    fluid solution maps.  ``<B w, z> = z @ matrix @ w``.
    """

    def __init__(self, asm, xi, eps=0.0, fluid=None):
        self.asm = asm
        self.fluid = fluid or FluidBvpSolver(asm, xi, eps)
        self.shift = self.fluid.shift
        lay = asm.layout
        nf = asm.n_fluid
        self.Z = self.fluid.boundary_map
        R = (sps.diags(asm.W_omega) @ asm.traction_X).tocsr()
        self.R_x = R[:, :nf]
        self.R_z = R[:, nf:]
        self.C = (self.shift * sps.identity(lay.n_w) + asm.G_U).tocsr()
        self.K_plate = (asm.L_ghost.T @ asm.W2 @ asm.L_ghost).toarray()
        self.W_omega = np.diag(asm.W_omega)

    @cached_property
    def _trace_response(self):
        # R_x Z + R_z: plate load produced by a unit top-face velocity
        return np.asarray(self.R_x @ self.Z) + self.R_z.toarray()

    @cached_property
    def matrix(self):
        s = self.shift
        return s**2 * self.W_omega + self.K_plate - self._trace_response @ self.C.toarray()

    # fluid maps for the display form
    @cached_property
    def velocity_map(self):
        """Full velocity (3N x n_w) of the fluid solution with boundary datum ``z``."""
        X = np.vstack([self.Z, np.eye(self.asm.layout.n_w)])
        return np.asarray(self.asm.LiftX @ X)

    @cached_property
    def pressure_map(self):
        return self.Z[:self.asm.layout.n_p]

    def _forms(self):
        asm = self.asm
        Qu = asm.Q_u
        Adv = sps.block_diag([asm.advection_scalar] * 3, format="csr")
        Ddiv = sps.diags(np.tile(asm.div_u_field, 3))
        return Qu, Adv, Ddiv

    def _lower_order(self, vel, p):
        asm = self.asm
        if not asm.options.include_lower_order:
            return np.zeros_like(vel)
        grid = asm.grid
        N = grid.size
        Gm = asm.U.gradient(*grid.coords).reshape(3, 3, N)
        acc = asm.U.advective_acceleration(*grid.coords).reshape(3, N)
        out = np.zeros_like(vel)
        for i in range(3):
            out[i * N:(i + 1) * N] = sum(Gm[i, j][:, None] * vel[j * N:(j + 1) * N] for j in range(3)) + acc[i][:, None] * p
        return out

    @cached_property
    def display_matrix(self):
        asm = self.asm
        s, eta = self.shift, asm.params.eta
        Qu, Adv, Ddiv = self._forms()
        K, Div, W = asm.K_sigma, asm.Div, asm.W_vol
        V, P = self.velocity_map, self.pressure_map
        Gu = asm.G_U.toarray()
        VU, PU = V @ Gu, P @ Gu

        def mass(a, b):
            return b.T @ (Qu @ a)

        def stress(a, b):
            return b.T @ (K @ a)

        def adv(a, b):
            return b.T @ (Qu @ (Adv @ a))

        def divw(a, b):
            return b.T @ (Qu @ (Ddiv @ a))

        def pres(pa, b):
            return (Div @ b).T @ (W @ pa)

        def low(a, pa, b):
            return b.T @ (Qu @ self._lower_order(a, pa))

        B = (s**2 * self.W_omega + self.K_plate
             + s**2 * mass(V, V) + s * stress(V, V) + eta * s * mass(V, V)
             + s * adv(V, V) + 0.5 * s * divw(V, V)
             + s * mass(VU, V) - pres(PU, V) - s * pres(P, V)
             + s * low(V, P, V))
        B0 = adv(VU, V) + 0.5 * divw(VU, V) + eta * mass(VU, V) + stress(VU, V) + low(VU, PU, V)
        return B + B0

    # ---- right-hand side ------------------------------------------------------
    def rhs(self, data):
        """Algebraic right-hand side; returns ``(F, x_bar)``."""
        lay = self.asm.layout
        p_s, u_s, w1_s, w2_s = lay.split(data)
        x_bar = self.fluid.solve_x(np.concatenate([p_s, u_s]))
        F = (self.W_omega @ (w2_s + self.shift * w1_s) + self.R_x @ x_bar - self._trace_response @ w1_s)
        return F, x_bar

    def display_rhs(self, data):
        """Right-hand side assembled from the printed list of terms."""
        asm = self.asm
        lay = asm.layout
        s, eta = self.shift, asm.params.eta
        Qu, Adv, Ddiv = self._forms()
        K, Div, W = asm.K_sigma, asm.Div, asm.W_vol
        V, P = self.velocity_map, self.pressure_map
        p_s, u_s, w1_s, w2_s = lay.split(data)
        sol = self.fluid.solve(p_s, u_s, None)
        vb, pb = sol.velocity, sol.p
        vw, pw = V @ w1_s, P @ w1_s
        v_star_full = asm.P_free @ u_s
        F = (self.W_omega @ (w2_s + s * w1_s) + V.T @ (Qu @ v_star_full)
             + s * V.T @ (Qu @ (vw - vb))
             + V.T @ (Qu @ (Adv @ (vw - vb)))
             + 0.5 * V.T @ (Qu @ (Ddiv @ (vw - vb)))
             + eta * V.T @ (Qu @ (vw - vb))
             + V.T @ (K @ (vw - vb))
             - (Div @ V).T @ (W @ (pw - pb))
             + V.T @ (Qu @ (self._lower_order((vw - vb)[:, None], (pw - pb)[:, None])[:, 0])))
        return F

    def coercivity(self):
        """Smallest eigenvalue of ``sym(B)`` relative to the ``||Lap w||^2`` Gram."""
        S = 0.5 * (self.matrix + self.matrix.T)
        return float(sla.eigh(S, self.K_plate, eigvals_only=True, subset_by_index=[0, 0])[0])


# ---- staged and monolithic solves -----------------------------------------------
@dataclass
class StagedSolution:
    y: np.ndarray
    w1: np.ndarray
    fluid: np.ndarray
    boundary: np.ndarray
    residual: float


def resolvent_matrix(asm, xi, eps):
    return (float(xi) * sps.identity(asm.size) - asm.Ahat(eps)).tocsc()


def factorize_resolvent(asm, xi, eps):
    """Sparse LU of ``xi I - Ahat(eps)`` for repeated monolithic solves."""
    return _lu(resolvent_matrix(asm, xi, eps), "resolvent system")


def solve_resolvent_staged(asm, xi, eps, data, bform=None):
    """Two-stage solve of ``(xi I - Ahat(eps)) y = data``."""
    lay = asm.layout
    data = np.asarray(data, dtype=float)
    bf = bform or PlateBForm(asm, xi, eps)
    s = bf.shift
    F, x_bar = bf.rhs(data)
    try:
        w1 = sla.solve(bf.matrix, F)
    except (sla.LinAlgError, ValueError) as exc:
        raise SolverError(f"plate form solve failed: {exc}", coercivity=bf.coercivity()) from exc
    w1_s = data[lay.w]
    g = bf.C @ w1 - w1_s
    x = x_bar + bf.Z @ g
    w2 = s * w1 - w1_s
    y = np.concatenate([x, w1, w2])
    R = resolvent_matrix(asm, xi, eps)
    res = float(np.linalg.norm(R @ y - data) / max(np.linalg.norm(data), 1e-300))
    if res > 1e-8:
        raise SolverError("staged resolvent residual too large", residual=res)
    return StagedSolution(y, w1, x, g, res)


def solve_resolvent_monolithic(asm, xi, eps, data, lu=None):
    if not float(xi) + float(eps) > 0:
        raise PreconditionError("xi + eps must be positive")
    R = resolvent_matrix(asm, xi, eps)
    lu = lu or _lu(R, "resolvent system")
    y = lu.solve(np.asarray(data, dtype=float))
    res = float(np.linalg.norm(R @ y - data) / max(np.linalg.norm(data), 1e-300))
    if res > 1e-10:
        raise SolverError("monolithic residual too large", residual=res, condition=_condition_estimate(R))
    return y


@dataclass
class EllipticityRow:
    xi: float
    coercivity: float


@dataclass
class EllipticityReport:
    rows: list
    xi_min: float | None
    threshold: float

    def passes(self):
        if self.xi_min is None:
            return False
        tail = [r.coercivity for r in self.rows if r.xi >= self.xi_min]
        return all(c >= self.threshold for c in tail) and all(b >= a - 1e-12 * abs(a) for a, b in zip(tail, tail[1:]))


def check_B_ellipticity(asm, xi_list, eps=0.0, threshold=0.5):
    """Coercivity constants along ascending ``xi``; ``xi_min`` starts the tail that is above
    ``threshold`` and non-decreasing."""
    xi_list = [float(x) for x in xi_list]
    if any(b <= a for a, b in zip(xi_list, xi_list[1:])):
        raise PreconditionError("xi_list must be strictly ascending")
    rows = [EllipticityRow(x, PlateBForm(asm, x, eps).coercivity()) for x in xi_list]
    xi_min = None
    for k in range(len(rows) - 1, -1, -1):
        tail = rows[k:]
        ok = all(r.coercivity >= threshold for r in tail) and all(
            b.coercivity >= a.coercivity - 1e-12 * abs(a.coercivity) for a, b in zip(tail, tail[1:]))
        if ok:
            xi_min = rows[k].xi
        else:
            break
    return EllipticityReport(rows, xi_min, threshold)
