"""Discrete generator, its shifted version and the modified Gram matrix.

Degrees of freedom (the reduced state ``y``) are laid out as
``[p | u_free | w | v]``:

* ``p`` at every node;
* velocity component ``c`` at every node not on a face with normal ``+-e_c``
  (so normal components on the walls vanish and the top-face vertical
  component is not a free unknown);
* ``w`` and ``v`` on the interior top-face nodes.

The vertical velocity on the top face is eliminated exactly:
``u_3 = v + U . grad w`` there (zero on the rim).  The fluid rows are a
weak (Galerkin) form built from summation-by-parts derivatives and
trapezoid weights, so the pressure and traction exchange with the plate is
an exact discrete adjoint pair.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps

from . import diffops
from .errors import AssemblyError, CalibrationError, PreconditionError

SBP = "sbp"


def _diag(v):
    return sps.diags(np.asarray(v, dtype=float).ravel(), format="csr")


def _select(n_total, idx):
    idx = np.asarray(idx)
    return sps.csr_matrix((np.ones(idx.size), (idx, np.arange(idx.size))), shape=(n_total, idx.size))


@dataclass(frozen=True)
class AssemblyOptions:
    include_lower_order: bool = False


@dataclass(eq=False)
class StateLayout:
    """Index bookkeeping for the reduced state vector."""

    grid: object

    def __post_init__(self):
        g = self.grid
        N = g.size
        free = []
        for c in range(3):
            on = g.on_face[2 * c] | g.on_face[2 * c + 1]
            free.append(np.flatnonzero(~on.ravel()))
        self.u_free = free
        # flat indices into a component-major 3N vector
        self.u_free_flat = np.concatenate([c * N + f for c, f in enumerate(free)])
        self.n_p = N
        self.n_u = self.u_free_flat.size
        self.n_w = g.n_omega
        self.size = self.n_p + self.n_u + 2 * self.n_w
        o = np.cumsum([0, self.n_p, self.n_u, self.n_w, self.n_w])
        self.p = slice(o[0], o[1])
        self.u = slice(o[1], o[2])
        self.w = slice(o[2], o[3])
        self.v = slice(o[3], o[4])
        self.top_u3_flat = 2 * N + g.top_interior_nodes

    def block(self, name):
        s = getattr(self, name)
        return sps.csr_matrix((np.ones(s.stop - s.start), (np.arange(s.stop - s.start), np.arange(s.start, s.stop))),
                              shape=(s.stop - s.start, self.size))

    def split(self, y):
        y = np.asarray(y, dtype=float)
        return y[self.p], y[self.u], y[self.w], y[self.v]

    def join(self, p, u, w, v):
        return np.concatenate([np.ravel(p), np.ravel(u), np.ravel(w), np.ravel(v)])

    def zeros(self):
        return np.zeros(self.size)


def plate_advection_matrix(grid, field2):
    """``F . grad_h`` acting on interior plate values, returning interior values.

    ``field2`` is a ``(2, nx, ny)`` array of the in-plane vector field.
    """
    P = diffops.plate_matrices(grid)
    op = _diag(field2[0]) @ P["dx"] + _diag(field2[1]) @ P["dy"]
    return (P["embed"].T @ op @ P["embed"]).tocsr()


@dataclass(eq=False)
class GeneratorAssembly:
    grid: object
    U: object
    params: diffops.FluidParams
    options: AssemblyOptions = field(default_factory=AssemblyOptions)

    def __post_init__(self):
        self.layout = StateLayout(self.grid)
        try:
            self._assemble()
        except (ValueError, RuntimeError) as exc:  # pragma: no cover - defensive
            raise AssemblyError(f"generator assembly failed: {exc}") from exc

    # ---- building blocks --------------------------------------------------
    def _assemble(self):
        g, lay, prm = self.grid, self.layout, self.params
        N, nO = g.size, g.n_omega
        D = diffops.derivative_matrices(g, SBP)
        W = _diag(g.volume_weights)
        X, Y, Z = g.coords
        Uv = self.U.velocity(X, Y, Z).reshape(3, N)
        divU = self.U.divergence(X, Y, Z).ravel()
        self.div_u_field = divU

        Div = sps.hstack(D, format="csr")
        self.Div = Div
        zero = sps.csr_matrix((N, N))

        def comp(i, op):
            blocks = [zero, zero, zero]
            blocks[i] = op
            return sps.hstack(blocks, format="csr")

        K = prm.lam * (Div.T @ W @ Div)
        for i in range(3):
            for j in range(3):
                Eij = 0.5 * (comp(i, D[j]) + comp(j, D[i]))
                K = K + 2.0 * prm.nu * (Eij.T @ W @ Eij)
        self.K_sigma = K.tocsr()

        AU = sum(_diag(Uv[a]) @ D[a] for a in range(3)).tocsr()
        self.advection_scalar = AU
        Adv = sps.block_diag([AU, AU, AU], format="csr")

        Pf = _select(3 * N, lay.u_free_flat)
        Sf = _select(3 * N, lay.top_u3_flat)
        self.P_free, self.S_top = Pf, Sf
        w3 = np.tile(g.volume_weights.ravel(), 3)
        qu = np.zeros(3 * N)
        qu[lay.u_free_flat] = w3[lay.u_free_flat]
        self.Q_u = _diag(qu)
        Wf = w3[lay.u_free_flat]
        self.W_free = Wf
        self.W_vol = W
        Wo = g.hx * g.hy * np.ones(nO)
        self.W_omega = Wo

        # plate operators
        P = diffops.plate_matrices(g)
        self.L_ghost = (P["lap"] @ P["embed"]).tocsr()
        self.W2 = _diag(g.omega_weights)
        self.Bih = (_diag(1.0 / Wo) @ self.L_ghost.T @ self.W2 @ self.L_ghost).tocsr()
        Uo = self.U.omega(*g.coords2d)
        self.G_U = plate_advection_matrix(g, Uo)

        # fluid operator on X = [p | u_free | z], z = top-face vertical velocity
        nX = N + lay.n_u + nO
        self.n_fluid = N + lay.n_u
        Ep = _select(nX, np.arange(N)).T.tocsr()
        Euf = _select(nX, N + np.arange(lay.n_u)).T.tocsr()
        Ez = _select(nX, N + lay.n_u + np.arange(nO)).T.tocsr()
        LiftX = (Pf @ Euf + Sf @ Ez).tocsr()
        self.LiftX = LiftX

        rows_p = -AU @ Ep - Div @ LiftX
        force = -K @ LiftX + Div.T @ W @ Ep
        rows_u = _diag(1.0 / Wf) @ Pf.T @ force - Pf.T @ Adv @ LiftX - prm.eta * Euf
        if self.options.include_lower_order:
            rows_p = rows_p - _diag(divU) @ Ep
            Gm = self.U.gradient(X, Y, Z).reshape(3, 3, N)
            Gop = sps.bmat([[_diag(Gm[i, j]) for j in range(3)] for i in range(3)], format="csr")
            acc = self.U.advective_acceleration(X, Y, Z).reshape(3, N)
            Acc = sps.vstack([_diag(acc[i]) for i in range(3)], format="csr")
            rows_u = rows_u - Pf.T @ (Gop @ LiftX + Acc @ Ep)
        self.fluid_X = sps.vstack([rows_p, rows_u], format="csr")
        self.traction_X = (_diag(1.0 / Wo) @ Sf.T @ force).tocsr()

        # reduced state -> X
        Cy = sps.bmat([
            [sps.identity(N), None, None, None],
            [None, sps.identity(lay.n_u), None, None],
            [None, None, self.G_U, sps.identity(nO)],
        ], format="csr")
        self.state_to_X = Cy
        Ew, Ev = lay.block("w"), lay.block("v")
        self.A = sps.vstack([
            self.fluid_X @ Cy,
            Ev,
            self.traction_X @ Cy - self.Bih @ Ew,
        ], format="csr")
        self.lift = (LiftX @ Cy).tocsr()

        half_div = np.concatenate([0.5 * divU, 0.5 * np.tile(divU, 3)[lay.u_free_flat]])
        self.half_div_diag = np.concatenate([half_div, np.zeros(2 * nO)])

    # ---- public API -----------------------------------------------------------
    @property
    def size(self):
        return self.layout.size

    def perturbation(self, eps):
        """Diagonal of ``A - Ahat(eps)``."""
        return self.half_div_diag + float(eps)

    def Ahat(self, eps):
        return (self.A - _diag(self.perturbation(eps))).tocsr()

    def full_velocity(self, y):
        """Velocity on every node (3, nx, ny, nz), including the eliminated components."""
        return (self.lift @ y).reshape((3,) + self.grid.shape)

    def fields(self, y):
        p, _, w, v = self.layout.split(y)
        g = self.grid
        return p.reshape(g.shape), self.full_velocity(y), g.omega_to_full(w), g.omega_to_full(v)

    def coupling_residual(self, y):
        """``max |u_3 - v - U . grad w|`` over interior top-face nodes."""
        _, _, w, v = self.layout.split(y)
        u3 = (self.lift @ y)[self.layout.top_u3_flat]
        return float(np.max(np.abs(u3 - v - self.G_U @ w))) if w.size else 0.0

    @cached_property
    def scale(self):
        """A representative magnitude for ``A`` (max absolute row sum)."""
        return float(abs(self.A).sum(axis=1).max())


def assemble_A(grid, U, params, options=None):
    return GeneratorAssembly(grid, U, params, options or AssemblyOptions())


# ---- Gram matrix -------------------------------------------------------------
@dataclass(eq=False)
class GramMatrix:
    M: np.ndarray
    T: sps.spmatrix
    Q: sps.spmatrix
    alpha: float

    def norm(self, y):
        return float(np.sqrt(max(y @ (self.M @ y), 0.0)))

    def inner(self, a, b):
        return float(a @ (self.M @ b))


def assemble_gram(asm, g=None, alpha=0.0, dirichlet=None, check=True):
    """``M = T^T Q T`` for ``T y = [p, u - alpha D(g . grad w) e3, Lap w, v + h . grad w]``.

    ``h = U|_top - alpha g``.  With ``alpha > 0`` both ``g`` (a
    :class:`~flowplate.plate.NormalExtension`) and ``dirichlet`` (a
    :class:`~flowplate.harmonic.DirichletSolver`) are required.
    """
    grid, lay = asm.grid, asm.layout
    N = grid.size
    alpha = float(alpha)
    if not np.isfinite(alpha) or alpha < 0:
        raise PreconditionError(f"alpha must be >= 0, got {alpha}")
    Ew = lay.block("w")
    Ev = lay.block("v")
    Tu = asm.lift
    Gh = asm.G_U
    if alpha > 0:
        if g is None or dirichlet is None:
            raise PreconditionError("alpha > 0 needs a normal extension and a Dirichlet solver")
        gv = g.value(*grid.coords2d)
        Gg = plate_advection_matrix(grid, gv)
        Dm = sps.csr_matrix(dirichlet.matrix)
        E3 = _select(3 * N, 2 * N + np.arange(N))
        Tu = (Tu - alpha * (E3 @ Dm @ Gg @ Ew)).tocsr()
        Gh = (Gh - alpha * Gg).tocsr()
    T = sps.vstack([lay.block("p"), Tu, asm.L_ghost @ Ew, Ev + Gh @ Ew], format="csr")
    Q = sps.block_diag([asm.W_vol, asm.Q_u, asm.W2, _diag(asm.W_omega)], format="csr")
    M = (T.T @ Q @ T).toarray()
    M = 0.5 * (M + M.T)
    if check:
        lam_min = float(sla.eigh(M, eigvals_only=True, subset_by_index=[0, 0])[0])
        if not lam_min > 0:
            raise AssemblyError(f"Gram matrix is not positive definite (smallest eigenvalue {lam_min:.3e})")
    return GramMatrix(M, T, Q, alpha)


def standard_gram(asm):
    """Gram matrix of the unmodified norm ``||p||^2 + ||u||^2 + ||Lap w||^2 + ||v||^2``."""
    lay = asm.layout
    T = sps.vstack([lay.block("p"), asm.P_free @ lay.block("u"), asm.L_ghost @ lay.block("w"), lay.block("v")],
                   format="csr")
    Q = sps.block_diag([asm.W_vol, asm.Q_u, asm.W2, _diag(asm.W_omega)], format="csr")
    M = (T.T @ Q @ T).toarray()
    return GramMatrix(0.5 * (M + M.T), T, Q, 0.0)


def symmetric_rate_matrix(asm, gram, eps):
    """``sym(M Ahat(eps))``; its quadratic form is ``Re <Ahat y, y>_M``."""
    MA = np.asarray(gram.M @ asm.Ahat(eps).toarray())
    return 0.5 * (MA + MA.T)


def dissipation_rate(asm, gram, eps, y):
    y = np.asarray(y, dtype=float)
    return float((gram.M @ y) @ (asm.Ahat(eps) @ y))


def equivalence_bounds(gram, reference):
    """Extreme generalized eigenvalues of ``(gram.M, reference.M)``."""
    vals = sla.eigh(gram.M, reference.M, eigvals_only=True)
    return float(vals[0]), float(vals[-1])


@dataclass
class CalibrationResult:
    eps_star: float
    abscissa_unshifted: float
    scale: float
    abscissa_at_eps: float
    curve: list  # (eps, abscissa) pairs

    def abscissa(self, eps):
        return self.abscissa_unshifted - eps


def m_relative_spectrum(S, M):
    return sla.eigh(S, M, eigvals_only=True)


def calibrate_epsilon(asm, gram, eps_cap=1e6, zero_tol=1e-12, sweep=None):
    """Smallest ``eps >= 0`` with ``sym(M Ahat(eps)) <= 0`` relative to ``M``.

    ``sym(M Ahat(eps)) = sym(M Ahat(0)) - eps M``, so the ``M``-relative
    spectral abscissa is an affine function of ``eps`` with slope ``-1`` and
    the threshold is its value at ``eps = 0``.  Pencil eigenvalues within
    ``zero_tol`` times the spectral scale are treated as zero.
    """
    S0 = symmetric_rate_matrix(asm, gram, 0.0)
    vals = m_relative_spectrum(S0, gram.M)
    scale = float(max(abs(vals[0]), abs(vals[-1]), 1.0))
    top = float(vals[-1])
    eps_star = top if top > zero_tol * scale else 0.0
    if eps_star > eps_cap:
        raise CalibrationError(f"no eps <= {eps_cap:g} makes the generator dissipative", spectrum=vals)
    # independent check: recompute the abscissa at eps_star from the shifted operator
    S = symmetric_rate_matrix(asm, gram, eps_star)
    at = float(sla.eigh(S, gram.M, eigvals_only=True, subset_by_index=[len(vals) - 1, len(vals) - 1])[0])
    sweep = sweep if sweep is not None else [0.0, 0.5 * eps_star, eps_star, 2 * eps_star + 1.0]
    curve = [(float(e), top - float(e)) for e in sweep]
    return CalibrationResult(eps_star, top, scale, at, curve)
