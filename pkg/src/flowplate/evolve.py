"""Time stepping and semigroup growth checks."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .errors import PreconditionError, SolverError

DENSE_DOF_CAP = 2000


class Stepper:
    """Implicit Euler or trapezoidal stepping for ``y' = A y`` with a fixed step."""

    def __init__(self, operator, dt, scheme="implicit_euler"):
        if not dt > 0:
            raise PreconditionError(f"dt must be positive, got {dt}")
        if scheme not in ("implicit_euler", "trapezoidal"):
            raise PreconditionError(f"unknown scheme {scheme!r}")
        self.A = sps.csr_matrix(operator)
        self.dt, self.scheme = float(dt), scheme
        n = self.A.shape[0]
        theta = 1.0 if scheme == "implicit_euler" else 0.5
        self._lhs = (sps.identity(n) - theta * self.dt * self.A).tocsc()
        self._rhs = (sps.identity(n) + (1 - theta) * self.dt * self.A).tocsr()
        try:
            self._lu = spla.splu(self._lhs)
        except RuntimeError as exc:
            raise SolverError(f"step matrix factorization failed at dt={dt}", dt=dt) from exc

    def step(self, y):
        b = self._rhs @ y
        y_next = self._lu.solve(b)
        res = np.linalg.norm(self._lhs @ y_next - b)
        if not np.isfinite(res) or res > 1e-10 * max(np.linalg.norm(b), 1e-300) and res > 1e-14:
            raise SolverError("time step residual too large", dt=self.dt, residual=float(res))
        return y_next


def step_implicit_euler(operator, y, dt):
    return Stepper(operator, dt).step(np.asarray(y, dtype=float))


@dataclass
class Trajectory:
    times: np.ndarray
    energy: np.ndarray
    standard: np.ndarray
    coupling: np.ndarray
    states: list = field(default_factory=list)

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def rows(self):
        return list(zip(self.times, self.energy, self.standard, self.coupling))


def _coupling_relative(asm, y, gram):
    lay = asm.layout
    _, _, w, v = lay.split(y)
    u3 = (asm.lift @ y)[lay.top_u3_flat]
    diff = u3 - v - asm.G_U @ w
    num = np.sqrt(asm.W_omega @ diff**2)
    den = gram.norm(y)
    return float(num / den) if den > 0 else float(num)


def simulate(asm, gram, y0, T, dt, operator=None, scheme="implicit_euler", keep_every=0):
    """Integrate from ``y0`` to ``T``; ``operator`` defaults to ``asm.A``."""
    if T <= 0:
        raise PreconditionError("final time must be positive")
    op = asm.A if operator is None else operator
    stepper = Stepper(op, dt, scheme)
    from .generator import standard_gram

    std = standard_gram(asm)
    nsteps = int(round(T / dt))
    y = np.asarray(y0, dtype=float).copy()
    times, en, sn, cr, states = [0.0], [gram.norm(y)], [std.norm(y)], [_coupling_relative(asm, y, gram)], []
    if keep_every:
        states.append(y.copy())
    for k in range(1, nsteps + 1):
        y = stepper.step(y)
        times.append(k * dt)
        en.append(gram.norm(y))
        sn.append(std.norm(y))
        cr.append(_coupling_relative(asm, y, gram))
        if keep_every and k % keep_every == 0:
            states.append(y.copy())
    return Trajectory(np.array(times), np.array(en), np.array(sn), np.array(cr), states)


def m_operator_norm(E, M):
    """``max ||E y||_M / ||y||_M``."""
    top = sla.eigh(E.T @ M @ E, M, eigvals_only=True, subset_by_index=[M.shape[0] - 1, M.shape[0] - 1])[0]
    return float(np.sqrt(max(top, 0.0)))


@dataclass
class GrowthRow:
    t: float
    norm: float
    bound: float
    contraction_norm: float

    @property
    def margin(self):
        return self.bound - self.norm


@dataclass
class GrowthReport:
    K: float
    eps_star: float
    div_sup: float
    rows: list

    def passes(self, rel=1e-6, contraction_tol=1e-8):
        return all(r.norm <= r.bound * (1 + rel) and r.contraction_norm <= 1 + contraction_tol for r in self.rows)


def growth_bound_check(asm, gram, eps_star, t_grid, div_sup_value, dof_cap=DENSE_DOF_CAP):
    """Dense matrix exponentials compared against ``exp(K t)``, ``K = div_sup / 2 + eps_star``."""
    n = asm.size
    if n > dof_cap:
        raise PreconditionError(f"reduced system has {n} DOFs; dense exponentials are capped at {dof_cap}")
    K = 0.5 * div_sup_value + eps_star
    A = asm.A.toarray()
    Ah = asm.Ahat(eps_star).toarray()
    rows = []
    for t in t_grid:
        E = sla.expm(A * t)
        Eh = sla.expm(Ah * t)
        rows.append(GrowthRow(float(t), m_operator_norm(E, gram.M), float(np.exp(K * t)), m_operator_norm(Eh, gram.M)))
    return GrowthReport(K, eps_star, div_sup_value, rows)


def semigroup_defect(operator, t, s):
    """``||exp(A(t+s)) - exp(At) exp(As)|| / ||exp(A(t+s))||``."""
    A = operator.toarray() if sps.issparse(operator) else np.asarray(operator)
    lhs = sla.expm(A * (t + s))
    rhs = sla.expm(A * t) @ sla.expm(A * s)
    return float(np.linalg.norm(lhs - rhs) / np.linalg.norm(lhs))
