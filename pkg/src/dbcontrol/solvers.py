"""State and adjoint solves for the Dirichlet and Robin formulations.

Sign conventions: the boundary control ``q`` is the outward flux
``-du/dn`` on Gamma2, so it enters the load with a minus sign. The Robin
condition on Gamma1 reads ``-du/dn = alpha (u - b)``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .fem import ControlPair, FeFunction, operators
from .mesh import Mesh


class SolverError(RuntimeError):
    """A linear solve did not converge; ``report`` carries the last state."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class LinearSolveReport:
    iterations: int
    residual: float
    at_floor: bool = False


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Data of the control problem. ``alpha=None`` selects the Dirichlet formulation."""

    b: float
    z_d: FeFunction
    M1: float
    M2: float
    alpha: float | None = None

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError(f"b must be positive, got {self.b}")
        if not (self.M1 > 0 and self.M2 > 0):
            raise ValueError("M1 and M2 must be positive")
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")

    @property
    def variant(self) -> str:
        return "dirichlet" if self.alpha is None else "robin"

    def with_alpha(self, alpha: float | None) -> "ProblemSpec":
        return replace(self, alpha=alpha)


def _rounding_floor(A, x):
    """Relative-residual level below which ``rhs - A x`` is dominated by rounding."""
    return 16.0 * np.finfo(float).eps * np.linalg.norm(abs(A) @ np.abs(x))


def spd_solve(A, rhs, tol=1e-12, x0=None, maxiter=None):
    """Jacobi-preconditioned conjugate gradients.

    Stops when ``|A x - rhs| <= tol |rhs|``. On ill-conditioned systems that
    level can lie below what float64 can represent; the solve then also stops
    once the true residual reaches the rounding floor ``16 eps | |A| |x| |``,
    and the report says so. The iteration cap defaults to twenty times the
    dimension. Returns ``(x, LinearSolveReport)``.
    """
    rhs = np.asarray(rhs, dtype=float)
    n = rhs.shape[0]
    if maxiter is None:
        maxiter = 20 * n
    bnorm = np.linalg.norm(rhs)
    if not np.isfinite(bnorm):
        raise SolverError("right-hand side is not finite")
    if bnorm == 0.0:
        return np.zeros(n), LinearSolveReport(0, 0.0)

    diag = A.diagonal()
    if np.any(diag <= 0):
        raise SolverError("matrix diagonal is not positive; not SPD")
    dinv = 1.0 / diag
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = rhs - A @ x
    target = tol * bnorm
    rnorm = np.linalg.norm(r)
    if rnorm <= target:
        return x, LinearSolveReport(0, rnorm / bnorm)
    z = dinv * r
    d = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        Ad = A @ d
        dAd = d @ Ad
        if dAd <= 0:
            raise SolverError("matrix is not positive definite",
                              LinearSolveReport(it, rnorm / bnorm))
        step = rz / dAd
        x += step * d
        r -= step * Ad
        rnorm = np.linalg.norm(r)
        if rnorm <= target or (it % 50 == 0 and rnorm <= 1e3 * target):
            # the recursive residual drifts; decide on the true one
            r = rhs - A @ x
            true = np.linalg.norm(r)
            if true <= target:
                return x, LinearSolveReport(it, true / bnorm)
            floor = _rounding_floor(A, x)
            if true <= floor:
                return x, LinearSolveReport(it, true / bnorm, at_floor=True)
        z = dinv * r
        rz_new = r @ z
        d = z + (rz_new / rz) * d
        rz = rz_new
    report = LinearSolveReport(maxiter, float(np.linalg.norm(rhs - A @ x) / bnorm))
    raise SolverError(f"CG did not reach tol={tol} in {maxiter} iterations", report)


def _check(mesh: Mesh, ctrl: ControlPair):
    if ctrl.mesh is not mesh:
        raise ValueError("control lives on a different mesh")


def control_load(mesh: Mesh, ctrl: ControlPair) -> np.ndarray:
    """Load vector of ``(g, v)_H - (q, v)_Q`` against every basis function."""
    _check(mesh, ctrl)
    ops = operators(mesh)
    return ops.mass @ ctrl.g.values - ops.q_coupling @ ctrl.q.values


def _dirichlet_solve(mesh, load, tol, x0):
    free = mesh.free_nodes
    guess = None if x0 is None else x0[free]
    sol, _ = spd_solve(operators(mesh).dirichlet_block, load[free], tol=tol, x0=guess)
    return free, sol


def solve_state_dirichlet(mesh, spec, ctrl, tol=1e-12, x0=None, load=None) -> FeFunction:
    """Discrete Dirichlet state in ``K_h``: ``u = b`` on Gamma1.

    The lift is the constant ``b``, which the stiffness form annihilates, so
    only the control load drives the homogeneous part. ``load`` replaces the
    load vector of ``ctrl`` (pass ``ctrl=None`` then).
    """
    if load is None:
        load = control_load(mesh, ctrl)
    free, sol = _dirichlet_solve(mesh, load, tol, None if x0 is None else x0 - spec.b)
    u = np.full(mesh.n_vertices, float(spec.b))
    u[free] += sol
    return FeFunction(mesh, u, space="Kh", lift=float(spec.b))


def solve_state_robin(mesh, spec, ctrl, tol=1e-12, x0=None, load=None) -> FeFunction:
    """Discrete Robin state in ``V_h``."""
    if spec.alpha is None:
        raise ValueError("Robin state needs spec.alpha")
    ops = operators(mesh)
    if load is None:
        load = control_load(mesh, ctrl)
    load = load + spec.alpha * spec.b * (ops.gamma1_mass @ np.ones(mesh.n_vertices))
    u, _ = spd_solve(ops.robin(spec.alpha), load, tol=tol, x0=x0)
    return FeFunction(mesh, u)


def solve_adjoint_dirichlet(mesh, spec, u, tol=1e-12, x0=None) -> FeFunction:
    """Adjoint state in ``V_0h`` driven by ``u - z_d``."""
    load = operators(mesh).mass @ (u.values - spec.z_d.values)
    free, sol = _dirichlet_solve(mesh, load, tol, x0)
    p = np.zeros(mesh.n_vertices)
    p[free] = sol
    return FeFunction(mesh, p, space="V0h")


def solve_adjoint_robin(mesh, spec, u, tol=1e-12, x0=None) -> FeFunction:
    if spec.alpha is None:
        raise ValueError("Robin adjoint needs spec.alpha")
    ops = operators(mesh)
    load = ops.mass @ (u.values - spec.z_d.values)
    p, _ = spd_solve(ops.robin(spec.alpha), load, tol=tol, x0=x0)
    return FeFunction(mesh, p)


def solve_state(mesh, spec, ctrl, **kw) -> FeFunction:
    """Dispatch on ``spec.alpha``."""
    if spec.alpha is None:
        return solve_state_dirichlet(mesh, spec, ctrl, **kw)
    return solve_state_robin(mesh, spec, ctrl, **kw)


def solve_adjoint(mesh, spec, u, **kw) -> FeFunction:
    if spec.alpha is None:
        return solve_adjoint_dirichlet(mesh, spec, u, **kw)
    return solve_adjoint_robin(mesh, spec, u, **kw)
