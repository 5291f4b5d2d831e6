"""Discrete functional-analytic constants, rate fits and the uniform-bound audit.

The coercivity constants are smallest generalized eigenvalues of a form
against the full H1 Gram matrix ``M + A``; the trace norm is the square root
of the largest generalized eigenvalue of the boundary mass against ``M + A``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .fem import BoundaryTrace, ControlPair, FeFunction, control_norm, norm, operators
from .mesh import Mesh
from .solvers import SolverError, spd_solve

EIG_TOL = 1e-8
EIG_MAX_ITER = 5000


@dataclass(frozen=True)
class ConstantsReport:
    lambda_h: float
    lambda1_h: float
    gamma_norm_h: float
    M1: float
    M2: float
    alpha: float | None
    lambda_alpha_h: float | None
    C0: float
    C0alpha: float | None
    m: float
    M: float


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    points: tuple


@dataclass(frozen=True)
class BoundRecord:
    name: str
    alpha: float
    measured: float
    bound: float
    satisfied: bool


@dataclass
class BoundAudit:
    records: list = field(default_factory=list)

    @property
    def all_satisfied(self) -> bool:
        return all(r.satisfied for r in self.records)

    def __getitem__(self, key):
        """``audit["c4"]`` -> records of that bound, ``audit["c4", 10.0]`` -> one record."""
        if isinstance(key, tuple):
            name, alpha = key
            return next(r for r in self.records if r.name == name and r.alpha == alpha)
        return [r for r in self.records if r.name == key]


# ---------------------------------------------------------------------------
# eigenvalue estimates


def _pencil(mesh: Mesh, which: str):
    ops = operators(mesh)
    if which == "V0h":
        free = mesh.free_nodes
        return ops.dirichlet_block, ops.h1[free][:, free].tocsr()
    if which == "Vh_a1":
        return ops.robin(1.0), ops.h1
    raise ValueError(f"which must be 'V0h' or 'Vh_a1', got {which!r}")


def _power(step, K, G, n, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n) + 1.0
    x /= math.sqrt(x @ (G @ x))
    lam = np.inf
    for it in range(1, EIG_MAX_ITER + 1):
        y = step(x)
        y /= math.sqrt(y @ (G @ y))
        new = float(y @ (K @ y))  # Rayleigh quotient, y is G-normalised
        x = y
        if abs(new - lam) <= 1e-2 * EIG_TOL * abs(new):
            return new, x, it
        lam = new
    raise SolverError(f"eigen-iteration did not converge in {EIG_MAX_ITER} steps")


def estimate_lambda(mesh: Mesh, which: str = "V0h", seed: int = 0, return_vector: bool = False):
    """Coercivity constant: smallest eigenvalue of ``a`` (on V0h) or ``a_1`` (on Vh) vs ``M + A``.

    Computed by inverse iteration with zero shift.
    """
    K, G = _pencil(mesh, which)
    solve = lambda v: spd_solve(K, G @ v, tol=1e-12)[0]
    lam, vec, _ = _power(solve, K, G, K.shape[0], seed)
    if return_vector:
        full = np.zeros(mesh.n_vertices)
        if which == "V0h":
            full[mesh.free_nodes] = vec
        else:
            full = vec
        return lam, full
    return lam


def estimate_trace_norm(mesh: Mesh, seed: int = 0, return_vector: bool = False):
    """Norm of the trace map ``(V, |.|_V) -> L2(boundary)`` on the discrete space."""
    ops = operators(mesh)
    B, G = ops.boundary_mass, ops.h1
    solve = lambda v: spd_solve(G, B @ v, tol=1e-12)[0]
    mu, vec, _ = _power(solve, B, G, mesh.n_vertices, seed)
    if return_vector:
        return math.sqrt(mu), vec
    return math.sqrt(mu)


def dense_eigenvalues(mesh: Mesh, which: str) -> np.ndarray:
    """All generalized eigenvalues of a pencil, via LAPACK. Small meshes only."""
    if mesh.n_vertices > 2000:
        raise ValueError("dense eigen-solve limited to 2000 vertices")
    if which == "trace":
        ops = operators(mesh)
        K, G = ops.boundary_mass, ops.h1
    else:
        K, G = _pencil(mesh, which)
    return sla.eigh(K.toarray(), G.toarray(), eigvals_only=True)


def contraction_constants(lambda_h, lambda1_h, gamma_norm_h, M1, M2, alpha=None) -> ConstantsReport:
    """Lipschitz bounds of the two fixed-point maps.

    ``C0 = sqrt(2)/lambda^2 * sqrt(1/M1^2 + |gamma|^2/M2^2) * (1 + |gamma|)`` and
    the same with ``lambda_alpha = lambda1 * min(1, alpha)`` for the Robin map.
    """
    factor = math.sqrt(2.0) * math.sqrt(1.0 / M1 ** 2 + gamma_norm_h ** 2 / M2 ** 2) * (1.0 + gamma_norm_h)
    lam_a = None if alpha is None else lambda1_h * min(1.0, alpha)
    return ConstantsReport(
        lambda_h=lambda_h, lambda1_h=lambda1_h, gamma_norm_h=gamma_norm_h, M1=M1, M2=M2,
        alpha=alpha, lambda_alpha_h=lam_a,
        C0=factor / lambda_h ** 2,
        C0alpha=None if lam_a is None else factor / lam_a ** 2,
        m=min(M1, M2), M=max(M1, M2))


def estimate_constants(mesh: Mesh, M1: float, M2: float, alpha: float | None = None) -> ConstantsReport:
    return contraction_constants(estimate_lambda(mesh, "V0h"), estimate_lambda(mesh, "Vh_a1"),
                                 estimate_trace_norm(mesh), M1, M2, alpha)


def contraction_factor(mesh: Mesh, spec, tol: float = 1e-10, max_iter: int = 2000, seed: int = 0) -> float:
    """Spectral radius of the linear part of the fixed-point map, by power iteration.

    The linear part is ``-D^{-1} S*S`` with ``D = diag(M1, M2)``, self-adjoint in
    the ``D``-weighted product, so the weighted Rayleigh quotient converges to
    the radius. For ``M1 == M2`` this is the H x Q operator norm.
    """
    from .control import hessian_apply

    rng = np.random.default_rng(seed)
    x = ControlPair(FeFunction(mesh, rng.standard_normal(mesh.n_vertices)),
                    BoundaryTrace(mesh, rng.standard_normal(len(mesh.gamma2_nodes))))

    def weighted(a, b):
        return spec.M1 * (a.g.values @ (operators(mesh).mass @ b.g.values)) + \
            spec.M2 * (a.q.values @ (operators(mesh).q_mass @ b.q.values))

    def apply(c):
        # S*S c = Hc - D c, and the linear part of W is -D^{-1} S*S
        hc = hessian_apply(mesh, spec, c)
        return ControlPair((hc.g - spec.M1 * c.g) * (-1.0 / spec.M1),
                           (hc.q - spec.M2 * c.q) * (-1.0 / spec.M2))

    x = x * (1.0 / math.sqrt(weighted(x, x)))
    rho = 0.0
    for _ in range(max_iter):
        y = apply(x)
        new = abs(weighted(y, x))
        ny = math.sqrt(weighted(y, y))
        if ny == 0.0:
            return 0.0
        x = y * (1.0 / ny)
        if abs(new - rho) <= tol * new:
            return new
        rho = new
    raise SolverError("power iteration for the contraction factor did not converge")


# ---------------------------------------------------------------------------
# rate fits


def fit_rate(points) -> RateFit:
    """Least-squares line through ``(log h, log error)``; the slope is the observed order."""
    pts = tuple((float(h), float(e)) for h, e in points)
    if len(pts) < 2:
        raise ValueError("a rate fit needs at least two points")
    arr = np.array(pts)
    if np.any(arr <= 0):
        raise ValueError("rate fit needs positive h and error values")
    x, y = np.log(arr[:, 0]), np.log(arr[:, 1])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - float((resid ** 2).sum()) / ss_tot)
    return RateFit(float(slope), float(intercept), min(r2, 1.0), pts)


# ---------------------------------------------------------------------------
# uniform bounds


def _gamma1_defect(mesh, values, shift):
    """``int_Gamma1 (v - shift)^2``."""
    w = values - shift
    return float(w @ (operators(mesh).gamma1_mass @ w))


def audit_uniform_bounds(mesh: Mesh, spec, alpha_list=(10.0,), optimizer=None,
                         lambdas=None) -> BoundAudit:
    """Check the twelve a-priori bounds on states, controls and adjoints.

    Left-hand sides are measured by solving the problems; right-hand sides are
    rebuilt from their closed formulas with the discrete ``lambda``,
    ``lambda_1`` and trace norm. ``lambdas`` may pass precomputed
    ``(lambda_h, lambda1_h, gamma_norm_h)``. ``optimizer(mesh, spec)`` defaults
    to the reduced-Hessian solve.
    """
    from .control import solve_optimal_kkt
    from .solvers import solve_state

    if optimizer is None:
        optimizer = solve_optimal_kkt
    if lambdas is None:
        lambdas = (estimate_lambda(mesh, "V0h"), estimate_lambda(mesh, "Vh_a1"),
                   estimate_trace_norm(mesh))
    lam, lam1, gam = lambdas
    b, M1, M2 = spec.b, spec.M1, spec.M2
    zd = norm(spec.z_d, "H")
    area = mesh.area
    m = min(M1, M2)
    root2g = math.sqrt(2.0) * (1.0 + gam)

    c1 = b * math.sqrt(area)
    c2 = (1.0 + 1.0 / lam1) * c1
    c3 = c1 ** 2 / lam1
    c4 = (c2 + zd) / math.sqrt(m)
    c5 = c2 + 2.0 * zd
    c6 = (c1 + zd) / math.sqrt(m)
    c7 = root2g * c6 + c1
    c8 = root2g * c4 + (1.0 + 1.0 / lam1) * c7
    c9 = (root2g * c4 + c7) ** 2 / lam1
    c10 = (c7 + zd) / lam
    c11 = (c8 + zd) / lam1 + (1.0 + 1.0 / lam1) * c10
    c12 = (c5 + zd + c10) ** 2 / lam1

    dspec = spec.with_alpha(None)
    zero = ControlPair.zero(mesh)
    u00 = solve_state(mesh, dspec, zero)
    opt = optimizer(mesh, dspec)

    audit = BoundAudit()
    inf = math.inf

    def add(name, alpha, measured, bound, equality=False):
        if equality:
            ok = abs(measured - bound) <= 1e-12 * bound
        else:
            ok = measured <= bound
        audit.records.append(BoundRecord(name, alpha, float(measured), float(bound), bool(ok)))

    add("c1", inf, norm(u00, "V"), c1, equality=True)
    add("c6", inf, control_norm(opt.control), c6)
    add("c7", inf, norm(opt.state, "V"), c7)
    add("c10", inf, norm(opt.adjoint, "V"), c10)

    for alpha in alpha_list:
        if alpha < 1:
            raise ValueError("the uniform bounds are stated for alpha >= 1")
        rspec = spec.with_alpha(float(alpha))
        ua00 = solve_state(mesh, rspec, zero)
        ropt = optimizer(mesh, rspec)
        add("c2", alpha, norm(ua00, "V"), c2)
        add("c3", alpha, (alpha - 1.0) * _gamma1_defect(mesh, ua00.values, b), c3)
        add("c4", alpha, control_norm(ropt.control), c4)
        add("c5", alpha, norm(ropt.state, "H"), c5)
        add("c8", alpha, norm(ropt.state, "V"), c8)
        add("c9", alpha, (alpha - 1.0) * _gamma1_defect(mesh, ropt.state.values, b), c9)
        add("c11", alpha, norm(ropt.adjoint, "V"), c11)
        # the adjoint defect is measured against b, as the bound is stated
        add("c12", alpha, (alpha - 1.0) * _gamma1_defect(mesh, ropt.adjoint.values, b), c12)
    order = {f"c{i}": i for i in range(1, 13)}
    audit.records.sort(key=lambda r: (order[r.name], r.alpha))
    return audit
