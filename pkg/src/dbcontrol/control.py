"""Discrete optimal control: cost, gradient, fixed-point map and two optimizers.

The optimum is characterised as the fixed point of

    W(g, q) = (-p / M1, p|Gamma2 / M2)

where ``p`` is the adjoint state of the control ``(g, q)``. The
:func:`solve_optimal_kkt` oracle solves the same optimality system with
conjugate gradients on the reduced Hessian instead.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .fem import BoundaryTrace, ControlPair, FeFunction, control_inner, control_norm, norm, operators
from .solvers import control_load, solve_adjoint, solve_state, spd_solve

__all__ = [
    "ControlPair", "Optimum", "OptimizationError", "ContractionWarning", "cost", "gradient",
    "fixed_point_map", "solve_optimal_fixed_point", "solve_optimal_kkt", "hessian_apply",
]

KKT_MAX_UNKNOWNS = 20000
KKT_RESTARTS = 4


class OptimizationError(RuntimeError):
    """The optimizer stopped without meeting its tolerance."""

    def __init__(self, message, last=None, ratio=None):
        super().__init__(message)
        self.last = last
        self.ratio = ratio


class ContractionWarning(UserWarning):
    """The contraction bound of the fixed-point map is not below one."""


@dataclass(eq=False)
class Optimum:
    control: ControlPair
    state: FeFunction
    adjoint: FeFunction
    cost: float
    iterations: int
    final_increment: float
    gradient_residual: float
    ratios: list = field(default_factory=list)
    warning: str | None = None
    residuals: dict = field(default_factory=dict)


def _resolve(spec, variant):
    if variant is None:
        return spec.variant
    variant = variant.lower()
    if variant not in ("dirichlet", "robin"):
        raise ValueError(f"variant must be 'dirichlet' or 'robin', got {variant!r}")
    if variant != spec.variant:
        raise ValueError(f"variant {variant!r} does not match spec (alpha={spec.alpha})")
    return variant


def _cost_from(spec, ctrl, u):
    return 0.5 * (norm(u - spec.z_d, "H") ** 2
                  + spec.M1 * norm(ctrl.g, "H") ** 2
                  + spec.M2 * norm(ctrl.q, "Q") ** 2)


def state_and_adjoint(mesh, spec, ctrl, x0=None):
    """Solve the state and then the adjoint for ``ctrl``; ``x0`` is an optional warm start pair."""
    u0, p0 = (None, None) if x0 is None else x0
    u = solve_state(mesh, spec, ctrl, x0=u0)
    p = solve_adjoint(mesh, spec, u, x0=p0)
    return u, p


def cost(mesh, spec, ctrl, variant=None) -> float:
    """``1/2 |u - z_d|_H^2 + M1/2 |g|_H^2 + M2/2 |q|_Q^2`` at the solved state."""
    _resolve(spec, variant)
    return _cost_from(spec, ctrl, solve_state(mesh, spec, ctrl))


def _gradient_from(spec, ctrl, p):
    return ControlPair(p + spec.M1 * ctrl.g, spec.M2 * ctrl.q - p.trace())


def gradient(mesh, spec, ctrl, variant=None) -> ControlPair:
    """Riesz representative ``(p + M1 g, M2 q - p|Gamma2)`` of the cost derivative in H x Q."""
    _resolve(spec, variant)
    _, p = state_and_adjoint(mesh, spec, ctrl)
    return _gradient_from(spec, ctrl, p)


def _map_from(spec, p):
    space = "V0h" if spec.alpha is None else "Vh"
    return ControlPair(FeFunction(p.mesh, -p.values / spec.M1, space=space),
                       BoundaryTrace(p.mesh, p.values[p.mesh.gamma2_nodes] / spec.M2))


def fixed_point_map(mesh, spec, ctrl, variant=None) -> ControlPair:
    """``W(g, q) = (-p / M1, p|Gamma2 / M2)``."""
    _resolve(spec, variant)
    _, p = state_and_adjoint(mesh, spec, ctrl)
    return _map_from(spec, p)


def _contraction_note(mesh, spec, constants):
    if constants is None:
        return None
    if isinstance(constants, str):
        if constants != "auto":
            raise ValueError(f"constants must be a ConstantsReport, None or 'auto', got {constants!r}")
        from .analysis import estimate_constants
        constants = estimate_constants(mesh, spec.M1, spec.M2, spec.alpha)
    c0 = constants.C0 if spec.alpha is None else constants.C0alpha
    if c0 >= 1.0:
        return (f"contraction bound C0={c0:.4g} >= 1: convergence of the fixed-point "
                "iteration is not guaranteed by the bound")
    return None


def _finish(mesh, spec, ctrl, iterations, increment, ratios, note, x0, grad_tol):
    u, p = state_and_adjoint(mesh, spec, ctrl, x0=x0)
    grad = control_norm(_gradient_from(spec, ctrl, p))
    opt = Optimum(control=ctrl, state=u, adjoint=p, cost=_cost_from(spec, ctrl, u),
                  iterations=iterations, final_increment=increment, gradient_residual=grad,
                  ratios=ratios, warning=note)
    if grad > grad_tol * (1.0 + control_norm(ctrl)):
        raise OptimizationError(
            f"gradient residual {grad:.3e} above tolerance after {iterations} iterations",
            last=opt, ratio=ratios[-1] if ratios else None)
    return opt


def solve_optimal_fixed_point(mesh, spec, variant=None, tol=1e-10, max_iter=500,
                              relaxation=1.0, initial=None, constants="auto",
                              grad_tol=1e-8) -> Optimum:
    """Banach iteration ``c <- (1 - w) c + w W(c)`` from ``initial`` (zero by default).

    Stops once the H x Q increment drops to ``tol``. ``relaxation`` w = 1 is the
    plain fixed-point iteration. ``constants`` is a ConstantsReport, ``"auto"``
    to estimate one, or None to skip the contraction-bound check; when the bound
    is not below one the optimum carries a warning and the iteration still runs.
    """
    _resolve(spec, variant)
    if not 0.0 < relaxation <= 1.0:
        raise ValueError("relaxation must lie in (0, 1]")
    note = _contraction_note(mesh, spec, constants)
    if note:
        warnings.warn(note, ContractionWarning, stacklevel=2)

    ctrl = ControlPair.zero(mesh) if initial is None else initial
    warm = None
    ratios = []
    prev = None
    increment = np.inf
    for it in range(1, max_iter + 1):
        u, p = state_and_adjoint(mesh, spec, ctrl, x0=warm)
        warm = (u.values, p.values)
        target = _map_from(spec, p)
        new = target if relaxation == 1.0 else (1.0 - relaxation) * ctrl + relaxation * target
        increment = control_norm(new - ctrl)
        if not np.isfinite(increment):
            raise OptimizationError("fixed-point iteration diverged", last=ctrl,
                                    ratio=ratios[-1] if ratios else None)
        if prev:
            ratios.append(increment / prev)
        prev = increment
        ctrl = new
        if increment <= tol:
            return _finish(mesh, spec, ctrl, it, increment, ratios, note, warm, grad_tol)
    raise OptimizationError(
        f"no convergence in {max_iter} iterations (last increment {increment:.3e})",
        last=ctrl, ratio=ratios[-1] if ratios else None)


def _linear_solve(mesh, alpha, load, tol):
    ops = operators(mesh)
    out = np.zeros(mesh.n_vertices)
    if alpha is None:
        free = mesh.free_nodes
        out[free], _ = spd_solve(ops.dirichlet_block, load[free], tol=tol)
    else:
        out[:], _ = spd_solve(ops.robin(alpha), load, tol=tol)
    return out


def hessian_apply(mesh, spec, ctrl, tol=1e-12) -> ControlPair:
    """Reduced Hessian of the cost applied to ``ctrl`` (the linear part of the gradient)."""
    ops = operators(mesh)
    u = _linear_solve(mesh, spec.alpha, control_load(mesh, ctrl), tol)
    p = FeFunction(mesh, _linear_solve(mesh, spec.alpha, ops.mass @ u, tol))
    return _gradient_from(spec, ctrl, p)


def _reduced_cg(mesh, spec, rhs, tol, maxiter):
    """CG for ``H x = rhs`` in the H x Q inner product, from zero."""
    x = ControlPair.zero(mesh)
    bnorm = control_norm(rhs)
    r = rhs
    d = r
    rr = control_inner(r, r)
    for it in range(1, maxiter + 1):
        Hd = hessian_apply(mesh, spec, d)
        step = rr / control_inner(d, Hd)
        x = x + step * d
        r = r - step * Hd
        rr_new = control_inner(r, r)
        if np.sqrt(rr_new) <= tol * bnorm:
            return x, it
        d = r + (rr_new / rr) * d
        rr = rr_new
    raise OptimizationError("reduced-Hessian CG did not converge", last=x)


def solve_optimal_kkt(mesh, spec, variant=None, tol=1e-12, max_unknowns=KKT_MAX_UNKNOWNS,
                      grad_tol=1e-10) -> Optimum:
    """Direct solve of the optimality system by CG on the reduced Hessian.

    The Hessian is symmetric positive definite in the H x Q inner product, so
    plain conjugate gradients in that inner product apply.
    """
    _resolve(spec, variant)
    size = mesh.n_vertices + len(mesh.gamma2_nodes)
    if size > max_unknowns:
        raise ValueError(f"KKT oracle limited to {max_unknowns} unknowns, problem has {size}")

    x = ControlPair.zero(mesh)
    iters = 0
    # CG on the recursive residual, restarted from the true gradient: on
    # ill-conditioned Robin problems one pass can stall above the tolerance
    for _ in range(KKT_RESTARTS):
        r = -gradient(mesh, spec, x)
        rnorm = control_norm(r)
        if rnorm <= grad_tol * (1.0 + control_norm(x)):
            break
        dx, k = _reduced_cg(mesh, spec, r, tol, 2 * size)
        x = x + dx
        iters += k

    opt = _finish(mesh, spec, x, iters, 0.0, [], None, None, grad_tol)
    u, p = opt.state, opt.adjoint
    scale = 1.0 + control_norm(x)
    opt.residuals = {
        "state": _state_residual(mesh, spec, x, u),
        "adjoint": _adjoint_residual(mesh, spec, u, p),
        "distributed": norm(p + spec.M1 * x.g, "H") / scale,
        "boundary": norm(spec.M2 * x.q - p.trace(), "Q") / scale,
    }
    return opt


def _state_residual(mesh, spec, ctrl, u):
    ops = operators(mesh)
    load = control_load(mesh, ctrl)
    if spec.alpha is None:
        free = mesh.free_nodes
        res = (ops.stiffness @ u.values - load)[free]
        ref = load[free]
    else:
        load = load + spec.alpha * spec.b * (ops.gamma1_mass @ np.ones(mesh.n_vertices))
        res = ops.robin(spec.alpha) @ u.values - load
        ref = load
    return float(np.linalg.norm(res) / max(np.linalg.norm(ref), 1e-300))


def _adjoint_residual(mesh, spec, u, p):
    ops = operators(mesh)
    load = ops.mass @ (u.values - spec.z_d.values)
    if spec.alpha is None:
        free = mesh.free_nodes
        res = (ops.stiffness @ p.values - load)[free]
        ref = load[free]
    else:
        res = ops.robin(spec.alpha) @ p.values - load
        ref = load
    nref = np.linalg.norm(ref)
    return float(np.linalg.norm(res) / nref) if nref > 0 else float(np.linalg.norm(res))


def optimal_relaxation(rho: float) -> float:
    """Relaxation weight minimising the contraction of ``(1 - w) I + w W``.

    The linear part of ``W`` has its spectrum in ``[-rho, 0]``, so the relaxed
    map contracts by ``rho / (2 + rho)`` with ``w = 2 / (2 + rho)``.
    """
    if not rho >= 0:
        raise ValueError(f"rho must be nonnegative, got {rho}")
    return 2.0 / (2.0 + rho)


def optimize(mesh, spec, method="fixed_point", relaxation=1.0, **kw) -> Optimum:
    """Solve the discrete control problem with the chosen method.

    ``relaxation="auto"`` measures the contraction factor of the fixed-point
    map on ``mesh`` and uses :func:`optimal_relaxation`. A number ``rho`` may
    be passed instead via ``relaxation=("rho", value)`` to skip the measurement.
    """
    if method == "kkt":
        return solve_optimal_kkt(mesh, spec, **kw)
    if method != "fixed_point":
        raise ValueError(f"unknown method {method!r}")
    if relaxation == "auto":
        from .analysis import contraction_factor
        relaxation = optimal_relaxation(contraction_factor(mesh, spec))
    elif isinstance(relaxation, tuple):
        relaxation = optimal_relaxation(relaxation[1])
    return solve_optimal_fixed_point(mesh, spec, relaxation=relaxation, **kw)
