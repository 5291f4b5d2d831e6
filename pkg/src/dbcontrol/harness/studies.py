"""Convergence studies in h, in alpha, along the diagonal, and cost gaps.

"Continuous" optima are stood in for by discrete optima on the reference
mesh of ``cfg.n_ref`` cells per side. Coarse functions are carried to that
mesh by nodal interpolation, which is exact because the meshes are nested.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..analysis import RateFit, contraction_factor, fit_rate
from ..control import (ContractionWarning, Optimum, OptimizationError, optimal_relaxation,
                       solve_optimal_fixed_point, solve_optimal_kkt, KKT_MAX_UNKNOWNS)
from ..fem import (ControlPair, FeFunction, control_norm, interpolate, norm, operators,
                   prolongation, transfer)
from ..mesh import Mesh, build_unit_square_mesh
from ..solvers import ProblemSpec, SolverError, solve_adjoint, solve_state
from .config import FIELDS, StudyConfig

log = logging.getLogger(__name__)

NUMERICAL_ERRORS = (SolverError, OptimizationError, FloatingPointError, np.linalg.LinAlgError)


@dataclass
class StudyRecord:
    """One (h, alpha) case. ``alpha=None`` is the Dirichlet problem."""

    h: float
    alpha: float | None
    err_control: float = math.nan
    err_state: float = math.nan
    err_adjoint: float = math.nan
    J: float = math.nan
    iters: int = -1
    extra: dict = field(default_factory=dict)
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def sort_key(self):
        return (self.h, math.inf if self.alpha is None else self.alpha)


# ---------------------------------------------------------------------------
# problem setup, shared across studies

_MESHES: dict = {}
_RHO: dict = {}
_REFS: dict = {}


def clear_caches():
    _MESHES.clear()
    _RHO.clear()
    _REFS.clear()


def mesh_for(cfg: StudyConfig, n: int) -> Mesh:
    key = (n, tuple(cfg.gamma1))
    if key not in _MESHES:
        _MESHES[key] = build_unit_square_mesh(n, gamma1_sides=cfg.gamma1)
    return _MESHES[key]


def target_for(cfg: StudyConfig, mesh: Mesh) -> FeFunction:
    """The desired state ``z_d`` on ``mesh``."""
    if cfg.zd_kind == "constant":
        return interpolate(mesh, cfg.zd_value)
    if cfg.zd_kind == "field":
        return interpolate(mesh, FIELDS[cfg.zd_field])
    # state of the zero controls (the Dirichlet one; the Robin one coincides)
    dummy = ProblemSpec(cfg.b, interpolate(mesh, 0.0), cfg.M1, cfg.M2)
    u00 = solve_state(mesh, dummy, ControlPair.zero(mesh))
    return FeFunction(mesh, u00.values)


def problem_for(cfg: StudyConfig, mesh: Mesh, alpha=None) -> ProblemSpec:
    return ProblemSpec(cfg.b, target_for(cfg, mesh), cfg.M1, cfg.M2, alpha)


def _problem_key(cfg):
    return (tuple(cfg.gamma1), cfg.b, cfg.M1, cfg.M2, cfg.zd_kind, cfg.zd_value, cfg.zd_field)


def relaxation_for(cfg: StudyConfig, alpha) -> float:
    """Relaxation weight from the contraction factor measured on an 8x8 mesh.

    The factor is essentially mesh independent, so one small measurement
    serves every level.
    """
    key = (_problem_key(cfg), alpha)
    if key not in _RHO:
        mesh = mesh_for(cfg, 8)
        _RHO[key] = contraction_factor(mesh, problem_for(cfg, mesh, alpha), tol=1e-8)
    return optimal_relaxation(_RHO[key])


def optimum_for(cfg: StudyConfig, mesh: Mesh, alpha=None, initial=None) -> Optimum:
    spec = problem_for(cfg, mesh, alpha)
    size = mesh.n_vertices + len(mesh.gamma2_nodes)
    if cfg.method == "kkt" and size <= KKT_MAX_UNKNOWNS:
        return solve_optimal_kkt(mesh, spec)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ContractionWarning)
        return solve_optimal_fixed_point(mesh, spec, tol=cfg.tol, max_iter=5000,
                                         relaxation=relaxation_for(cfg, alpha),
                                         initial=initial, constants=None)


@dataclass(eq=False)
class Reference:
    mesh: Mesh
    spec: ProblemSpec
    optimum: Optimum


def reference(cfg: StudyConfig, alpha=None) -> Reference:
    """Fine-mesh surrogate optimum, cached per problem, level and alpha.

    Started from the optimum one level coarser (n_ref/4), which makes the
    fixed-point iteration on the fine mesh short.
    """
    key = (_problem_key(cfg), cfg.method, cfg.tol, cfg.n_ref, alpha)
    if key not in _REFS:
        fine = mesh_for(cfg, cfg.n_ref)
        start = None
        if cfg.n_ref % 4 == 0 and cfg.n_ref >= 16:
            pre = optimum_for(cfg, mesh_for(cfg, cfg.n_ref // 4), alpha)
            start = transfer(pre.control, fine)
        log.info("reference optimum n=%d alpha=%s", cfg.n_ref, alpha)
        opt = optimum_for(cfg, fine, alpha, initial=start)
        _REFS[key] = Reference(fine, problem_for(cfg, fine, alpha), opt)
    return _REFS[key]


def distances(opt: Optimum, ref: Optimum):
    """Errors of ``opt`` against ``ref`` after moving ``opt`` to ``ref``'s mesh."""
    fine = ref.state.mesh
    if opt.state.mesh is not fine:
        ctrl, u, p = (transfer(opt.control, fine), transfer(opt.state, fine),
                      transfer(opt.adjoint, fine))
    else:
        ctrl, u, p = opt.control, opt.state, opt.adjoint
    return (control_norm(ctrl - ref.control), norm(u - ref.state, "V"),
            norm(p - ref.adjoint, "V"))


def _failed(h, alpha, exc) -> StudyRecord:
    log.warning("case h=%g alpha=%s failed: %s", h, alpha, exc)
    return StudyRecord(h, alpha, status=f"error: {exc}")


def _variants(cfg):
    return [None] + [float(a) for a in cfg.alphas]


def fit_column(records, column, min_r2=0.98):
    """Rate fit of one error column against h; ``(fit, warning or None)``."""
    pts = [(r.h, getattr(r, column) if hasattr(r, column) else r.extra[column])
           for r in records if r.ok]
    pts = [(h, e) for h, e in pts if e > 0 and math.isfinite(e)]
    if len(pts) < 2:
        return None, "too few positive points for a rate fit"
    fit = fit_rate(pts)
    note = None if fit.r_squared >= min_r2 else f"r^2={fit.r_squared:.4f} below {min_r2}"
    return fit, note


# ---------------------------------------------------------------------------
# studies


def study_h(cfg: StudyConfig):
    """Errors of the discrete optima against the surrogate, level by level.

    Returns ``(records, fits)`` with ``fits[(alpha, column)] = (RateFit, note)``.
    """
    records = []
    for alpha in _variants(cfg):
        ref = reference(cfg, alpha).optimum
        for n in cfg.levels:
            mesh = mesh_for(cfg, n)
            try:
                opt = optimum_for(cfg, mesh, alpha)
                ec, es, ea = distances(opt, ref)
                records.append(StudyRecord(mesh.h, alpha, ec, es, ea, opt.cost, opt.iterations,
                                           extra={"n": n}))
            except NUMERICAL_ERRORS as exc:
                records.append(_failed(mesh.h, alpha, exc))
    records.sort(key=StudyRecord.sort_key)
    fits = {}
    for alpha in _variants(cfg):
        rows = [r for r in records if r.alpha == alpha]
        for col in ("err_control", "err_state", "err_adjoint"):
            fits[(alpha, col)] = fit_column(rows, col)
    return records, fits


def study_alpha(cfg: StudyConfig):
    """Distance of the Robin optimum to the Dirichlet optimum on one mesh, per alpha.

    ``extra`` also holds the distances for a fixed control (the Dirichlet
    optimum): ``fixed_state`` and ``fixed_adjoint`` in the V norm.
    """
    mesh = mesh_for(cfg, cfg.alpha_level)
    dir_opt = optimum_for(cfg, mesh, None)
    fixed = dir_opt.control
    records = []
    for alpha in cfg.alpha_sweep:
        try:
            opt = optimum_for(cfg, mesh, alpha)
            ec, es, ea = distances(opt, dir_opt)
            rspec = problem_for(cfg, mesh, alpha)
            u = solve_state(mesh, rspec, fixed)
            p = solve_adjoint(mesh, rspec, u)
            extra = {"fixed_state": norm(u - dir_opt.state, "V"),
                     "fixed_adjoint": norm(p - dir_opt.adjoint, "V")}
            records.append(StudyRecord(mesh.h, alpha, ec, es, ea, opt.cost, opt.iterations,
                                       extra=extra))
        except NUMERICAL_ERRORS as exc:
            records.append(_failed(mesh.h, alpha, exc))
    records.sort(key=StudyRecord.sort_key)
    return records


def diagonal_pairs(cfg: StudyConfig):
    """``(n_k, alpha_k) = (8 * 2^k, 10^(k+1))``."""
    return [(8 * 2 ** k, 10.0 ** (k + 1)) for k in range(cfg.diagonal_steps)]


def study_diagonal(cfg: StudyConfig):
    """Robin optima along the diagonal against the Dirichlet surrogate."""
    pairs = diagonal_pairs(cfg)
    if cfg.n_ref < 4 * pairs[-1][0]:
        raise ValueError(f"reference.n={cfg.n_ref} too coarse for diagonal level {pairs[-1][0]}")
    ref = reference(cfg, None).optimum
    records = []
    for k, (n, alpha) in enumerate(pairs):
        mesh = mesh_for(cfg, n)
        try:
            opt = optimum_for(cfg, mesh, alpha)
            ec, es, ea = distances(opt, ref)
            records.append(StudyRecord(mesh.h, alpha, ec, es, ea, opt.cost, opt.iterations,
                                       extra={"k": k, "n": n}))
        except NUMERICAL_ERRORS as exc:
            rec = _failed(mesh.h, alpha, exc)
            rec.extra = {"k": k, "n": n}
            records.append(rec)
    records.sort(key=StudyRecord.sort_key)
    return records


def coarse_cost_of(mesh: Mesh, spec: ProblemSpec, ctrl: ControlPair) -> float:
    """Coarse cost functional evaluated at a control living on a finer nested mesh.

    The coarse state sees the fine control only through its load against
    the coarse basis, ``P^T`` times the fine load, which is exact for nested
    meshes; the control norms are taken on the fine mesh.
    """
    fine = ctrl.mesh
    fops = operators(fine)
    P = prolongation(mesh, fine)
    load = P.T @ (fops.mass @ ctrl.g.values - fops.q_coupling @ ctrl.q.values)
    u = solve_state(mesh, spec, None, load=load)
    return 0.5 * (norm(u - spec.z_d, "H") ** 2 + spec.M1 * norm(ctrl.g, "H") ** 2
                  + spec.M2 * norm(ctrl.q, "Q") ** 2)


def fine_cost_of(ref: Reference, ctrl: ControlPair) -> float:
    """Reference-mesh cost functional at a coarse control."""
    spec = ref.spec
    c = transfer(ctrl, ref.mesh)
    u = solve_state(ref.mesh, spec, c, x0=ref.optimum.state.values)
    return 0.5 * (norm(u - spec.z_d, "H") ** 2 + spec.M1 * norm(c.g, "H") ** 2
                  + spec.M2 * norm(c.q, "Q") ** 2)


GAP_COLUMNS = ("J_ref", "J_coarse", "J_fine_at_coarse", "J_coarse_at_ref",
               "gap_fine", "gap_coarse", "gap_cross")


def study_cost_gaps(cfg: StudyConfig):
    """Cost gaps between the discrete and the reference optima, per level and variant.

    ``gap_fine   = J(c_h) - J(c)``     (nonnegative, order h^2)
    ``gap_coarse = J_h(c) - J_h(c_h)`` (nonnegative)
    ``gap_cross  = J(c) - J_h(c_h)``   (bounded by order h)

    where ``J`` is the reference-mesh cost, ``c`` the reference optimum, and
    ``J_h``, ``c_h`` the coarse cost and optimum. Returns ``(records, fits)``.
    """
    records = []
    for alpha in _variants(cfg):
        ref = reference(cfg, alpha)
        for n in cfg.levels:
            mesh = mesh_for(cfg, n)
            try:
                opt = optimum_for(cfg, mesh, alpha)
                spec = problem_for(cfg, mesh, alpha)
                J_ref = ref.optimum.cost
                J_fc = fine_cost_of(ref, opt.control)
                J_cr = coarse_cost_of(mesh, spec, ref.optimum.control)
                extra = {"J_ref": J_ref, "J_coarse": opt.cost, "J_fine_at_coarse": J_fc,
                         "J_coarse_at_ref": J_cr, "gap_fine": J_fc - J_ref,
                         "gap_coarse": J_cr - opt.cost, "gap_cross": J_ref - opt.cost, "n": n}
                ec, es, ea = distances(opt, ref.optimum)
                records.append(StudyRecord(mesh.h, alpha, ec, es, ea, opt.cost, opt.iterations,
                                           extra=extra))
            except NUMERICAL_ERRORS as exc:
                records.append(_failed(mesh.h, alpha, exc))
    records.sort(key=StudyRecord.sort_key)
    fits = {}
    for alpha in _variants(cfg):
        rows = [r for r in records if r.alpha == alpha]
        for col in ("gap_fine", "gap_coarse", "gap_cross"):
            fits[(alpha, col)] = fit_column(rows, col)
    return records, fits


def sign_violations(records, tol=1e-12):
    """Rows where a two-sided gap is below ``-tol``."""
    return [(r.h, r.alpha, col, r.extra[col]) for r in records if r.ok
            for col in ("gap_fine", "gap_coarse") if r.extra[col] < -tol]


__all__ = ["StudyRecord", "Reference", "study_h", "study_alpha", "study_diagonal",
           "study_cost_gaps", "reference", "optimum_for", "mesh_for", "problem_for",
           "target_for", "diagonal_pairs", "sign_violations", "fit_column", "RateFit",
           "clear_caches", "coarse_cost_of", "fine_cost_of", "distances"]
