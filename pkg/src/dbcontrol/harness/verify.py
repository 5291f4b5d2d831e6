"""Quick property suite behind ``dbcontrol verify``.

Every check runs on small meshes and returns ``(name, passed, detail)``.
"""
from __future__ import annotations

import warnings

import numpy as np

from ..analysis import (audit_uniform_bounds, contraction_constants, contraction_factor,
                        dense_eigenvalues, estimate_lambda, estimate_trace_norm, fit_rate)
from ..control import (ContractionWarning, cost, gradient, optimal_relaxation,
                       solve_optimal_fixed_point, solve_optimal_kkt)
from ..fem import (BoundaryTrace, ControlPair, FeFunction, control_inner, control_norm,
                   edge_mass_element, inner, interpolate, mass_element, operators,
                   stiffness_element)
from ..mesh import build_unit_square_mesh
from ..solvers import ProblemSpec, solve_adjoint, solve_state


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def _random_control(mesh, rng):
    return ControlPair(FeFunction(mesh, rng.standard_normal(mesh.n_vertices)),
                       BoundaryTrace(mesh, rng.standard_normal(len(mesh.gamma2_nodes))))


def _setup(n=8, alpha=None):
    mesh = build_unit_square_mesh(n)
    return mesh, ProblemSpec(1.0, interpolate(mesh, lambda x, y: x * y), 1.0, 1.0, alpha)


def check_elements():
    tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    K = stiffness_element(tri)
    M = mass_element(tri)
    B = edge_mass_element(0.5)
    errs = [np.abs(K - 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]])).max(),
            np.abs(M - (0.5 / 12) * np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]])).max(),
            np.abs(B - (0.5 / 6) * np.array([[2, 1], [1, 2]])).max()]
    return max(errs) <= 1e-14, f"max deviation {max(errs):.2e}"


def check_assembly():
    mesh = build_unit_square_mesh(8)
    ops = operators(mesh)
    one = np.ones(mesh.n_vertices)
    sym = max(abs(m - m.T).max() for m in (ops.stiffness, ops.mass, ops.boundary_mass))
    dev = max(np.abs(ops.stiffness @ one).max(), abs(one @ ops.mass @ one - 1.0),
              abs(one @ ops.boundary_mass @ one - 4.0))
    return sym == 0 and dev <= 1e-13, f"asymmetry {sym:.1e}, sum deviation {dev:.1e}"


def check_duality():
    worst = 0.0
    rng = np.random.default_rng(1)
    for alpha in (None, 10.0):
        mesh, spec = _setup(alpha=alpha)
        ops = operators(mesh)
        form = ops.stiffness if alpha is None else ops.robin(alpha)
        zero = ControlPair.zero(mesh)
        c, d = _random_control(mesh, rng), _random_control(mesh, rng)
        p = solve_adjoint(mesh, spec, solve_state(mesh, spec, c))
        du = solve_state(mesh, spec, d).values - solve_state(mesh, spec, zero).values
        lhs = p.values @ (form @ du)
        rhs = inner(d.g, p, "H") - inner(d.q, p.trace(), "Q")
        worst = max(worst, _rel(lhs, rhs))
    return worst <= 1e-10, f"relative gap {worst:.1e}"


def check_monotonicity():
    worst = 0.0
    rng = np.random.default_rng(2)
    for alpha in (None, 10.0):
        mesh, spec = _setup(alpha=alpha)
        c1, c2 = _random_control(mesh, rng), _random_control(mesh, rng)
        u1, u2 = solve_state(mesh, spec, c1), solve_state(mesh, spec, c2)
        p1, p2 = solve_adjoint(mesh, spec, u1), solve_adjoint(mesh, spec, u2)
        dp = p2 - p1
        lhs = inner(dp, c2.g - c1.g, "H") - inner(dp.trace(), c2.q - c1.q, "Q")
        worst = max(worst, _rel(lhs, inner(u2 - u1, u2 - u1, "H")))
    return worst <= 1e-10, f"relative gap {worst:.1e}"


def check_convexity():
    worst = 0.0
    rng = np.random.default_rng(3)
    t = 0.37
    for alpha in (None, 10.0):
        mesh, spec = _setup(alpha=alpha)
        c1, c2 = _random_control(mesh, rng), _random_control(mesh, rng)
        lhs = (1 - t) * cost(mesh, spec, c2) + t * cost(mesh, spec, c1) \
            - cost(mesh, spec, (1 - t) * c2 + t * c1)
        du = solve_state(mesh, spec, c2) - solve_state(mesh, spec, c1)
        dc = c2 - c1
        rhs = t * (1 - t) / 2 * (inner(du, du, "H") + spec.M1 * inner(dc.g, dc.g, "H")
                                 + spec.M2 * inner(dc.q, dc.q, "Q"))
        worst = max(worst, _rel(lhs, rhs))
    return worst <= 1e-10, f"relative gap {worst:.1e}"


def check_gradient():
    rng = np.random.default_rng(4)
    mesh, spec = _setup()
    c = _random_control(mesh, rng)
    grad = gradient(mesh, spec, c)
    eps = 1e-5
    worst = 0.0
    for _ in range(10):
        d = _random_control(mesh, rng)
        fd = (cost(mesh, spec, c + eps * d) - cost(mesh, spec, c - eps * d)) / (2 * eps)
        worst = max(worst, _rel(fd, control_inner(grad, d)))
    return worst <= 1e-8, f"relative gap {worst:.1e}"


def check_fixed_point_vs_kkt():
    worst = 0.0
    for alpha in (None, 10.0):
        mesh, spec = _setup(alpha=alpha)
        w = optimal_relaxation(contraction_factor(mesh, spec, tol=1e-8))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ContractionWarning)
            fp = solve_optimal_fixed_point(mesh, spec, tol=1e-12, relaxation=w)
        kkt = solve_optimal_kkt(mesh, spec)
        worst = max(worst, control_norm(fp.control - kkt.control))
    return worst <= 1e-8, f"H x Q distance {worst:.1e}"


def check_eigen():
    mesh = build_unit_square_mesh(4)
    worst = 0.0
    for which in ("V0h", "Vh_a1"):
        worst = max(worst, _rel(estimate_lambda(mesh, which), dense_eigenvalues(mesh, which)[0]))
    worst = max(worst, _rel(estimate_trace_norm(mesh) ** 2, dense_eigenvalues(mesh, "trace")[-1]))
    return worst <= 1e-8, f"relative gap to LAPACK {worst:.1e}"


def check_constants_formula():
    c = contraction_constants(0.5, 0.5, 2.0, 100.0, 100.0)
    return abs(c.C0 - 0.379473) <= 1e-6, f"C0 = {c.C0:.6f}"


def check_rate_fit():
    a = fit_rate([(0.5, 0.5), (0.25, 0.25)])
    b = fit_rate([(0.5, 0.25), (0.25, 0.0625)])
    ok = abs(a.slope - 1) < 1e-12 and abs(b.slope - 2) < 1e-12 and abs(a.r_squared - 1) < 1e-12
    return ok, f"slopes {a.slope:.3f}, {b.slope:.3f}"


def check_trivial_optimum():
    worst = 0.0
    for alpha in (None, 10.0):
        mesh = build_unit_square_mesh(8)
        spec = ProblemSpec(1.0, interpolate(mesh, 1.0), 1.0, 1.0, alpha)
        opt = solve_optimal_fixed_point(mesh, spec, constants=None)
        worst = max(worst, control_norm(opt.control), opt.cost)
    return worst <= 1e-14, f"largest of norm/cost {worst:.1e}"


def check_bound_audit():
    mesh, spec = _setup()
    audit = audit_uniform_bounds(mesh, spec, alpha_list=(10.0,))
    bad = [r.name for r in audit.records if not r.satisfied]
    return not bad, "all twelve hold" if not bad else f"violated: {', '.join(bad)}"


CHECKS = [
    ("element matrices", check_elements),
    ("global assembly", check_assembly),
    ("adjoint duality", check_duality),
    ("monotonicity identity", check_monotonicity),
    ("convexity identity", check_convexity),
    ("gradient vs finite differences", check_gradient),
    ("fixed point vs KKT", check_fixed_point_vs_kkt),
    ("eigen estimates vs LAPACK", check_eigen),
    ("contraction constant formula", check_constants_formula),
    ("rate fit", check_rate_fit),
    ("zero optimum for reachable target", check_trivial_optimum),
    ("uniform bound audit", check_bound_audit),
]


def run_checks():
    results = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append((name, bool(ok), detail))
    return results

