import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from dbcontrol.analysis import estimate_lambda, estimate_trace_norm, fit_rate
from dbcontrol.fem import BoundaryTrace, ControlPair, FeFunction, control_norm, inner, interpolate, norm, operators
from dbcontrol.mesh import build_unit_square_mesh
from dbcontrol.solvers import (ProblemSpec, SolverError, control_load, solve_adjoint,
                               solve_adjoint_dirichlet, solve_adjoint_robin, solve_state,
                               solve_state_dirichlet, solve_state_robin, spd_solve)

from helpers import random_control, rel, xy_problem
from oracles import Manufactured, exact_errors


def test_spd_solve_identity(rng):
    b = rng.standard_normal(7)
    x, rep = spd_solve(sp.identity(7, format="csr"), b)
    assert np.allclose(x, b, rtol=0, atol=1e-15)
    assert rep.residual <= 1e-12


def test_spd_solve_2x2():
    x, rep = spd_solve(sp.csr_matrix([[2.0, 1.0], [1.0, 2.0]]), np.array([3.0, 3.0]))
    assert np.allclose(x, [1.0, 1.0], atol=1e-14)


def test_spd_solve_zero_rhs():
    x, rep = spd_solve(sp.csr_matrix([[2.0, 1.0], [1.0, 2.0]]), np.zeros(2))
    assert np.array_equal(x, np.zeros(2)) and rep.iterations == 0


def test_spd_solve_errors():
    with pytest.raises(SolverError):
        spd_solve(sp.csr_matrix([[1.0, 2.0], [2.0, 1.0]]), np.array([1.0, -1.0]))
    with pytest.raises(SolverError):
        spd_solve(sp.csr_matrix([[-1.0, 0.0], [0.0, 1.0]]), np.array([1.0, 1.0]))
    with pytest.raises(SolverError):
        spd_solve(sp.identity(2, format="csr"), np.array([np.nan, 1.0]))


def test_spd_solve_iteration_cap_reports():
    A = operators(build_unit_square_mesh(16)).dirichlet_block
    b = np.ones(A.shape[0])
    with pytest.raises(SolverError) as info:
        spd_solve(A, b, maxiter=3)
    assert info.value.report.iterations == 3 and info.value.report.residual > 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 30))
def test_spd_solve_random_spd(seed, n):
    r = np.random.default_rng(seed)
    B = r.standard_normal((n, n))
    A = sp.csr_matrix(B @ B.T + n * np.eye(n))
    b = r.standard_normal(n)
    x, rep = spd_solve(A, b)
    assert np.linalg.norm(A @ x - b) <= 1e-12 * np.linalg.norm(b) or rep.at_floor
    assert np.allclose(x, np.linalg.solve(A.toarray(), b), rtol=1e-9, atol=1e-12)


def test_rounding_floor_flagged_on_fine_mesh():
    mesh = build_unit_square_mesh(128)
    ops = operators(mesh)
    b = ops.mass @ interpolate(mesh, lambda x, y: np.sin(3 * x) * y).values
    x, rep = spd_solve(ops.robin(1.0), b)
    # either the tolerance or the rounding floor, never a silent miss
    true = np.linalg.norm(ops.robin(1.0) @ x - b) / np.linalg.norm(b)
    assert true <= 1e-12 or (rep.at_floor and true <= 1e-8)


def test_problem_spec_validation(mesh8):
    zd = interpolate(mesh8, 0.0)
    for kw in (dict(b=0.0, M1=1, M2=1), dict(b=1.0, M1=0, M2=1), dict(b=1.0, M1=1, M2=-1)):
        with pytest.raises(ValueError):
            ProblemSpec(z_d=zd, **kw)
    with pytest.raises(ValueError):
        ProblemSpec(1.0, zd, 1.0, 1.0, alpha=0.0)
    assert ProblemSpec(1.0, zd, 1, 1).variant == "dirichlet"
    assert ProblemSpec(1.0, zd, 1, 1, 3.0).variant == "robin"


@pytest.mark.parametrize("alpha", [None, 0.5, 10.0, 1e4])
def test_constant_state_for_zero_controls(alpha):
    mesh = build_unit_square_mesh(8)
    spec = ProblemSpec(2.0, interpolate(mesh, 0.0), 1.0, 1.0, alpha)
    u = solve_state(mesh, spec, ControlPair.zero(mesh))
    assert np.allclose(u.values, 2.0, rtol=0, atol=1e-12)
    if alpha is None:
        assert u.space == "Kh" and np.all(u.values == 2.0)
        assert norm(u - 2.0, "V") <= 1e-12 * 2.0


def test_dirichlet_state_in_kh_and_residual(rng):
    mesh, spec = xy_problem(b=1.5)
    c = random_control(mesh, rng)
    u = solve_state_dirichlet(mesh, spec, c)
    assert u.space == "Kh" and np.all(u.values[mesh.gamma1_nodes] == 1.5)
    ops = operators(mesh)
    res = (ops.stiffness @ u.values - control_load(mesh, c))[mesh.free_nodes]
    assert np.linalg.norm(res) <= 1e-11 * np.linalg.norm(control_load(mesh, c))


def test_q_enters_with_minus_sign():
    # a positive outward flux q drains heat: the state drops below b
    mesh = build_unit_square_mesh(8)
    spec = ProblemSpec(1.0, interpolate(mesh, 0.0), 1.0, 1.0)
    c = ControlPair(interpolate(mesh, 0.0), interpolate(mesh, 1.0).trace())
    u = solve_state(mesh, spec, c)
    assert u.values.max() <= 1.0 + 1e-12 and u.values.min() < 0.9


def test_superposition(rng):
    mesh, spec = xy_problem()
    c1, c2 = random_control(mesh, rng), random_control(mesh, rng)
    for s in (spec, spec.with_alpha(10.0)):
        u1, u2, u12 = (solve_state(mesh, s, c) for c in (c1, c2, c1 + c2))
        lhs = u12.values - s.b
        rhs = (u1.values - s.b) + (u2.values - s.b)
        assert np.abs(lhs - rhs).max() <= 1e-10 * np.abs(rhs).max()


def test_robin_residual(rng):
    mesh, spec = xy_problem(alpha=7.0)
    c = random_control(mesh, rng)
    u = solve_state_robin(mesh, spec, c)
    ops = operators(mesh)
    load = control_load(mesh, c) + 7.0 * spec.b * (ops.gamma1_mass @ np.ones(mesh.n_vertices))
    assert np.linalg.norm(ops.robin(7.0) @ u.values - load) <= 1e-11 * np.linalg.norm(load)


def test_variant_checks(rng):
    mesh, spec = xy_problem()
    with pytest.raises(ValueError):
        solve_state_robin(mesh, spec, ControlPair.zero(mesh))
    with pytest.raises(ValueError):
        solve_adjoint_robin(mesh, spec, interpolate(mesh, 1.0))
    with pytest.raises(ValueError):
        solve_state(mesh, spec, ControlPair.zero(build_unit_square_mesh(8)))


def test_adjoint_examples(rng):
    mesh, spec = xy_problem()
    u = solve_state(mesh, spec, random_control(mesh, rng))
    same = ProblemSpec(spec.b, FeFunction(mesh, u.values), 1.0, 1.0)
    assert np.abs(solve_adjoint_dirichlet(mesh, same, u).values).max() <= 1e-14
    p = solve_adjoint_dirichlet(mesh, spec, u)
    assert p.space == "V0h" and np.all(p.values[mesh.gamma1_nodes] == 0.0)
    rsame = same.with_alpha(10.0)
    ur = solve_state(mesh, rsame, ControlPair.zero(mesh))
    rsame = ProblemSpec(spec.b, FeFunction(mesh, ur.values), 1.0, 1.0, 10.0)
    assert np.abs(solve_adjoint_robin(mesh, rsame, ur).values).max() <= 1e-14


@pytest.mark.parametrize("alpha", [None, 10.0])
def test_duality_identity(alpha, rng):
    mesh, spec = xy_problem(alpha=alpha)
    ops = operators(mesh)
    form = ops.stiffness if alpha is None else ops.robin(alpha)
    for _ in range(3):
        c, d = random_control(mesh, rng), random_control(mesh, rng)
        p = solve_adjoint(mesh, spec, solve_state(mesh, spec, c))
        du = solve_state(mesh, spec, d).values - solve_state(mesh, spec, ControlPair.zero(mesh)).values
        lhs = p.values @ (form @ du)
        rhs = inner(d.g, p, "H") - inner(d.q, p.trace(), "Q")
        assert rel(lhs, rhs) <= 1e-10


@pytest.mark.parametrize("alpha", [None, 10.0])
def test_monotonicity_identity(alpha, rng):
    mesh, spec = xy_problem(alpha=alpha)
    for _ in range(3):
        c1, c2 = random_control(mesh, rng), random_control(mesh, rng)
        u1, u2 = solve_state(mesh, spec, c1), solve_state(mesh, spec, c2)
        dp = solve_adjoint(mesh, spec, u2) - solve_adjoint(mesh, spec, u1)
        lhs = inner(dp, c2.g - c1.g, "H") - inner(dp.trace(), c2.q - c1.q, "Q")
        assert rel(lhs, norm(u2 - u1, "H") ** 2) <= 1e-10


def test_lipschitz_bound(rng):
    mesh, spec = xy_problem()
    lam, gam = estimate_lambda(mesh, "V0h"), estimate_trace_norm(mesh)
    bound = (1 + gam) * math.sqrt(2) / lam
    for _ in range(10):
        c1, c2 = random_control(mesh, rng), random_control(mesh, rng)
        du = solve_state(mesh, spec, c2) - solve_state(mesh, spec, c1)
        assert norm(du, "V") <= bound * control_norm(c2 - c1)


def test_manufactured_rates():
    mms = Manufactured(b=1.0)
    pts_h, pts_v, pts_ih, pts_iv = [], [], [], []
    for n in (8, 16, 32, 64):
        mesh = build_unit_square_mesh(n)
        spec = ProblemSpec(1.0, interpolate(mesh, 0.0), 1.0, 1.0)
        u = solve_state(mesh, spec, None, load=mms.load(mesh))
        eh, ev = exact_errors(mesh, u.values, mms.u, mms.grad)
        pts_h.append((mesh.h, eh))
        pts_v.append((mesh.h, ev))
        diff = u - interpolate(mesh, mms.u)
        pts_ih.append((mesh.h, norm(diff, "H")))
        pts_iv.append((mesh.h, norm(diff, "V")))
    assert fit_rate(pts_v).slope == pytest.approx(1.0, abs=0.15)
    assert fit_rate(pts_h).slope == pytest.approx(2.0, abs=0.15)
    assert fit_rate(pts_ih).slope == pytest.approx(2.0, abs=0.15)
    # on this structured mesh u_h is superclose to the interpolant in the V norm
    assert fit_rate(pts_iv).slope > 1.7


def _mms_controls(mesh):
    mms = Manufactured()
    g = interpolate(mesh, mms.g)
    # outward flux of u* on Gamma2: x = 0 and x = 1 give pi*y, the top gives -sin(pi x)
    x, y = mesh.vertices[mesh.gamma2_nodes].T
    q = np.where(np.isclose(y, 1.0) & (x > 0) & (x < 1), -np.sin(np.pi * x), np.pi * y)
    return ControlPair(g, BoundaryTrace(mesh, q))


def test_robin_state_alpha_limit():
    mesh = build_unit_square_mesh(16)
    spec = ProblemSpec(1.0, interpolate(mesh, 0.0), 1.0, 1.0)
    c = _mms_controls(mesh)
    ud = solve_state(mesh, spec, c)
    dist = [norm(solve_state(mesh, spec.with_alpha(a), c) - ud, "V")
            for a in (1.0, 10.0, 1e2, 1e3, 1e4)]
    assert all(b < a for a, b in zip(dist, dist[1:]))
    far = norm(solve_state(mesh, spec.with_alpha(1e6), c) - ud, "V")
    assert far <= 1e-3 * norm(ud, "V")


def test_robin_adjoint_alpha_limit():
    mesh, spec = xy_problem(n=16)
    c = _mms_controls(mesh)
    pd = solve_adjoint(mesh, spec, solve_state(mesh, spec, c))
    dist = []
    for a in (1.0, 10.0, 1e2, 1e3, 1e4):
        s = spec.with_alpha(a)
        dist.append(norm(solve_adjoint(mesh, s, solve_state(mesh, s, c)) - pd, "V"))
    assert all(b < a for a, b in zip(dist, dist[1:]))


def test_warm_start_same_answer(rng):
    mesh, spec = xy_problem(alpha=10.0)
    c = random_control(mesh, rng)
    u = solve_state(mesh, spec, c)
    u2 = solve_state(mesh, spec, c, x0=u.values + 1e-3)
    assert np.abs(u.values - u2.values).max() <= 1e-10
