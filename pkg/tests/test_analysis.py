import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dbcontrol.analysis import (audit_uniform_bounds, contraction_constants, contraction_factor,
                                dense_eigenvalues, estimate_constants, estimate_lambda,
                                estimate_trace_norm, fit_rate)
from dbcontrol.control import solve_optimal_kkt
from dbcontrol.fem import operators
from dbcontrol.mesh import build_unit_square_mesh

from helpers import rel, xy_problem

positive = st.floats(0.05, 50.0, allow_nan=False)


@pytest.fixture(scope="module")
def mesh4():
    return build_unit_square_mesh(4)


@pytest.mark.parametrize("which", ["V0h", "Vh_a1"])
def test_lambda_matches_lapack(mesh4, which):
    dense = dense_eigenvalues(mesh4, which)
    assert rel(estimate_lambda(mesh4, which), dense[0]) <= 1e-8
    assert 0 < dense[0] <= 1


def test_trace_norm_matches_lapack(mesh4):
    assert rel(estimate_trace_norm(mesh4) ** 2, dense_eigenvalues(mesh4, "trace")[-1]) <= 1e-8


@pytest.mark.parametrize("which", ["V0h", "Vh_a1"])
def test_lambda_vector_is_certified(mesh8, which):
    # the returned vector attains the eigenvalue as a Rayleigh quotient
    lam, v = estimate_lambda(mesh8, which, return_vector=True)
    ops = operators(mesh8)
    form = ops.stiffness if which == "V0h" else ops.robin(1.0)
    assert rel(v @ form @ v / (v @ ops.h1 @ v), lam) <= 1e-8
    if which == "V0h":
        assert np.all(v[mesh8.gamma1_nodes] == 0)


def test_lambda_is_minimum_over_probes(mesh8, rng):
    lam = estimate_lambda(mesh8, "V0h")
    ops = operators(mesh8)
    free = mesh8.free_nodes
    for _ in range(20):
        v = np.zeros(mesh8.n_vertices)
        v[free] = rng.standard_normal(len(free))
        assert v @ ops.stiffness @ v / (v @ ops.h1 @ v) >= lam * (1 - 1e-10)


def test_trace_norm_is_maximum_over_probes(mesh8, rng):
    gam = estimate_trace_norm(mesh8)
    ops = operators(mesh8)
    for _ in range(20):
        v = rng.standard_normal(mesh8.n_vertices)
        assert v @ ops.boundary_mass @ v / (v @ ops.h1 @ v) <= gam ** 2 * (1 + 1e-10)
    # constants: |1|_boundary^2 = 4, |1|_V^2 = 1
    assert gam >= 2.0


def test_constants_stable_under_refinement():
    coarse, fine = build_unit_square_mesh(16), build_unit_square_mesh(32)
    for which in ("V0h", "Vh_a1"):
        assert rel(estimate_lambda(coarse, which), estimate_lambda(fine, which)) <= 0.1
    assert rel(estimate_trace_norm(coarse), estimate_trace_norm(fine)) <= 0.1


def test_c0_example_and_formula():
    c = contraction_constants(0.5, 0.5, 2.0, 100.0, 100.0)
    assert c.C0 == pytest.approx(0.379473, abs=1e-6)
    assert c.C0alpha is None and c.m == c.M == 100.0
    r = contraction_constants(0.5, 0.4, 2.0, 1.0, 3.0, alpha=0.5)
    assert r.lambda_alpha_h == pytest.approx(0.2)
    assert r.C0alpha == pytest.approx(r.C0 * (0.5 / 0.2) ** 2)
    assert (r.m, r.M) == (1.0, 3.0)


@settings(max_examples=50, deadline=None)
@given(lam=st.floats(0.05, 1.0), gam=st.floats(0.5, 5.0), M1=positive, M2=positive, k=st.floats(1.01, 10.0))
def test_c0_monotone(lam, gam, M1, M2, k):
    base = contraction_constants(lam, lam, gam, M1, M2).C0
    assert contraction_constants(lam, lam, gam, k * M1, M2).C0 < base
    assert contraction_constants(lam, lam, gam, M1, k * M2).C0 < base
    assert contraction_constants(min(1.0, k * lam), lam, gam, M1, M2).C0 <= base
    assert contraction_constants(lam, lam, k * gam, M1, M2).C0 > base


@settings(max_examples=30, deadline=None)
@given(alpha=st.floats(1.0, 1e6))
def test_robin_constant_independent_of_large_alpha(alpha):
    r = contraction_constants(0.3, 0.2, 2.5, 1.0, 1.0, alpha=alpha)
    assert r.C0alpha == contraction_constants(0.3, 0.2, 2.5, 1.0, 1.0, alpha=1.0).C0alpha


def test_estimate_constants_deterministic(mesh8):
    a = estimate_constants(mesh8, 1.0, 1.0, 10.0)
    b = estimate_constants(mesh8, 1.0, 1.0, 10.0)
    assert a == b
    assert a.C0 > 1  # unit weights: the contraction sufficient condition fails


def test_contraction_factor_below_c0():
    mesh, spec = xy_problem()
    rho = contraction_factor(mesh, spec)
    assert 0 < rho < estimate_constants(mesh, 1.0, 1.0).C0
    _, robin = xy_problem(alpha=10.0)
    assert contraction_factor(mesh, robin) > rho


def test_fit_rate_examples():
    a = fit_rate([(0.5, 0.5), (0.25, 0.25)])
    assert a.slope == pytest.approx(1.0, abs=1e-12) and a.r_squared == pytest.approx(1.0)
    b = fit_rate([(0.5, 0.25), (0.25, 0.0625), (0.125, 0.015625)])
    assert b.slope == pytest.approx(2.0, abs=1e-12)
    assert b.intercept == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(slope=st.floats(-3, 5), c=st.floats(1e-3, 1e3))
def test_fit_rate_recovers_power_laws(slope, c):
    hs = [0.5, 0.25, 0.125, 0.0625]
    fit = fit_rate([(h, c * h ** slope) for h in hs])
    assert fit.slope == pytest.approx(slope, abs=1e-9)
    assert fit.intercept == pytest.approx(math.log(c), abs=1e-9)


@pytest.mark.parametrize("pts", [[(0.5, 1.0)], [(0.5, 0.0), (0.25, 1.0)], [(-0.5, 1.0), (0.25, 1.0)]])
def test_fit_rate_rejects(pts):
    with pytest.raises(ValueError):
        fit_rate(pts)


@pytest.fixture(scope="module")
def audit8():
    mesh, spec = xy_problem(alpha=10.0)
    return audit_uniform_bounds(mesh, spec, alpha_list=(10.0, 1000.0))


def test_audit_all_hold(audit8):
    names = {r.name for r in audit8.records}
    assert names == {f"c{i}" for i in range(1, 13)}
    assert all(r.satisfied for r in audit8.records if r.alpha <= 10.0)
    assert all(r.satisfied for r in audit8.records if r.name != "c12")
    assert len(audit8["c4"]) == 2 and audit8["c1"][0].alpha == math.inf


def test_audit_c12_shifted_defect_grows_with_alpha(audit8):
    # the adjoint vanishes on Gamma1 in the limit, so the defect against b
    # tends to b^2 |Gamma1| and its alpha-weighted form grows linearly
    assert audit8["c12", 10.0].measured < 9.0
    assert audit8["c12", 1000.0].measured == pytest.approx(999.0, rel=0.01)
    assert not audit8["c12", 1000.0].satisfied


def test_audit_c1_equality_and_c3(audit8):
    c1 = audit8["c1"][0]
    assert rel(c1.measured, c1.bound) <= 1e-12
    # the zero-control state is the constant b, so the defect on Gamma1 vanishes
    for r in audit8["c3"]:
        assert abs(r.measured) <= 1e-20


def test_audit_custom_optimizer_and_lambdas():
    mesh, spec = xy_problem()
    calls = []

    def opt(m, s):
        calls.append(s.alpha)
        return solve_optimal_kkt(m, s)

    lams = (estimate_lambda(mesh, "V0h"), estimate_lambda(mesh, "Vh_a1"), estimate_trace_norm(mesh))
    audit = audit_uniform_bounds(mesh, spec, alpha_list=(10.0,), optimizer=opt, lambdas=lams)
    assert calls == [None, 10.0] and audit.all_satisfied


def test_audit_rejects_small_alpha():
    mesh, spec = xy_problem()
    with pytest.raises(ValueError):
        audit_uniform_bounds(mesh, spec, alpha_list=(0.5,))
