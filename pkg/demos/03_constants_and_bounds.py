"""
Discrete constants and a-priori bounds
======================================

Coercivity constants and the trace norm are generalized eigenvalues; they
are computed by inverse and power iteration and compared with a dense
solve. The twelve uniform bounds are then checked on one mesh.
"""
# %%
from dbcontrol.analysis import (audit_uniform_bounds, dense_eigenvalues, estimate_lambda,
                                estimate_trace_norm)
from dbcontrol.fem import interpolate
from dbcontrol.mesh import build_unit_square_mesh
from dbcontrol.solvers import ProblemSpec

small = build_unit_square_mesh(4)
for which in ("V0h", "Vh_a1"):
    print(f"{which}: iteration {estimate_lambda(small, which):.10f}, "
          f"dense {dense_eigenvalues(small, which)[0]:.10f}")
print(f"trace norm: iteration {estimate_trace_norm(small):.10f}, "
      f"dense {dense_eigenvalues(small, 'trace')[-1] ** 0.5:.10f}")

# %%
# The constants settle quickly under refinement.
for n in (8, 16, 32):
    m = build_unit_square_mesh(n)
    print(f"n={n:2d}: lambda = {estimate_lambda(m, 'V0h'):.5f}, "
          f"lambda_1 = {estimate_lambda(m, 'Vh_a1'):.5f}, |gamma| = {estimate_trace_norm(m):.5f}")

# %%
# Uniform bounds
# --------------
mesh = build_unit_square_mesh(8)
spec = ProblemSpec(1.0, interpolate(mesh, lambda x, y: x * y), 1.0, 1.0, 10.0)
audit = audit_uniform_bounds(mesh, spec, alpha_list=(10.0,))
for r in audit.records:
    print(f"{r.name:>4} alpha={r.alpha:<4g} {r.measured:12.6e} <= {r.bound:12.6e}  "
          f"{'ok' if r.satisfied else 'VIOLATED'}")
