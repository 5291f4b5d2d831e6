"""
Optimal controls by fixed-point iteration
=========================================

The optimum satisfies ``g = -p/M1`` and ``q = gamma p/M2``. Iterating this
map converges when its contraction factor is below one; a relaxation weight
restores convergence when it is not. The reduced-Hessian solve serves as
the reference.
"""
# %%
import warnings

from dbcontrol.analysis import contraction_factor, estimate_constants
from dbcontrol.control import (ContractionWarning, OptimizationError, optimal_relaxation,
                               solve_optimal_fixed_point, solve_optimal_kkt)
from dbcontrol.fem import control_norm, interpolate
from dbcontrol.mesh import build_unit_square_mesh
from dbcontrol.solvers import ProblemSpec

warnings.simplefilter("ignore", ContractionWarning)
mesh = build_unit_square_mesh(16)
z_d = interpolate(mesh, lambda x, y: x * y)

# %%
# Sufficient condition versus the measured factor
# -----------------------------------------------
# The a-priori Lipschitz bound C0 is far above one for unit weights, while
# the factor actually measured by power iteration is much smaller.
c = estimate_constants(mesh, 1.0, 1.0, alpha=10.0)
print(f"C0 = {c.C0:.2f} (Dirichlet), {c.C0alpha:.2f} (Robin, alpha=10)")
for alpha in (None, 10.0, 1.0):
    spec = ProblemSpec(1.0, z_d, 1.0, 1.0, alpha)
    rho = contraction_factor(mesh, spec, tol=1e-8)
    print(f"alpha={'inf' if alpha is None else alpha:>4}: rho = {rho:.4f}, "
          f"relaxed factor = {rho / (2 + rho):.4f} with w = {optimal_relaxation(rho):.3f}")

# %%
# Plain iteration, relaxed iteration and the reference
# ----------------------------------------------------
for alpha in (None, 10.0):
    spec = ProblemSpec(1.0, z_d, 1.0, 1.0, alpha)
    ref = solve_optimal_kkt(mesh, spec)
    label = "Dirichlet" if alpha is None else f"Robin alpha={alpha:g}"
    try:
        plain = solve_optimal_fixed_point(mesh, spec, max_iter=200)
        print(f"{label}: plain iteration {plain.iterations} steps, "
              f"|c - c_ref| = {control_norm(plain.control - ref.control):.1e}")
    except OptimizationError as exc:
        print(f"{label}: plain iteration fails ({exc})")
    w = optimal_relaxation(contraction_factor(mesh, spec, tol=1e-8))
    relaxed = solve_optimal_fixed_point(mesh, spec, relaxation=w)
    print(f"{label}: relaxed iteration {relaxed.iterations} steps, J = {relaxed.cost:.10f}, "
          f"|c - c_ref| = {control_norm(relaxed.control - ref.control):.1e}, "
          f"last ratio {relaxed.ratios[-1]:.3f}")
