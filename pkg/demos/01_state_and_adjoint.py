"""
State and adjoint on the unit square
====================================

Build a structured mesh, solve the state for given controls in both the
Dirichlet and the Robin setting, then the adjoint, and check the convergence
order of the state against a known smooth solution.
"""
# %%
# Mesh
# ----
# Gamma1 is the bottom side, where the state is held at ``b``.
import numpy as np

from dbcontrol.analysis import fit_rate
from dbcontrol.fem import ControlPair, interpolate, norm, transfer
from dbcontrol.mesh import GAMMA1, GAMMA2, boundary_measure, build_unit_square_mesh
from dbcontrol.solvers import ProblemSpec, solve_adjoint, solve_state

mesh = build_unit_square_mesh(16, gamma1_sides=("bottom",))
print(f"{mesh.n_vertices} vertices, {mesh.n_triangles} triangles, h = {mesh.h:.4f}")
print(f"|Gamma1| = {boundary_measure(mesh, GAMMA1):g}, |Gamma2| = {boundary_measure(mesh, GAMMA2):g}")

# %%
# State and adjoint for constant controls
# ---------------------------------------
# ``alpha=None`` is the Dirichlet problem; a finite alpha replaces the
# Dirichlet condition on Gamma1 by a Robin one.
z_d = interpolate(mesh, lambda x, y: x * y)
g = interpolate(mesh, 1.0)
ctrl = ControlPair(g, interpolate(mesh, 0.5).trace())
for alpha in (None, 1.0, 10.0, 1e3):
    spec = ProblemSpec(1.0, z_d, 1.0, 1.0, alpha)
    u = solve_state(mesh, spec, ctrl)
    p = solve_adjoint(mesh, spec, u)
    label = "Dirichlet" if alpha is None else f"alpha={alpha:g}"
    print(f"{label:>12}: |u|_V = {norm(u, 'V'):.6f}  |p|_V = {norm(p, 'V'):.6f}  "
          f"max u on Gamma1 = {u.values[mesh.gamma1_nodes].max():.6f}")

# %%
# Convergence for a smooth solution
# ---------------------------------
# ``u = 1 + y (2 - y) cos(pi x)`` equals 1 on the bottom and has zero flux
# on the other three sides, so ``q = 0`` and ``g = -Laplace u``. The error is
# measured on a four times finer mesh, which stands in for the exact one.
u_exact = lambda x, y: 1.0 + y * (2 - y) * np.cos(np.pi * x)
g_exact = lambda x, y: (np.pi ** 2 * y * (2 - y) + 2.0) * np.cos(np.pi * x)

pts_h, pts_v = [], []
for n in (8, 16, 32):
    m, fine = build_unit_square_mesh(n), build_unit_square_mesh(4 * n)
    spec = ProblemSpec(1.0, interpolate(m, 0.0), 1.0, 1.0)
    c = ControlPair(interpolate(m, g_exact), interpolate(m, 0.0).trace())
    err = transfer(solve_state(m, spec, c), fine) - interpolate(fine, u_exact)
    pts_h.append((m.h, norm(err, "H")))
    pts_v.append((m.h, norm(err, "V")))
    print(f"n={n:3d}  |e|_H = {pts_h[-1][1]:.3e}  |e|_V = {pts_v[-1][1]:.3e}")
print(f"observed order: H {fit_rate(pts_h).slope:.2f}, V {fit_rate(pts_v).slope:.2f}")
