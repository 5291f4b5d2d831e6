"""
Mesh convergence of the optima and cost gaps
============================================

Discrete optima on a sequence of meshes are compared with a four-times finer
surrogate. The cost gaps between the discrete and surrogate problems are
nonnegative; their decay rate is read off a log-log fit.
"""
# %%
from dbcontrol.harness import studies
from dbcontrol.harness.config import StudyConfig

cfg = StudyConfig(levels=(4, 8, 16), n_ref=64)
records, fits = studies.study_h(cfg)
for r in records:
    print(f"h={r.h:.4f} alpha={'inf' if r.alpha is None else r.alpha:>4}  control {r.err_control:.3e}  "
          f"state {r.err_state:.3e}  adjoint {r.err_adjoint:.3e}")
for (alpha, col), (fit, note) in sorted(fits.items(), key=lambda kv: (kv[0][0] or 0, kv[0][1])):
    print(f"alpha={'inf' if alpha is None else alpha:>4} {col:<12} order {fit.slope:.2f}")

# %%
# Cost gaps
# ---------
records, fits = studies.study_cost_gaps(cfg)
for r in records:
    e = r.extra
    print(f"h={r.h:.4f} alpha={'inf' if r.alpha is None else r.alpha:>4}  "
          f"J(c_h)-J(c) {e['gap_fine']:.3e}  J_h(c)-J_h(c_h) {e['gap_coarse']:.3e}  "
          f"J(c)-J_h(c_h) {e['gap_cross']:.3e}")
print("sign violations:", studies.sign_violations(records) or "none")
for (alpha, col), (fit, note) in sorted(fits.items(), key=lambda kv: (kv[0][0] or 0, kv[0][1])):
    print(f"alpha={'inf' if alpha is None else alpha:>4} {col:<10} order {fit.slope:.2f}")
