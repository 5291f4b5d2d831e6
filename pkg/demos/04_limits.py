"""
Robin to Dirichlet, and the double limit
========================================

As alpha grows, the Robin optimum approaches the Dirichlet one on a fixed
mesh. Refining the mesh while increasing alpha approaches the fine-mesh
Dirichlet optimum.
"""
# %%
from dbcontrol.harness import studies
from dbcontrol.harness.config import StudyConfig

cfg = StudyConfig(levels=(8, 16), n_ref=64, alpha_level=16, diagonal_steps=2)

for r in studies.study_alpha(cfg):
    print(f"alpha={r.alpha:<7g} control {r.err_control:.3e}  state {r.err_state:.3e}  "
          f"adjoint {r.err_adjoint:.3e}  (fixed control: state {r.extra['fixed_state']:.3e})")

# %%
# Diagonal sequence ``(8 * 2^k, 10^(k+1))`` against the n=64 Dirichlet optimum.
for r in sorted(studies.study_diagonal(cfg), key=lambda r: r.extra["k"]):
    print(f"k={r.extra['k']} n={r.extra['n']:3d} alpha={r.alpha:<6g} control {r.err_control:.3e}  "
          f"state {r.err_state:.3e}")
