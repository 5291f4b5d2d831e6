from dbcontrol.fem import BoundaryTrace, ControlPair, FeFunction, interpolate
from dbcontrol.mesh import build_unit_square_mesh
from dbcontrol.solvers import ProblemSpec

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def random_control(mesh, rng):
    return ControlPair(FeFunction(mesh, rng.standard_normal(mesh.n_vertices)),
                       BoundaryTrace(mesh, rng.standard_normal(len(mesh.gamma2_nodes))))


def xy_problem(n=8, alpha=None, M1=1.0, M2=1.0, b=1.0):
    mesh = build_unit_square_mesh(n)
    return mesh, ProblemSpec(b, interpolate(mesh, lambda x, y: x * y), M1, M2, alpha)


def rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)
