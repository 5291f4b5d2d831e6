"""P1 Lagrange spaces on a :class:`~dbcontrol.mesh.Mesh`.

All bilinear forms are integrated in closed form (the integrands are
polynomials of degree at most two), so assembled matrices are exact up to
floating point. Matrices are ``scipy.sparse.csr_matrix``.
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .mesh import GAMMA1, GAMMA2, Mesh

SPACES = ("Vh", "V0h", "Kh")


class SpaceError(ValueError):
    """A function does not satisfy the membership claimed by its tag."""


# ---------------------------------------------------------------------------
# element matrices


def stiffness_element(p: np.ndarray) -> np.ndarray:
    """Element stiffness ``int grad(phi_i) . grad(phi_j)`` for the (3, 2) corners ``p``."""
    return stiffness_elements(np.asarray(p, dtype=float)[None])[0]


def mass_element(p: np.ndarray) -> np.ndarray:
    """Element mass ``int phi_i phi_j`` for the (3, 2) corners ``p``."""
    return mass_elements(np.asarray(p, dtype=float)[None])[0]


def edge_mass_element(length: float) -> np.ndarray:
    """1D P1 mass on an edge of the given length."""
    return length / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])


def _areas(p):
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def stiffness_elements(p: np.ndarray) -> np.ndarray:
    area = _areas(p)
    if np.any(area <= 0.0):
        raise ValueError("degenerate or clockwise triangle in assembly")
    # edge opposite each corner; grad(phi_i) is that edge rotated by -90 deg over 2A
    opp = p[:, [2, 0, 1]] - p[:, [1, 2, 0]]
    return np.einsum("tik,tjk->tij", opp, opp) / (4.0 * area)[:, None, None]


def mass_elements(p: np.ndarray) -> np.ndarray:
    area = _areas(p)
    if np.any(area <= 0.0):
        raise ValueError("degenerate or clockwise triangle in assembly")
    ref = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]])
    return (area / 12.0)[:, None, None] * ref


# ---------------------------------------------------------------------------
# global assembly


def _scatter(conn: np.ndarray, blocks: np.ndarray, n: int) -> sp.csr_matrix:
    k = conn.shape[1]
    rows = np.repeat(conn, k, axis=1).ravel()
    cols = np.tile(conn, (1, k)).ravel()
    mat = sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def assemble_stiffness(mesh: Mesh) -> sp.csr_matrix:
    p = mesh.vertices[mesh.triangles]
    return _scatter(mesh.triangles, stiffness_elements(p), mesh.n_vertices)


def assemble_domain_mass(mesh: Mesh) -> sp.csr_matrix:
    p = mesh.vertices[mesh.triangles]
    return _scatter(mesh.triangles, mass_elements(p), mesh.n_vertices)


def assemble_boundary_mass(mesh: Mesh, label: str) -> sp.csr_matrix:
    """``int_{label} phi_i phi_j``; rows of vertices off that boundary part are zero."""
    edges = mesh.edges_with(label)
    d = mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]]
    length = np.sqrt((d ** 2).sum(axis=1))
    blocks = length[:, None, None] / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
    return _scatter(edges, blocks, mesh.n_vertices)


class Operators:
    """Lazily assembled matrices of one mesh. Use :func:`operators` to get the cached instance."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self._robin = {}

    @cached_property
    def stiffness(self):
        return assemble_stiffness(self.mesh)

    @cached_property
    def mass(self):
        return assemble_domain_mass(self.mesh)

    @cached_property
    def gamma1_mass(self):
        return assemble_boundary_mass(self.mesh, GAMMA1)

    @cached_property
    def gamma2_mass(self):
        return assemble_boundary_mass(self.mesh, GAMMA2)

    @cached_property
    def boundary_mass(self):
        return (self.gamma1_mass + self.gamma2_mass).tocsr()

    @cached_property
    def h1(self):
        """Gram matrix of the full V inner product (mass + stiffness)."""
        return (self.mass + self.stiffness).tocsr()

    @cached_property
    def q_mass(self):
        """Gamma2 mass restricted to the Gamma2 vertices: the Gram matrix of Q."""
        nodes = self.mesh.gamma2_nodes
        return self.gamma2_mass[nodes][:, nodes].tocsr()

    @cached_property
    def q_coupling(self):
        """``(q, v)_Q`` as a map from Gamma2 values to a load on all vertices."""
        return self.gamma2_mass[:, self.mesh.gamma2_nodes].tocsr()

    def robin(self, alpha: float):
        """System matrix of the Robin form ``a + alpha * int_Gamma1``."""
        alpha = float(alpha)
        if alpha not in self._robin:
            self._robin[alpha] = (self.stiffness + alpha * self.gamma1_mass).tocsr()
        return self._robin[alpha]

    @cached_property
    def dirichlet_block(self):
        free = self.mesh.free_nodes
        return self.stiffness[free][:, free].tocsr()


_CACHE: "weakref.WeakKeyDictionary[Mesh, Operators]" = weakref.WeakKeyDictionary()


def operators(mesh: Mesh) -> Operators:
    ops = _CACHE.get(mesh)
    if ops is None:
        ops = _CACHE[mesh] = Operators(mesh)
    return ops


# ---------------------------------------------------------------------------
# functions


@dataclass(frozen=True, eq=False)
class FeFunction:
    """Nodal P1 function. ``space`` is one of Vh, V0h or Kh (with ``lift`` = b)."""

    mesh: Mesh
    values: np.ndarray
    space: str = "Vh"
    lift: float = 0.0

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.mesh.n_vertices,):
            raise SpaceError(
                f"expected {self.mesh.n_vertices} nodal values, got shape {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.space not in SPACES:
            raise SpaceError(f"unknown space tag {self.space!r}")
        on_g1 = values[self.mesh.gamma1_nodes]
        if self.space == "V0h" and np.any(on_g1 != 0.0):
            raise SpaceError("V0h function must vanish on Gamma1")
        if self.space == "Kh" and np.any(on_g1 != self.lift):
            raise SpaceError("Kh function must equal the lift on Gamma1")

    def __add__(self, other):
        return FeFunction(self.mesh, self.values + _vals(other, self.mesh))

    def __sub__(self, other):
        return FeFunction(self.mesh, self.values - _vals(other, self.mesh))

    def __rsub__(self, other):
        return FeFunction(self.mesh, _vals(other, self.mesh) - self.values)

    __radd__ = __add__

    def __mul__(self, s: float):
        return FeFunction(self.mesh, float(s) * self.values)

    __rmul__ = __mul__

    def __neg__(self):
        return FeFunction(self.mesh, -self.values)

    def trace(self) -> "BoundaryTrace":
        """Restriction to the Gamma2 vertices."""
        return BoundaryTrace(self.mesh, self.values[self.mesh.gamma2_nodes])


def _vals(other, mesh):
    if isinstance(other, FeFunction):
        if other.mesh is not mesh:
            raise ValueError("functions live on different meshes")
        return other.values
    return float(other)


@dataclass(frozen=True, eq=False)
class BoundaryTrace:
    """Continuous piecewise-linear function on the Gamma2 edges, stored at Gamma2 vertices."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (len(self.mesh.gamma2_nodes),):
            raise SpaceError(
                f"expected {len(self.mesh.gamma2_nodes)} Gamma2 values, got shape {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def nodes(self) -> np.ndarray:
        return self.mesh.gamma2_nodes

    def extend(self) -> FeFunction:
        """Extension by zero to all vertices."""
        full = np.zeros(self.mesh.n_vertices)
        full[self.nodes] = self.values
        return FeFunction(self.mesh, full)

    def _other(self, other):
        if isinstance(other, BoundaryTrace):
            if other.mesh is not self.mesh:
                raise ValueError("traces live on different meshes")
            return other.values
        return float(other)

    def __add__(self, other):
        return BoundaryTrace(self.mesh, self.values + self._other(other))

    def __sub__(self, other):
        return BoundaryTrace(self.mesh, self.values - self._other(other))

    def __mul__(self, s: float):
        return BoundaryTrace(self.mesh, float(s) * self.values)

    __rmul__ = __mul__

    def __neg__(self):
        return BoundaryTrace(self.mesh, -self.values)


@dataclass(frozen=True, eq=False)
class ControlPair:
    """Distributed control ``g`` on the domain and boundary control ``q`` on Gamma2."""

    g: FeFunction
    q: BoundaryTrace

    def __post_init__(self):
        if self.g.mesh is not self.q.mesh:
            raise ValueError("g and q must live on the same mesh")

    @property
    def mesh(self) -> Mesh:
        return self.g.mesh

    @classmethod
    def zero(cls, mesh: Mesh) -> "ControlPair":
        return cls(FeFunction(mesh, np.zeros(mesh.n_vertices)),
                   BoundaryTrace(mesh, np.zeros(len(mesh.gamma2_nodes))))

    @classmethod
    def from_vector(cls, mesh: Mesh, x: np.ndarray) -> "ControlPair":
        n = mesh.n_vertices
        return cls(FeFunction(mesh, x[:n]), BoundaryTrace(mesh, x[n:]))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.g.values, self.q.values])

    def __add__(self, other):
        return ControlPair(self.g + other.g, self.q + other.q)

    def __sub__(self, other):
        return ControlPair(self.g - other.g, self.q - other.q)

    def __mul__(self, s: float):
        return ControlPair(self.g * s, self.q * s)

    __rmul__ = __mul__

    def __neg__(self):
        return ControlPair(-self.g, -self.q)


# ---------------------------------------------------------------------------
# interpolation and norms


def interpolate(mesh: Mesh, f, space: str = "Vh") -> FeFunction:
    """Nodal interpolant of ``f(x, y)``; ``f`` may be a scalar or a vectorised callable."""
    x, y = mesh.vertices.T
    if callable(f):
        vals = np.broadcast_to(np.asarray(f(x, y), dtype=float), x.shape).copy()
    else:
        vals = np.full(x.shape, float(f))
    if not np.all(np.isfinite(vals)):
        raise ValueError("interpolated field has non-finite values")
    return FeFunction(mesh, vals, space=space)


def inner(u, v, kind: str = "H") -> float:
    """Inner product of two functions of the same kind (H, V0, V or Q)."""
    mat = _gram(u, kind)
    return float(u.values @ (mat @ _same(u, v).values))


def norm(u, kind: str = "H") -> float:
    """``H`` (L2), ``V0`` (gradient seminorm), ``V`` (full H1) or ``Q`` (L2 on Gamma2)."""
    mat = _gram(u, kind)
    return float(np.sqrt(max(u.values @ (mat @ u.values), 0.0)))


def _gram(u, kind):
    ops = operators(u.mesh)
    if isinstance(u, BoundaryTrace):
        if kind != "Q":
            raise ValueError(f"norm kind {kind!r} is not defined for a boundary trace")
        return ops.q_mass
    if isinstance(u, FeFunction):
        try:
            return {"H": ops.mass, "V0": ops.stiffness, "V": ops.h1}[kind]
        except KeyError:
            raise ValueError(f"norm kind {kind!r} is not defined for a domain function") from None
    raise TypeError(f"cannot take the norm of {type(u).__name__}")


def _same(u, v):
    if type(u) is not type(v) or u.mesh is not v.mesh:
        raise ValueError("inner product needs two objects of the same kind on one mesh")
    return v


def control_inner(c1: ControlPair, c2: ControlPair) -> float:
    return inner(c1.g, c2.g, "H") + inner(c1.q, c2.q, "Q")


def control_norm(c: ControlPair) -> float:
    """Product norm ``sqrt(|g|_H^2 + |q|_Q^2)``."""
    return float(np.hypot(norm(c.g, "H"), norm(c.q, "Q")))


# ---------------------------------------------------------------------------
# transfer between meshes


def locate(mesh: Mesh, points: np.ndarray):
    """Containing triangle and barycentric coordinates of each point."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    corners = mesh.vertices[mesh.triangles]
    k = min(12, mesh.n_triangles)
    _, cand = _centroid_tree(mesh).query(pts, k=k)
    cand = cand.reshape(len(pts), -1)

    tri = np.full(len(pts), -1)
    lam = np.zeros((len(pts), 3))
    todo = np.arange(len(pts))
    for col in range(cand.shape[1]):
        if len(todo) == 0:
            break
        t = cand[todo, col]
        bc = _barycentric(corners[t], pts[todo])
        inside = bc.min(axis=1) >= -1e-12
        tri[todo[inside]] = t[inside]
        lam[todo[inside]] = bc[inside]
        todo = todo[~inside]
    for i in todo:  # rare: fall back to a full scan
        bc = _barycentric(corners, np.repeat(pts[i][None], mesh.n_triangles, axis=0))
        t = int(np.argmax(bc.min(axis=1)))
        if bc[t].min() < -1e-12:
            raise ValueError(f"point {pts[i]} lies outside the mesh")
        tri[i], lam[i] = t, bc[t]
    return tri, lam


def evaluate(u: FeFunction, points: np.ndarray) -> np.ndarray:
    """Point values of a P1 function; points outside the mesh raise."""
    tri, lam = locate(u.mesh, points)
    return (lam * u.values[u.mesh.triangles[tri]]).sum(axis=1)


_PROLONG: "weakref.WeakKeyDictionary[Mesh, weakref.WeakKeyDictionary]" = weakref.WeakKeyDictionary()


def prolongation(coarse: Mesh, fine: Mesh) -> sp.csr_matrix:
    """Matrix of nodal interpolation from ``coarse`` to ``fine``.

    Column ``j`` holds the coarse hat function ``j`` sampled at the fine
    vertices. For nested meshes it represents the coarse basis exactly, so
    ``P.T @ load_fine`` is the coarse load of a fine function.
    """
    inner_cache = _PROLONG.setdefault(coarse, weakref.WeakKeyDictionary())
    mat = inner_cache.get(fine)
    if mat is None:
        tri, lam = locate(coarse, fine.vertices)
        rows = np.repeat(np.arange(fine.n_vertices), 3)
        cols = coarse.triangles[tri].ravel()
        vals = np.where(np.abs(lam) < 1e-13, 0.0, lam).ravel()
        mat = sp.coo_matrix((vals, (rows, cols)), shape=(fine.n_vertices, coarse.n_vertices)).tocsr()
        mat.eliminate_zeros()
        inner_cache[fine] = mat
    return mat


def _barycentric(c, x):
    v0 = c[:, 1] - c[:, 0]
    v1 = c[:, 2] - c[:, 0]
    w = x - c[:, 0]
    det = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0]
    l1 = (w[:, 0] * v1[:, 1] - w[:, 1] * v1[:, 0]) / det
    l2 = (v0[:, 0] * w[:, 1] - v0[:, 1] * w[:, 0]) / det
    return np.column_stack([1.0 - l1 - l2, l1, l2])


_TREES: "weakref.WeakKeyDictionary[Mesh, cKDTree]" = weakref.WeakKeyDictionary()


def _centroid_tree(mesh):
    tree = _TREES.get(mesh)
    if tree is None:
        tree = _TREES[mesh] = cKDTree(mesh.vertices[mesh.triangles].mean(axis=1))
    return tree


def transfer(u, target: Mesh):
    """Nodal interpolation of a function (or trace, or control pair) onto ``target``.

    For nested meshes this is exact: a coarse P1 function is also a fine one.
    Traces are interpolated along the boundary by extending them by zero first,
    which is exact on the Gamma2 edges.
    """
    if isinstance(u, ControlPair):
        return ControlPair(transfer(u.g, target), transfer(u.q, target))
    if isinstance(u, BoundaryTrace):
        full = evaluate(u.extend(), target.vertices[target.gamma2_nodes])
        return BoundaryTrace(target, full)
    return FeFunction(target, evaluate(u, target.vertices))
