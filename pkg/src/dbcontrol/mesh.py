"""Structured triangulations of the unit square with a two-part boundary.

The boundary is split into a Dirichlet/Robin part ``Gamma1`` and a Neumann
part ``Gamma2``. Both parts are unions of whole sides of the square.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

GAMMA1 = "Gamma1"
GAMMA2 = "Gamma2"
LABELS = (GAMMA1, GAMMA2)
SIDES = ("bottom", "right", "top", "left")


class MeshError(ValueError):
    """Raised when a triangulation violates one of its structural invariants."""


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable P1 triangulation.

    Attributes
    ----------
    vertices : (N, 2) float array
    triangles : (T, 3) int array, counterclockwise
    boundary_edges : (E, 2) int array, oriented with the domain on the left
    edge_labels : (E,) array of ``"Gamma1"`` / ``"Gamma2"``
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    edge_labels: np.ndarray

    def __post_init__(self):
        for name, dtype in (("vertices", float), ("triangles", np.int64),
                            ("boundary_edges", np.int64), ("edge_labels", str)):
            arr = np.array(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        self.validate()

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def h(self) -> float:
        """Longest triangle side."""
        p = self.vertices[self.triangles]
        sides = p[:, [1, 2, 0]] - p
        return float(np.sqrt((sides ** 2).sum(axis=2)).max())

    @property
    def area(self) -> float:
        return float(self.signed_areas.sum())

    def edges_with(self, label: str) -> np.ndarray:
        _check_label(label)
        return self.boundary_edges[self.edge_labels == label]

    def nodes_on(self, label: str) -> np.ndarray:
        """Sorted unique vertices incident to edges carrying ``label``."""
        return np.unique(self.edges_with(label))

    @cached_property
    def gamma1_nodes(self) -> np.ndarray:
        return self.nodes_on(GAMMA1)

    @cached_property
    def gamma2_nodes(self) -> np.ndarray:
        return self.nodes_on(GAMMA2)

    @cached_property
    def free_nodes(self) -> np.ndarray:
        """Vertices not on Gamma1 (the unknowns of the Dirichlet problems)."""
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[self.gamma1_nodes] = False
        return np.flatnonzero(mask)

    def validate(self) -> None:
        nv = len(self.vertices)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshError("vertices must be an (N, 2) array")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshError("triangles must be a (T, 3) array")
        if len(self.triangles) == 0:
            raise MeshError("mesh has no triangles")
        if self.triangles.min() < 0 or self.triangles.max() >= nv:
            raise MeshError("triangle vertex index out of range")
        if np.any(self.signed_areas <= 0.0):
            raise MeshError("triangles must have positive signed area")
        if len(self.boundary_edges) != len(self.edge_labels):
            raise MeshError("one label is required per boundary edge")
        bad = set(np.unique(self.edge_labels)) - set(LABELS)
        if bad:
            raise MeshError(f"unknown boundary labels {sorted(bad)}")

        t = self.triangles
        edges = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
        uniq, counts = np.unique(edges, axis=0, return_counts=True)
        if counts.max() > 2:
            raise MeshError("an edge is shared by more than two triangles")
        single = {tuple(e) for e in uniq[counts == 1]}
        given = [tuple(e) for e in np.sort(self.boundary_edges, axis=1)]
        if len(set(given)) != len(given):
            raise MeshError("duplicate boundary edge")
        if set(given) != single:
            raise MeshError("boundary edges must be exactly the edges owned by one triangle")
        for label in LABELS:
            if not np.any(self.edge_labels == label):
                raise MeshError(f"no boundary edge labelled {label}")


def _check_label(label: str) -> None:
    if label not in LABELS:
        raise MeshError(f"label must be one of {LABELS}, got {label!r}")


def build_unit_square_mesh(n: int, gamma1_sides=("bottom",)) -> Mesh:
    """Triangulate [0, 1]^2 with ``n`` cells per side.

    Vertices are numbered row-major from the origin and every cell is cut
    along its (0, 0)-(1, 1) diagonal. Edges on ``gamma1_sides`` are labelled
    Gamma1, all others Gamma2.
    """
    if isinstance(gamma1_sides, str):
        gamma1_sides = (gamma1_sides,)
    sides = set(gamma1_sides)
    if int(n) != n or n < 1:
        raise MeshError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    if not sides:
        raise MeshError("gamma1_sides must be nonempty")
    if not sides <= set(SIDES):
        raise MeshError(f"unknown sides {sorted(sides - set(SIDES))}")
    if sides == set(SIDES):
        raise MeshError("gamma1_sides must leave at least one side for Gamma2")

    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)  # idx[j, i] -> point (i/n, j/n)
    coords = np.arange(n + 1) / n
    xx, yy = np.meshgrid(coords, coords)
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    v00 = idx[:-1, :-1].ravel()
    v10 = idx[:-1, 1:].ravel()
    v01 = idx[1:, :-1].ravel()
    v11 = idx[1:, 1:].ravel()
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)

    r = np.arange(n)
    side_edges = {
        "bottom": np.column_stack([idx[0, r], idx[0, r + 1]]),
        "right": np.column_stack([idx[r, n], idx[r + 1, n]]),
        "top": np.column_stack([idx[n, r + 1], idx[n, r]]),
        "left": np.column_stack([idx[r + 1, 0], idx[r, 0]]),
    }
    edges, labels = [], []
    for side in SIDES:
        edges.append(side_edges[side])
        labels += [GAMMA1 if side in sides else GAMMA2] * n
    return Mesh(vertices, triangles, np.concatenate(edges), np.array(labels))


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split every triangle into four congruent children through edge midpoints."""
    tri = mesh.triangles
    local = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    keys = np.sort(local, axis=1)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    nv = mesh.n_vertices
    mid = nv + inverse.reshape(3, -1).T  # columns: m01, m12, m20
    vertices = np.concatenate(
        [mesh.vertices, 0.5 * (mesh.vertices[uniq[:, 0]] + mesh.vertices[uniq[:, 1]])])

    a, b, c = tri.T
    m01, m12, m20 = mid.T
    children = np.stack([
        np.column_stack([a, m01, m20]),
        np.column_stack([m01, b, m12]),
        np.column_stack([m20, m12, c]),
        np.column_stack([m01, m12, m20]),
    ], axis=1).reshape(-1, 3)

    lookup = {tuple(e): nv + k for k, e in enumerate(uniq)}
    edges, labels = [], []
    for (i, j), label in zip(mesh.boundary_edges, mesh.edge_labels):
        m = lookup[(min(i, j), max(i, j))]
        edges += [(i, m), (m, j)]
        labels += [label, label]
    return Mesh(vertices, children, np.array(edges), np.array(labels))


def boundary_measure(mesh: Mesh, label: str) -> float:
    """Total length of the boundary edges carrying ``label``."""
    e = mesh.edges_with(label)
    d = mesh.vertices[e[:, 1]] - mesh.vertices[e[:, 0]]
    return float(np.sqrt((d ** 2).sum(axis=1)).sum())


def write_mesh(mesh: Mesh, path) -> None:
    """Dump ``mesh`` as plain text: ``v x y``, ``t i j k`` and ``e i j LABEL`` lines."""
    lines = [f"v {float(x)!r} {float(y)!r}" for x, y in mesh.vertices]
    lines += [f"t {i} {j} {k}" for i, j, k in mesh.triangles]
    lines += [f"e {i} {j} {lab}" for (i, j), lab in zip(mesh.boundary_edges, mesh.edge_labels)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    vertices, triangles, edges, labels = [], [], [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        kind = parts[0]
        try:
            if kind == "v":
                vertices.append((float(parts[1]), float(parts[2])))
            elif kind == "t":
                triangles.append(tuple(int(p) for p in parts[1:4]))
            elif kind == "e":
                edges.append((int(parts[1]), int(parts[2])))
                labels.append(parts[3])
            else:
                raise MeshError(f"line {lineno}: unknown record {kind!r}")
        except (IndexError, ValueError) as exc:
            raise MeshError(f"line {lineno}: malformed record") from exc
    return Mesh(np.array(vertices), np.array(triangles), np.array(edges), np.array(labels))
