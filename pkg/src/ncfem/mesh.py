"""Conforming triangulations with newest-vertex bisection (NVB).

A Triangulation stores vertices, counterclockwise triangles and one designated
refinement edge per triangle (local edge k is the edge opposite local vertex
k).  All derived incidence tables are built once; instances are immutable and
safe for concurrent reads.  `bisect` returns a new mesh and never mutates its
input; the `parent` attribute of a refined mesh maps each triangle to the
triangle of the input mesh it descends from.

The newest-vertex rule: when a triangle is bisected at the midpoint of its
refinement edge, the midpoint becomes the newest vertex of both children and
each child's refinement edge is its edge opposite that midpoint.

Text file format: 'nv nt' on the first line, then nv lines 'x y', then nt
lines 'i j k [r]' with optional refinement-edge index r in {0,1,2}.  Comments
start with '#'.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Triangulation", "MeshGeometry", "build_from_arrays", "bisect",
    "uniform_refine", "geometry", "builtin_domain", "read_mesh", "write_mesh",
]


@dataclass(frozen=True, eq=False)
class Triangulation:
    vertices: np.ndarray          # (nv, 2) float
    triangles: np.ndarray         # (nt, 3) int, counterclockwise
    ref_edge: np.ndarray          # (nt,) int in {0,1,2}, local edge index
    edges: np.ndarray             # (ne, 2) int, sorted pairs, lexicographic
    edge_of_triangle: np.ndarray  # (nt, 3) int, local edge k = (k+1, k+2) mod 3
    triangles_of_edge: tuple      # ne tuples of 1 or 2 triangle indices
    boundary_edge: np.ndarray     # (ne,) bool
    boundary_vertex: np.ndarray   # (nv,) bool
    parent: np.ndarray | None = field(default=None)  # (nt,) int into source mesh

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    def interior_edges(self):
        return np.flatnonzero(~self.boundary_edge)

    def interior_vertices(self):
        return np.flatnonzero(~self.boundary_vertex)


@dataclass(frozen=True, eq=False)
class MeshGeometry:
    h_T: np.ndarray      # (nt,) triangle diameter = longest edge
    area: np.ndarray     # (nt,) positive triangle area
    h_E: np.ndarray      # (ne,) edge length
    nu_E: np.ndarray     # (ne, 2) unit normal, from lower- to higher-indexed triangle
    tau_E: np.ndarray    # (ne, 2) unit tangent, nu rotated by +90 degrees
    h_max: float


def _signed_area(vertices, triangles):
    p = vertices[triangles]
    a = p[:, 1] - p[:, 0]
    b = p[:, 2] - p[:, 0]
    return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])


def _edge_lengths_local(vertices, triangles):
    """Lengths of local edges 0,1,2 (edge k opposite vertex k), shape (nt, 3)."""
    p = vertices[triangles]
    out = np.empty((len(triangles), 3))
    for k in range(3):
        out[:, k] = np.linalg.norm(p[:, (k + 2) % 3] - p[:, (k + 1) % 3], axis=1)
    return out


def _build_edge_tables(nv, triangles):
    nt = len(triangles)
    pairs = np.empty((3 * nt, 2), dtype=np.int64)
    for k in range(3):
        pairs[k * nt:(k + 1) * nt, 0] = triangles[:, (k + 1) % 3]
        pairs[k * nt:(k + 1) * nt, 1] = triangles[:, (k + 2) % 3]
    pairs.sort(axis=1)
    edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
    edge_of_triangle = np.empty((nt, 3), dtype=np.int64)
    for k in range(3):
        edge_of_triangle[:, k] = inverse[k * nt:(k + 1) * nt]

    count = np.bincount(edge_of_triangle.ravel(), minlength=len(edges))
    if count.max(initial=0) > 2:
        raise ValueError("non-conforming input: an edge is shared by more than 2 triangles")

    adj = [[] for _ in range(len(edges))]
    for t in range(nt):
        for k in range(3):
            adj[edge_of_triangle[t, k]].append(t)
    triangles_of_edge = tuple(tuple(a) for a in adj)

    boundary_edge = count == 1
    boundary_vertex = np.zeros(nv, dtype=bool)
    boundary_vertex[edges[boundary_edge].ravel()] = True
    return edges, edge_of_triangle, triangles_of_edge, boundary_edge, boundary_vertex


def _finalize(vertices, triangles, ref_edge, parent=None):
    tables = _build_edge_tables(len(vertices), triangles)
    mesh = Triangulation(vertices, triangles, ref_edge, *tables, parent=parent)
    assert (_signed_area(vertices, triangles) > 0).all()
    return mesh


def _hanging_node_check(vertices, edges):
    """Reject vertices lying strictly inside an edge (O(nv*ne), input meshes only)."""
    a = vertices[edges[:, 0]]
    b = vertices[edges[:, 1]]
    ab = b - a
    ab2 = np.einsum("ij,ij->i", ab, ab)
    for i, v in enumerate(vertices):
        av = v - a
        t = np.einsum("ij,ij->i", av, ab) / ab2
        proj = a + t[:, None] * ab
        dist2 = np.einsum("ij,ij->i", v - proj, v - proj)
        on_open_segment = (dist2 < 1e-24 * ab2) & (t > 1e-10) & (t < 1 - 1e-10)
        on_open_segment &= (edges[:, 0] != i) & (edges[:, 1] != i)
        if on_open_segment.any():
            raise ValueError(f"non-conforming input: vertex {i} hangs on an edge")


def _longest_edge_assignment(vertices, triangles):
    lengths = _edge_lengths_local(vertices, triangles)
    ref = np.empty(len(triangles), dtype=np.int64)
    for t in range(len(triangles)):
        lmax = lengths[t].max()
        candidates = np.flatnonzero(lengths[t] >= lmax * (1.0 - 1e-12))
        # tie break: smallest global index of the vertex opposite the edge
        ref[t] = candidates[np.argmin(triangles[t, candidates])]
    return ref


def build_from_arrays(vertices, triangles, ref_edge=None) -> Triangulation:
    """Build a Triangulation from vertex coordinates and index triples.

    Clockwise triangles are reoriented.  Unless `ref_edge` is given, the
    refinement edge of each triangle is its longest edge, with ties broken by
    the smallest global index of the opposite vertex.
    """
    vertices = np.ascontiguousarray(vertices, dtype=float)
    triangles = np.ascontiguousarray(triangles, dtype=np.int64)
    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise ValueError("vertices must be an (nv, 2) array")
    if not np.isfinite(vertices).all():
        raise ValueError("vertex coordinates must be finite")
    if triangles.ndim != 2 or triangles.shape[1] != 3:
        raise ValueError("triangles must be an (nt, 3) array")
    if triangles.min(initial=0) < 0 or triangles.max(initial=-1) >= len(vertices):
        raise ValueError("triangle vertex index out of range")
    if len(np.unique(vertices, axis=0)) != len(vertices):
        raise ValueError("duplicate vertices")

    triangles = triangles.copy()
    signed = _signed_area(vertices, triangles)
    flip = signed < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    signed = np.abs(signed)
    scale = _edge_lengths_local(vertices, triangles).max(axis=1) ** 2
    if (signed <= 1e-14 * scale).any():
        raise ValueError("zero-area triangle")

    if ref_edge is None:
        ref_edge = _longest_edge_assignment(vertices, triangles)
    else:
        ref_edge = np.asarray(ref_edge, dtype=np.int64).copy()
        if ref_edge.shape != (len(triangles),) or ((ref_edge < 0) | (ref_edge > 2)).any():
            raise ValueError("ref_edge must hold one local edge index in 0..2 per triangle")
        # a flipped triangle keeps its geometric refinement edge: local edges
        # 1 and 2 swap when vertices 1 and 2 swap
        swap = flip & (ref_edge > 0)
        ref_edge[swap] = 3 - ref_edge[swap]

    edges_preview = np.unique(
        np.sort(triangles[:, [[1, 2], [2, 0], [0, 1]]].reshape(-1, 2), axis=1), axis=0)
    _hanging_node_check(vertices, edges_preview)
    return _finalize(vertices, triangles, ref_edge)


def bisect(mesh: Triangulation, marked) -> Triangulation:
    """Bisect the marked triangles, with conforming closure.

    Every marked triangle is bisected through its refinement edge at least
    once.  The closure marks the refinement edge of any triangle one of whose
    edges is marked, until a fixed point is reached; afterwards each triangle
    holds 0, 1, 2 or 3 marked edges and is split into 1, 2, 3 or 4 children
    whose refinement edges follow the newest-vertex rule.
    """
    marked = np.asarray(sorted(set(int(t) for t in marked)), dtype=np.int64)
    if len(marked) and (marked.min() < 0 or marked.max() >= mesh.n_triangles):
        raise ValueError("marked triangle index out of range")
    if len(marked) == 0:
        return Triangulation(mesh.vertices, mesh.triangles, mesh.ref_edge,
                             mesh.edges, mesh.edge_of_triangle,
                             mesh.triangles_of_edge, mesh.boundary_edge,
                             mesh.boundary_vertex,
                             parent=np.arange(mesh.n_triangles))

    eot = mesh.edge_of_triangle
    ref = mesh.ref_edge
    ref_global = eot[np.arange(mesh.n_triangles), ref]

    marked_edge = np.zeros(mesh.n_edges, dtype=bool)
    marked_edge[ref_global[marked]] = True
    while True:
        needs = marked_edge[eot].any(axis=1) & ~marked_edge[ref_global]
        if not needs.any():
            break
        marked_edge[ref_global[needs]] = True

    # midpoints of marked edges, appended in edge order
    marked_ids = np.flatnonzero(marked_edge)
    mid_of_edge = np.full(mesh.n_edges, -1, dtype=np.int64)
    mid_of_edge[marked_ids] = mesh.n_vertices + np.arange(len(marked_ids))
    midpoints = 0.5 * (mesh.vertices[mesh.edges[marked_ids, 0]]
                       + mesh.vertices[mesh.edges[marked_ids, 1]])
    vertices = np.vstack([mesh.vertices, midpoints])

    new_tris, new_ref, new_parent = [], [], []

    def emit(tri, r, parent_t):
        new_tris.append(tri)
        new_ref.append(r)
        new_parent.append(parent_t)

    def split(p, a, b, edge_pa, edge_bp, m, t):
        """Bisect CCW triangle (p, a, b) with refinement edge (a, b) at m.

        edge_pa / edge_bp are the global ids of the remaining two edges (or -1
        for edges created by an earlier split, which are never marked)."""
        for peak, base0, base1, contained in (
                (p, a, m, edge_pa),   # child (p, a, m), refinement edge (p, a)
                (p, m, b, edge_bp)):  # child (p, m, b), refinement edge (b, p)
            if contained >= 0 and marked_edge[contained]:
                m2 = mid_of_edge[contained]
                if base1 == m:   # child (p, a, m): split edge (p, a)
                    split(base1, peak, base0, -1, -1, m2, t)
                else:            # child (p, m, b): split edge (b, p)
                    split(base0, base1, peak, -1, -1, m2, t)
            else:
                if base1 == m:
                    emit((peak, base0, base1), 2, t)  # ref edge (p, a), opposite m
                else:
                    emit((peak, base0, base1), 1, t)  # ref edge (b, p), opposite m

    for t in range(mesh.n_triangles):
        e_ref = ref_global[t]
        if not marked_edge[e_ref]:
            emit(tuple(mesh.triangles[t]), ref[t], t)
            continue
        k = ref[t]
        p = mesh.triangles[t, k]
        a = mesh.triangles[t, (k + 1) % 3]
        b = mesh.triangles[t, (k + 2) % 3]
        split(p, a, b, eot[t, (k + 2) % 3], eot[t, (k + 1) % 3],
              mid_of_edge[e_ref], t)

    out = _finalize(vertices,
                    np.asarray(new_tris, dtype=np.int64),
                    np.asarray(new_ref, dtype=np.int64),
                    parent=np.asarray(new_parent, dtype=np.int64))
    assert abs(out.n_vertices - mesh.n_vertices - len(marked_ids)) == 0
    return out


def uniform_refine(mesh: Triangulation) -> Triangulation:
    """Two bisection sweeps over all triangles: quarters every triangle."""
    first = bisect(mesh, range(mesh.n_triangles))
    second = bisect(first, range(first.n_triangles))
    parent = first.parent[second.parent]
    return Triangulation(second.vertices, second.triangles, second.ref_edge,
                         second.edges, second.edge_of_triangle,
                         second.triangles_of_edge, second.boundary_edge,
                         second.boundary_vertex, parent=parent)


def refine(mesh: Triangulation, levels: int) -> Triangulation:
    for _ in range(levels):
        mesh = uniform_refine(mesh)
    return mesh


def geometry(mesh: Triangulation) -> MeshGeometry:
    """Per-triangle and per-edge geometric quantities.

    nu_E points from the lower-indexed adjacent triangle into the
    higher-indexed one, and outward on boundary edges; tau_E is nu_E rotated
    by +90 degrees.
    """
    lengths = _edge_lengths_local(mesh.vertices, mesh.triangles)
    h_T = lengths.max(axis=1)
    area = _signed_area(mesh.vertices, mesh.triangles)

    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    vec = b - a
    h_E = np.linalg.norm(vec, axis=1)
    nu = np.stack([vec[:, 1], -vec[:, 0]], axis=1) / h_E[:, None]

    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    mids = 0.5 * (a + b)
    from_tri = np.fromiter((adj[0] for adj in mesh.triangles_of_edge),
                           dtype=np.int64, count=mesh.n_edges)
    flip = np.einsum("ij,ij->i", nu, mids - centroids[from_tri]) < 0
    nu[flip] *= -1.0
    tau = np.stack([-nu[:, 1], nu[:, 0]], axis=1)
    return MeshGeometry(h_T=h_T, area=area, h_E=h_E, nu_E=nu, tau_E=tau,
                        h_max=float(h_T.max()))


def builtin_domain(name: str) -> Triangulation:
    """Built-in initial meshes: 'unit_square' (2 triangles) or 'l_shape'
    ((-1,1)^2 minus the closed fourth quadrant, 6 triangles, re-entrant
    corner at the origin)."""
    if name == "unit_square":
        vertices = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
        triangles = [(0, 1, 2), (0, 2, 3)]
    elif name == "l_shape":
        vertices = [(-1.0, -1.0), (0.0, -1.0), (-1.0, 0.0), (0.0, 0.0),
                    (1.0, 0.0), (-1.0, 1.0), (0.0, 1.0), (1.0, 1.0)]
        triangles = [(0, 1, 3), (0, 3, 2), (2, 3, 5), (3, 6, 5),
                     (3, 4, 7), (3, 7, 6)]
    else:
        raise ValueError(f"unknown builtin domain {name!r}, have: unit_square, l_shape")
    return build_from_arrays(vertices, triangles)


def read_mesh(path) -> Triangulation:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                rows.append(line.split())
    if not rows:
        raise ValueError(f"empty mesh file {path}")
    nv, nt = int(rows[0][0]), int(rows[0][1])
    if len(rows) != 1 + nv + nt:
        raise ValueError(f"mesh file {path}: expected {1 + nv + nt} records, got {len(rows)}")
    vertices = np.array([[float(r[0]), float(r[1])] for r in rows[1:1 + nv]])
    tri_rows = rows[1 + nv:]
    triangles = np.array([[int(r[0]), int(r[1]), int(r[2])] for r in tri_rows])
    if all(len(r) >= 4 for r in tri_rows):
        ref_edge = np.array([int(r[3]) for r in tri_rows])
    else:
        ref_edge = None
    return build_from_arrays(vertices, triangles, ref_edge=ref_edge)


def write_mesh(mesh: Triangulation, path):
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices} {mesh.n_triangles}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for tri, r in zip(mesh.triangles, mesh.ref_edge):
            fh.write(f"{tri[0]} {tri[1]} {tri[2]} {r}\n")
