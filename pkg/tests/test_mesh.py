import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncfem.mesh import (bisect, build_from_arrays, builtin_domain, geometry,
                        read_mesh, refine, uniform_refine, write_mesh)

SQUARE_V = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
SQUARE_T = [(0, 1, 2), (0, 2, 3)]


def min_angle(mesh):
    p = mesh.vertices[mesh.triangles]
    angles = []
    for k in range(3):
        a = p[:, (k + 1) % 3] - p[:, k]
        b = p[:, (k + 2) % 3] - p[:, k]
        cosang = np.einsum("td,td->t", a, b) / (
            np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        angles.append(np.arccos(np.clip(cosang, -1, 1)))
    return float(np.min(angles))


def test_unit_square_tables():
    m = build_from_arrays(SQUARE_V, SQUARE_T)
    assert m.n_edges == 5
    assert len(m.interior_edges()) == 1
    assert int(m.boundary_edge.sum()) == 4
    diag = m.edges[m.interior_edges()[0]]
    assert set(diag) == {0, 2}


def test_reference_triangle_all_boundary():
    m = build_from_arrays([(0, 0), (1, 0), (0, 1)], [(0, 1, 2)])
    assert m.n_edges == 3
    assert m.boundary_edge.all()
    assert m.boundary_vertex.all()


def test_clockwise_input_reoriented():
    m = build_from_arrays([(0, 0), (1, 0), (0, 1)], [(0, 2, 1)])
    p = m.vertices[m.triangles[0]]
    a, b = p[1] - p[0], p[2] - p[0]
    assert a[0] * b[1] - a[1] * b[0] > 0


def test_duplicate_vertices_rejected():
    with pytest.raises(ValueError, match="duplicate"):
        build_from_arrays([(0, 0), (1, 0), (0, 1), (0, 0)], [(0, 1, 2)])


def test_degenerate_triangle_rejected():
    with pytest.raises(ValueError, match="area"):
        build_from_arrays([(0, 0), (1, 0), (2, 0)], [(0, 1, 2)])


def test_edge_shared_three_times_rejected():
    v = [(0, 0), (1, 0), (0, 1), (0, -1), (1, 1)]
    t = [(0, 1, 2), (0, 3, 1), (0, 1, 4)]
    with pytest.raises(ValueError, match="non-conforming"):
        build_from_arrays(v, t)


def test_hanging_node_rejected():
    v = [(0, 0), (2, 0), (0, 2), (1, 0), (2, -2)]
    t = [(0, 1, 2), (0, 3, 4)]
    with pytest.raises(ValueError, match="hangs"):
        build_from_arrays(v, t)


def test_initial_refinement_edge_is_longest():
    m = build_from_arrays(SQUARE_V, SQUARE_T)
    for t in range(2):
        k = m.ref_edge[t]
        tri = m.triangles[t]
        edge = {tri[(k + 1) % 3], tri[(k + 2) % 3]}
        assert edge == {0, 2}  # the diagonal


def test_bisect_both_counts():
    m = build_from_arrays(SQUARE_V, SQUARE_T)
    m2 = bisect(m, {0, 1})
    assert (m2.n_triangles, m2.n_vertices, m2.n_edges) == (4, 5, 8)
    assert len(m2.interior_edges()) == 4


def test_bisect_rejects_out_of_range():
    m = build_from_arrays(SQUARE_V, SQUARE_T)
    with pytest.raises(ValueError, match="range"):
        bisect(m, {5})


def test_bisect_empty_is_identity():
    m = build_from_arrays(SQUARE_V, SQUARE_T)
    m2 = bisect(m, set())
    assert np.array_equal(m2.triangles, m.triangles)
    assert np.array_equal(m2.vertices, m.vertices)


def test_closure_propagates_through_shared_refinement_edge():
    m = build_from_arrays(SQUARE_V, SQUARE_T)
    m2 = bisect(m, {0})
    assert m2.n_triangles == 4


def test_uniform_refine_quarters():
    m = build_from_arrays(SQUARE_V, SQUARE_T)
    m2 = uniform_refine(m)
    assert m2.n_triangles == 8
    counts = np.bincount(m2.parent, minlength=2)
    assert (counts == 4).all()
    assert geometry(m2).h_max < geometry(m).h_max


def test_triangle_count_strictly_increases():
    m = builtin_domain("l_shape")
    for _ in range(3):
        m2 = uniform_refine(m)
        assert m2.n_triangles > m.n_triangles
        m = m2


def test_min_angle_stable_under_refinement():
    for name in ("unit_square", "l_shape"):
        m = builtin_domain(name)
        angles = [min_angle(m)]
        for _ in range(4):
            m = uniform_refine(m)
            angles.append(min_angle(m))
        assert min(angles) >= angles[0] / 2 - 1e-12
        for prev, cur in zip(angles[2:], angles[3:]):
            assert cur >= prev - 1e-12


def test_geometry_reference_triangle():
    m = build_from_arrays([(0, 0), (1, 0), (0, 1)], [(0, 1, 2)])
    g = geometry(m)
    assert g.h_T[0] == pytest.approx(np.sqrt(2))
    assert g.area[0] == pytest.approx(0.5)
    assert g.h_max == pytest.approx(np.sqrt(2))
    assert np.abs(np.einsum("ed,ed->e", g.nu_E, g.tau_E)).max() == 0.0
    assert np.linalg.norm(g.nu_E, axis=1) == pytest.approx(1.0)


def test_normal_orientation():
    m = build_from_arrays(SQUARE_V, SQUARE_T)
    g = geometry(m)
    centroids = m.vertices[m.triangles].mean(axis=1)
    for e in range(m.n_edges):
        adj = m.triangles_of_edge[e]
        mid = m.vertices[m.edges[e]].mean(axis=0)
        assert np.dot(g.nu_E[e], mid - centroids[adj[0]]) > 0
        if len(adj) == 2:
            assert np.dot(g.nu_E[e], centroids[adj[1]] - centroids[adj[0]]) > 0


def test_builtin_domains():
    sq = builtin_domain("unit_square")
    assert sq.n_triangles == 2
    L = builtin_domain("l_shape")
    assert L.n_triangles == 6
    assert int(L.boundary_vertex.sum()) == 8
    assert any(np.allclose(v, (0, 0)) for v in L.vertices[L.boundary_vertex])
    with pytest.raises(ValueError):
        builtin_domain("pentagon")


def _barycentric(tri_pts, x):
    M = np.column_stack([tri_pts[1] - tri_pts[0], tri_pts[2] - tri_pts[0]])
    lam = np.linalg.solve(M, x - tri_pts[0])
    return np.array([1 - lam.sum(), lam[0], lam[1]])


@settings(max_examples=40, deadline=None)
@given(st.sets(st.integers(0, 7), max_size=8), st.integers(0, 1))
def test_bisect_invariants(marked, domain_idx):
    base = builtin_domain(["unit_square", "l_shape"][domain_idx])
    m = uniform_refine(base)
    marked = {t for t in marked if t < m.n_triangles}
    m2 = bisect(m, marked)
    # conformity is asserted by the edge tables; check area conservation
    assert geometry(m2).area.sum() == pytest.approx(geometry(m).area.sum(),
                                                    rel=1e-12)
    # every marked triangle was actually bisected
    child_counts = np.bincount(m2.parent, minlength=m.n_triangles)
    for t in marked:
        assert child_counts[t] >= 2
    # nesting: children live inside their parents
    for c in range(m2.n_triangles):
        parent_pts = m.vertices[m.triangles[m2.parent[c]]]
        for v in m2.vertices[m2.triangles[c]]:
            lam = _barycentric(parent_pts, v)
            assert lam.min() > -1e-10


def test_mesh_file_roundtrip(tmp_path):
    m = uniform_refine(builtin_domain("l_shape"))
    path = tmp_path / "mesh.txt"
    write_mesh(m, path)
    m2 = read_mesh(path)
    assert np.array_equal(m.triangles, m2.triangles)
    assert np.allclose(m.vertices, m2.vertices)
    assert np.array_equal(m.ref_edge, m2.ref_edge)


def test_mesh_file_comments_and_optional_refinement_edge(tmp_path):
    path = tmp_path / "square.txt"
    path.write_text("# two-triangle square\n4 2\n0 0\n1 0\n1 1\n0 1\n"
                    "0 1 2  # first\n0 2 3\n")
    m = read_mesh(path)
    assert m.n_triangles == 2
    # without explicit r the longest edge is chosen
    ref = build_from_arrays(SQUARE_V, SQUARE_T)
    assert np.array_equal(m.ref_edge, ref.ref_edge)
