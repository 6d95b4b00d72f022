import numpy as np
import pytest

from ncfem.mesh import builtin_domain, refine
from ncfem.spaces import DiscreteFunction, SpaceTag, build_dofmap


@pytest.fixture(scope="session")
def square2():
    return builtin_domain("unit_square")


@pytest.fixture(scope="session")
def square8():
    return refine(builtin_domain("unit_square"), 1)


@pytest.fixture(scope="session")
def square32():
    return refine(builtin_domain("unit_square"), 2)


@pytest.fixture(scope="session")
def lshape():
    return builtin_domain("l_shape")


def random_function(dofmap, rng, n_components=1, scale=1.0):
    return DiscreteFunction(space=dofmap.space, n_components=n_components,
                            coeffs=scale * rng.standard_normal(
                                n_components * dofmap.n_free))


def morley_dofmap(mesh):
    return build_dofmap(mesh, SpaceTag.MORLEY)


def cr_dofmap(mesh):
    return build_dofmap(mesh, SpaceTag.CROUZEIX_RAVIART)


def mean_gradient_by_parts(mesh, field, edge_degree=16):
    """Elementwise mean of grad(field) via the divergence theorem; an oracle
    that needs edge quadrature only and is exact to round-off for smooth
    fields once the edge rule resolves them."""
    from ncfem.mesh import geometry
    from ncfem.quadrature import quad_edge

    geom = geometry(mesh)
    rule = quad_edge(edge_degree)
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    pts = a[:, None, :] + rule.points[None, :, None] * (b - a)[:, None, :]
    vals = field.value(pts)
    edge_int = (vals @ rule.weights) * geom.h_E
    out = np.zeros((mesh.n_triangles, 2))
    for t in range(mesh.n_triangles):
        cent = mesh.vertices[mesh.triangles[t]].mean(axis=0)
        for k in range(3):
            e = mesh.edge_of_triangle[t, k]
            va, vb = mesh.edges[e]
            evec = mesh.vertices[vb] - mesh.vertices[va]
            n = np.array([evec[1], -evec[0]]) / np.linalg.norm(evec)
            mid = 0.5 * (mesh.vertices[va] + mesh.vertices[vb])
            if np.dot(n, mid - cent) < 0:
                n = -n
            out[t] += edge_int[e] * n
    return out / geom.area[:, None]


def mean_hessian_by_parts(mesh, field, edge_degree=16):
    """Elementwise mean of the hessian via edge integrals of the gradient."""
    from ncfem.mesh import geometry
    from ncfem.quadrature import quad_edge

    geom = geometry(mesh)
    rule = quad_edge(edge_degree)
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    pts = a[:, None, :] + rule.points[None, :, None] * (b - a)[:, None, :]
    grads = field.gradient(pts)
    edge_int = np.einsum("eqd,q->ed", grads, rule.weights) * geom.h_E[:, None]
    out = np.zeros((mesh.n_triangles, 2, 2))
    for t in range(mesh.n_triangles):
        cent = mesh.vertices[mesh.triangles[t]].mean(axis=0)
        for k in range(3):
            e = mesh.edge_of_triangle[t, k]
            va, vb = mesh.edges[e]
            evec = mesh.vertices[vb] - mesh.vertices[va]
            n = np.array([evec[1], -evec[0]]) / np.linalg.norm(evec)
            mid = 0.5 * (mesh.vertices[va] + mesh.vertices[vb])
            if np.dot(n, mid - cent) < 0:
                n = -n
            out[t] += np.outer(edge_int[e], n)
    out = 0.5 * (out + np.transpose(out, (0, 2, 1)))
    return out / geom.area[:, None, None]
