"""Interpolation operators, elementwise L2 projections and oscillations.

Edge means default to degree-4 Gauss rules; that is exact for the cubic edge
traces arising from quartic fields and below.  Non-polynomial inputs can pass
a higher `edge_degree` where an identity is to hold to round-off (the
commuting identities D^2_pw I_M = Pi_0 D^2 and grad_pw I_CR = Pi_0 grad
require exact edge means).  Oscillations of general data use degree-6 volume
quadrature to resolve (I - Pi_k) honestly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import geometry
from .quadrature import quad_edge, quad_triangle
from .spaces import (DiscreteFunction, DofMap, SpaceTag, basis_tables,
                     function_from_element_values, local_coefficients,
                     physical_points)

__all__ = [
    "morley_interpolate", "cr_interpolate", "morley_dof_values",
    "cr_dof_values", "l2_project", "oscillation", "ElementPolynomials",
    "transfer_morley",
]


def _edge_points(mesh, rule):
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    return a[:, None, :] + rule.points[None, :, None] * (b - a)[:, None, :]


def morley_dof_values(mesh, v, edge_degree: int = 4):
    """All Morley dof functionals of a smooth field: point values at every
    vertex, then mean normal derivatives (against the global normal) over
    every edge.  The elementwise commuting identity D^2_pw I_M = Pi_0 D^2
    holds for this full dof vector whether or not v satisfies the clamped
    boundary conditions."""
    geom = geometry(mesh)
    rule = quad_edge(edge_degree)
    pts = _edge_points(mesh, rule)
    grads = v.gradient(pts)                           # (ne, nq, 2)
    gn = np.einsum("eqd,ed->eq", grads, geom.nu_E)
    return np.concatenate([v.value(mesh.vertices), gn @ rule.weights])


def morley_interpolate(mesh, dofmap: DofMap, v, edge_degree: int = 4
                       ) -> DiscreteFunction:
    """Morley interpolation into the clamped space: vertex dofs take the
    point values, edge dofs the edge means of the normal derivative;
    constrained boundary dofs are dropped.  Accepts a Field or a tuple of
    Fields (component pairs)."""
    if dofmap.space is not SpaceTag.MORLEY:
        raise ValueError("morley_interpolate needs a Morley dof map")
    fields = v if isinstance(v, (tuple, list)) else (v,)
    rows = [morley_dof_values(mesh, f, edge_degree) for f in fields]
    return function_from_element_values(dofmap, np.stack(rows), len(fields))


def cr_dof_values(mesh, v, edge_degree: int = 4):
    """Edge means of v over every edge (all CR dof functionals)."""
    rule = quad_edge(edge_degree)
    return v.value(_edge_points(mesh, rule)) @ rule.weights


def cr_interpolate(mesh, dofmap: DofMap, v, edge_degree: int = 4) -> DiscreteFunction:
    """Crouzeix-Raviart interpolation into the clamped space."""
    if dofmap.space is not SpaceTag.CROUZEIX_RAVIART:
        raise ValueError("cr_interpolate needs a CR dof map")
    return function_from_element_values(dofmap, cr_dof_values(mesh, v, edge_degree))


@dataclass(frozen=True, eq=False)
class ElementPolynomials:
    """Per-element polynomials sum_m coeffs[t, m] * mono_m((x - center) / scale),
    monomials 1, xi, eta (degree k <= 1)."""
    coeffs: np.ndarray   # (nt, 1) or (nt, 3)
    center: np.ndarray   # (nt, 2)
    scale: np.ndarray    # (nt,)
    degree: int

    def evaluate(self, tris, pts):
        loc = (pts - self.center[tris][:, None, :]) / self.scale[tris][:, None, None]
        c = self.coeffs[tris]
        out = np.broadcast_to(c[:, None, 0], loc.shape[:-1]).copy()
        if self.degree >= 1:
            out += c[:, None, 1] * loc[..., 0] + c[:, None, 2] * loc[..., 1]
        return out


def l2_project(mesh, g, k: int, degree: int = 6) -> ElementPolynomials:
    """Elementwise L2-orthogonal projection of g onto P_k, k in {0, 1}."""
    if k not in (0, 1):
        raise ValueError("l2_project supports k in {0, 1}")
    geom = geometry(mesh)
    rule = quad_triangle(degree)
    xq = physical_points(mesh, rule.points)
    wdx = 2.0 * geom.area[:, None] * rule.weights
    gq = g.value(xq) if hasattr(g, "value") else g(xq)
    center = mesh.vertices[mesh.triangles].mean(axis=1)
    scale = geom.h_T
    if k == 0:
        mean = (wdx * gq).sum(axis=1) / geom.area
        coeffs = mean[:, None]
    else:
        loc = (xq - center[:, None, :]) / scale[:, None, None]
        mono = np.stack([np.ones_like(loc[..., 0]), loc[..., 0], loc[..., 1]],
                        axis=-1)                      # (nt, nq, 3)
        M = np.einsum("tq,tqi,tqj->tij", wdx, mono, mono)
        rhs = np.einsum("tq,tqi->ti", wdx * gq, mono)
        coeffs = np.linalg.solve(M, rhs[..., None])[..., 0]
    return ElementPolynomials(coeffs=coeffs, center=center, scale=scale, degree=k)


def oscillation(mesh, g, k: int, p: int, degree: int = 6):
    """Oscillation osc_k(g)^2 per element and its square-rooted total,
    osc_k(g) = || h^p (I - Pi_k) g ||, p = 1 for second-order and p = 2 for
    fourth-order problems."""
    if p not in (1, 2):
        raise ValueError("oscillation power p must be 1 or 2")
    geom = geometry(mesh)
    rule = quad_triangle(degree)
    xq = physical_points(mesh, rule.points)
    wdx = 2.0 * geom.area[:, None] * rule.weights
    gq = g.value(xq) if hasattr(g, "value") else g(xq)
    proj = l2_project(mesh, g, k, degree=degree)
    diff = gq - proj.evaluate(np.arange(mesh.n_triangles), xq)
    per_element = geom.h_T ** (2 * p) * (wdx * diff ** 2).sum(axis=1)
    return per_element, float(np.sqrt(per_element.sum()))


def transfer_morley(mesh_c, dofmap_c: DofMap, U: DiscreteFunction,
                    mesh_f, dofmap_f: DofMap) -> DiscreteFunction:
    """Re-evaluate the Morley dof functionals of a coarse function on a
    refined mesh (mesh_f must descend from mesh_c, i.e. carry `parent`).

    At points on coarse inter-element edges, where the nonconforming function
    jumps, the trace from the lowest-indexed coarse ancestor among the
    adjacent fine triangles is used; the result is a deterministic Newton
    starting iterate, not an interpolant in any optimal sense.
    """
    parent = mesh_f.parent
    if parent is None or len(parent) != mesh_f.n_triangles:
        raise ValueError("fine mesh does not carry a parent map onto the coarse mesh")
    if parent.max(initial=-1) >= mesh_c.n_triangles:
        raise ValueError("parent map does not match the coarse mesh")
    # geometric containment guards against a parent map onto a different mesh
    pc = mesh_c.vertices[mesh_c.triangles[parent]]
    cent = mesh_f.vertices[mesh_f.triangles].mean(axis=1)
    M = np.stack([pc[:, 1] - pc[:, 0], pc[:, 2] - pc[:, 0]], axis=-1)
    lam = np.linalg.solve(M, (cent - pc[:, 0])[..., None])[..., 0]
    if (lam.min() < -1e-10) or ((lam.sum(axis=1)).max() > 1 + 1e-10):
        raise ValueError("parent map does not nest in the coarse mesh")
    tab = basis_tables(mesh_c, SpaceTag.MORLEY)
    geom_f = geometry(mesh_f)

    # lowest coarse ancestor seen from each fine vertex / fine edge
    vparent = np.full(mesh_f.n_vertices, mesh_c.n_triangles, dtype=np.int64)
    np.minimum.at(vparent, mesh_f.triangles.ravel(), np.repeat(parent, 3))
    eparent = np.full(mesh_f.n_edges, mesh_c.n_triangles, dtype=np.int64)
    np.minimum.at(eparent, mesh_f.edge_of_triangle.ravel(), np.repeat(parent, 3))

    mids = 0.5 * (mesh_f.vertices[mesh_f.edges[:, 0]]
                  + mesh_f.vertices[mesh_f.edges[:, 1]])
    rows = []
    for comp in range(U.n_components):
        cu = local_coefficients(dofmap_c, U, comp)
        poly = np.einsum("tmj,tj->tm", tab.C, cu)     # monomial coefficients
        vvals = np.einsum("vm,vm->v", poly[vparent],
                          tab.monomials_at(vparent, mesh_f.vertices))
        gmono = tab.mono_grads_at(eparent, mids)      # (ne, 6, 2)
        gvals = np.einsum("em,emd,ed->e", poly[eparent], gmono, geom_f.nu_E)
        rows.append(np.concatenate([vvals, gvals]))
    return function_from_element_values(dofmap_f, np.stack(rows), U.n_components)
