"""Explicit residual a posteriori estimators for the Morley schemes and the
Crouzeix-Raviart a priori diagnostic terms.

Navier-Stokes (Morley):
    eta_K^2 = h_K^4 || curl(-Lap u_M grad u_M) - f ||_{L2(K)}^2
    eta_E^2 = h_E   || [D^2 u_M]_E tau_E ||_{L2(E)}^2
            + h_E^3 || [Lap u_M grad u_M]_E . tau_E ||_{L2(E)}^2
            + h_E^3 || {Lap u_M grad u_M}_E . tau_E ||_{L2(E)}^2
The average contribution (third line) is reported separately as well: its
efficiency is unknown, only its decay is asserted.  For quadratics the
elementwise curl of Lap(u) grad(u) vanishes identically (grad Lap u_M = 0),
so the volume residual reduces to the data f.

Von Karman (Morley), with the optional verification load g in the second
equation (g = 0 recovers the plain plate system):
    eta_K^2 = h_K^4 (|| [u,v] + f ||_{L2(K)}^2 + || [u,u] - 2g ||_{L2(K)}^2)
    eta_E^2 = h_E (|| [D^2 u]_E tau_E ||^2 + || [D^2 v]_E tau_E ||^2)

Jumps and averages on boundary edges are the traces themselves.  All sums
run over all edges.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import geometry
from .problems import ProblemKind, ProblemSpec
from .quadrature import quad_edge, quad_triangle
from .spaces import (DiscreteFunction, DofMap, SpaceTag, basis_tables,
                     local_coefficients, physical_points)
from .interpolation import oscillation

__all__ = [
    "EstimatorReport", "estimate_ns_morley", "estimate_vk_morley",
    "cr_apriori_terms", "broken_energy_error", "estimate",
]

ESTIMATOR_VOLUME_DEGREE = 6
ESTIMATOR_EDGE_DEGREE = 4


@dataclass(frozen=True, eq=False)
class EstimatorReport:
    eta_K_sq: np.ndarray      # (nt,)
    eta_E_sq: np.ndarray      # (ne,)
    avg_term_S_sq: float      # NS only: the separately-tracked average term
    osc_sq: float             # oscillation of the data, k and p per problem
    eta_total: float          # sqrt(sum eta_K^2 + sum eta_E^2)

    def total_from_parts(self):
        return float(np.sqrt(self.eta_K_sq.sum() + self.eta_E_sq.sum()))


def _edge_sides(mesh):
    """(t_plus, t_minus) per edge; t_minus = -1 on boundary edges.  t_plus is
    the lower-indexed adjacent triangle, fixing the sign of jumps."""
    ne = mesh.n_edges
    t_plus = np.empty(ne, dtype=np.int64)
    t_minus = np.full(ne, -1, dtype=np.int64)
    for e, adj in enumerate(mesh.triangles_of_edge):
        t_plus[e] = adj[0]
        if len(adj) == 2:
            t_minus[e] = adj[1]
    return t_plus, t_minus


def _hessians(mesh, dofmap, c_loc):
    hess = basis_tables(mesh, SpaceTag.MORLEY).hess
    return np.einsum("tjab,tj->tab", hess, c_loc)


def _hessian_jump_term(mesh, geom, H, t_plus, t_minus):
    """h_E || [D^2 u]_E tau_E ||^2_{L2(E)} per edge, exact for constants."""
    jump = H[t_plus].copy()
    interior = t_minus >= 0
    jump[interior] -= H[t_minus[interior]]
    vec = np.einsum("eab,eb->ea", jump, geom.tau_E)
    return geom.h_E ** 2 * np.einsum("ea,ea->e", vec, vec)


def _lap_grad_at_edges(mesh, dofmap, c_loc, tris, pts):
    """(Lap u) grad u from the side `tris` at edge points (ne, nq, 2)."""
    tab = basis_tables(mesh, SpaceTag.MORLEY)
    H = np.einsum("tjab,tj->tab", tab.hess, c_loc)
    lap = H[:, 0, 0] + H[:, 1, 1]
    g = tab.grads_at(tris, pts)                    # (ne, nq, 6, 2)
    grad = np.einsum("eqjd,ej->eqd", g, c_loc[tris])
    return lap[tris][:, None, None] * grad


def estimate_ns_morley(mesh, dofmap: DofMap, u_M: DiscreteFunction, f,
                       osc_k: int = 0) -> EstimatorReport:
    if dofmap.space is not SpaceTag.MORLEY or u_M.n_components != 1:
        raise ValueError("estimate_ns_morley needs a scalar Morley function")
    geom = geometry(mesh)
    cu = local_coefficients(dofmap, u_M)

    rule = quad_triangle(ESTIMATOR_VOLUME_DEGREE)
    xq = physical_points(mesh, rule.points)
    wdx = 2.0 * geom.area[:, None] * rule.weights
    fq = f.value(xq) if hasattr(f, "value") else f(xq)
    # curl(-Lap u grad u) = -grad(Lap u) x grad u = 0 elementwise for P2
    eta_K_sq = geom.h_T ** 4 * (wdx * fq ** 2).sum(axis=1)

    t_plus, t_minus = _edge_sides(mesh)
    H = _hessians(mesh, dofmap, cu)
    eta_E_sq = _hessian_jump_term(mesh, geom, H, t_plus, t_minus)

    erule = quad_edge(ESTIMATOR_EDGE_DEGREE)
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    pts = a[:, None, :] + erule.points[None, :, None] * (b - a)[:, None, :]
    w_plus = _lap_grad_at_edges(mesh, dofmap, cu, t_plus, pts)
    w_minus = np.zeros_like(w_plus)
    interior = t_minus >= 0
    w_minus[interior] = _lap_grad_at_edges(mesh, dofmap, cu,
                                           t_minus[interior], pts[interior])
    jump = w_plus - w_minus
    avg = np.where(interior[:, None, None], 0.5 * (w_plus + w_minus), w_plus)
    jt = np.einsum("eqd,ed->eq", jump, geom.tau_E)
    at = np.einsum("eqd,ed->eq", avg, geom.tau_E)
    jump_sq = geom.h_E ** 3 * (geom.h_E * (jt ** 2 @ erule.weights))
    avg_sq = geom.h_E ** 3 * (geom.h_E * (at ** 2 @ erule.weights))
    eta_E_sq = eta_E_sq + jump_sq + avg_sq

    _, osc = oscillation(mesh, f, k=osc_k, p=2)
    return EstimatorReport(eta_K_sq=eta_K_sq, eta_E_sq=eta_E_sq,
                           avg_term_S_sq=float(avg_sq.sum()),
                           osc_sq=float(osc ** 2),
                           eta_total=float(np.sqrt(eta_K_sq.sum()
                                                   + eta_E_sq.sum())))


def estimate_vk_morley(mesh, dofmap: DofMap, Psi: DiscreteFunction, f,
                       g=None, osc_k: int = 0) -> EstimatorReport:
    if dofmap.space is not SpaceTag.MORLEY or Psi.n_components != 2:
        raise ValueError("estimate_vk_morley needs a Morley component pair")
    geom = geometry(mesh)
    cu = local_coefficients(dofmap, Psi, 0)
    cv = local_coefficients(dofmap, Psi, 1)
    Hu = _hessians(mesh, dofmap, cu)
    Hv = _hessians(mesh, dofmap, cv)

    def bracket(Ha, Hb):
        return (Ha[:, 0, 0] * Hb[:, 1, 1] + Ha[:, 1, 1] * Hb[:, 0, 0]
                - 2.0 * Ha[:, 0, 1] * Hb[:, 0, 1])

    buv = bracket(Hu, Hv)
    buu = bracket(Hu, Hu)

    rule = quad_triangle(ESTIMATOR_VOLUME_DEGREE)
    xq = physical_points(mesh, rule.points)
    wdx = 2.0 * geom.area[:, None] * rule.weights
    fq = f.value(xq) if hasattr(f, "value") else f(xq)
    res1 = buv[:, None] + fq
    if g is not None:
        gq = g.value(xq) if hasattr(g, "value") else g(xq)
        res2 = buu[:, None] - 2.0 * gq
    else:
        res2 = np.broadcast_to(buu[:, None], fq.shape)
    eta_K_sq = geom.h_T ** 4 * ((wdx * res1 ** 2).sum(axis=1)
                                + (wdx * res2 ** 2).sum(axis=1))

    t_plus, t_minus = _edge_sides(mesh)
    eta_E_sq = (_hessian_jump_term(mesh, geom, Hu, t_plus, t_minus)
                + _hessian_jump_term(mesh, geom, Hv, t_plus, t_minus))

    _, osc_f = oscillation(mesh, f, k=osc_k, p=2)
    osc_sq = osc_f ** 2
    if g is not None:
        _, osc_g = oscillation(mesh, g, k=osc_k, p=2)
        osc_sq += osc_g ** 2
    return EstimatorReport(eta_K_sq=eta_K_sq, eta_E_sq=eta_E_sq,
                           avg_term_S_sq=0.0, osc_sq=float(osc_sq),
                           eta_total=float(np.sqrt(eta_K_sq.sum()
                                                   + eta_E_sq.sum())))


def cr_apriori_terms(mesh, u_exact, problem: ProblemSpec, degree: int = 6):
    """Diagnostic terms || p - Pi_0 p || with p = A grad(u) + u b, and
    osc_1(f - gamma u), sampled from the exact solution."""
    if problem.kind is not ProblemKind.SECOND_ORDER_CR:
        raise ValueError("cr_apriori_terms applies to the CR problem")
    geom = geometry(mesh)
    rule = quad_triangle(degree)
    xq = physical_points(mesh, rule.points)
    wdx = 2.0 * geom.area[:, None] * rule.weights

    grad = u_exact.gradient(xq)
    val = u_exact.value(xq)
    p = np.einsum("tqab,tqb->tqa", problem.A(xq), grad) if problem.A is not None else grad.copy()
    if problem.b is not None:
        p = p + val[..., None] * problem.b(xq)
    mean = (wdx[..., None] * p).sum(axis=1) / geom.area[:, None]
    diff = p - mean[:, None, :]
    p_term = float(np.sqrt((wdx * np.einsum("tqa,tqa->tq", diff, diff)).sum()))

    def data(pts):
        out = problem.f(pts)
        if problem.gamma is not None:
            out = out - problem.gamma(pts) * u_exact.value(pts)
        return out

    _, osc1 = oscillation(mesh, data, k=1, p=1, degree=degree)
    return p_term, osc1


def broken_energy_error(mesh, dofmap, problem, U: DiscreteFunction, exact,
                        degree: int = 6):
    """Broken energy error against a manufactured solution: the piecewise H^2
    seminorm distance for Morley (summed over components), the A-weighted
    piecewise H^1 distance for CR."""
    geom = geometry(mesh)
    rule = quad_triangle(degree)
    xq = physical_points(mesh, rule.points)
    wdx = 2.0 * geom.area[:, None] * rule.weights
    fields = exact if isinstance(exact, (tuple, list)) else (exact,)
    total = 0.0
    if dofmap.space is SpaceTag.MORLEY:
        for comp, fld in enumerate(fields):
            H = _hessians(mesh, dofmap, local_coefficients(dofmap, U, comp))
            diff = fld.hessian(xq) - H[:, None, :, :]
            total += (wdx * np.einsum("tqab,tqab->tq", diff, diff)).sum()
    else:
        tab = basis_tables(mesh, dofmap.space)
        cu = local_coefficients(dofmap, U)
        gh = np.einsum("tjd,tj->td", tab.grads_at(
            np.arange(mesh.n_triangles), mesh.vertices[mesh.triangles][:, 0]), cu)
        diff = fields[0].gradient(xq) - gh[:, None, :]
        if problem is not None and problem.A is not None:
            Adiff = np.einsum("tqab,tqb->tqa", problem.A(xq), diff)
        else:
            Adiff = diff
        total += (wdx * np.einsum("tqa,tqa->tq", diff, Adiff)).sum()
    return float(np.sqrt(total))


def estimate(mesh, dofmap, problem: ProblemSpec, U: DiscreteFunction,
             exact=None) -> EstimatorReport:
    """Problem-dispatching estimate step used by the adaptive loop.

    For the CR problem the a priori diagnostic terms (which need the exact
    solution) stand in as element indicators; without an exact solution the
    CR indicators are uniform."""
    kind = problem.kind
    if kind is ProblemKind.NAVIER_STOKES_MORLEY:
        return estimate_ns_morley(mesh, dofmap, U, problem.f)
    if kind is ProblemKind.VON_KARMAN_MORLEY:
        return estimate_vk_morley(mesh, dofmap, U, problem.f, problem.g)
    geom = geometry(mesh)
    ne = mesh.n_edges
    if exact is not None:
        fields = exact if isinstance(exact, (tuple, list)) else (exact,)
        rule = quad_triangle(6)
        xq = physical_points(mesh, rule.points)
        wdx = 2.0 * geom.area[:, None] * rule.weights
        grad = fields[0].gradient(xq)
        val = fields[0].value(xq)
        p = np.einsum("tqab,tqb->tqa", problem.A(xq), grad) if problem.A is not None else grad.copy()
        if problem.b is not None:
            p = p + val[..., None] * problem.b(xq)
        mean = (wdx[..., None] * p).sum(axis=1) / geom.area[:, None]
        diff = p - mean[:, None, :]
        per_el = (wdx * np.einsum("tqa,tqa->tq", diff, diff)).sum(axis=1)

        def data(pts):
            out = problem.f(pts)
            if problem.gamma is not None:
                out = out - problem.gamma(pts) * fields[0].value(pts)
            return out

        osc_el, osc1 = oscillation(mesh, data, k=1, p=1)
        eta_K_sq = per_el + osc_el
        osc_sq = float(osc1 ** 2)
    else:
        eta_K_sq = geom.area.copy()
        osc_sq = 0.0
    return EstimatorReport(eta_K_sq=eta_K_sq, eta_E_sq=np.zeros(ne),
                           avg_term_S_sq=0.0, osc_sq=osc_sq,
                           eta_total=float(np.sqrt(eta_K_sq.sum())))
